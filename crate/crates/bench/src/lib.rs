//! Scenarios shared by the benchmarks.

use flround::{Overrides, Scenario};

/// Generated scenario with `s` FL UEs and `e` HB UEs. The workload is scaled
/// down so that one solve takes milliseconds rather than seconds.
pub fn scenario(seed: u64, s: usize, e: usize) -> Scenario {
    let ov: Overrides = [("S", s as f64), ("E", e as f64), ("D", 2e6), ("total_samples", 200.0 * s as f64)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    Scenario::generate(seed, &ov).expect("bench scenario")
}
