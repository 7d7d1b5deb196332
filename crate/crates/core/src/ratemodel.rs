//! Closed-form rates, times and energies. Every optimizer and simulator in
//! the crate goes through these functions.
//!
//! RB counts are continuous (nonnegative reals) everywhere.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::scenario::{FlWorkload, RadioConstants};

/// Per-RB SNR of a downlink at the base-station power.
pub fn dl_snr(gain_sq: f64, radio: &RadioConstants) -> f64 {
    radio.bs_power_per_rb * gain_sq / (radio.rb_bandwidth() * radio.noise_psd)
}

/// Downlink rate in bit/s on `rb_count` RBs. Linear in `rb_count`.
pub fn dl_rate(rb_count: f64, gain_sq: f64, radio: &RadioConstants) -> f64 {
    rb_count * dl_rate_per_rb(gain_sq, radio)
}

pub fn dl_rate_per_rb(gain_sq: f64, radio: &RadioConstants) -> f64 {
    radio.rb_bandwidth() * dl_snr(gain_sq, radio).ln_1p() / LN_2
}

/// RBs an HB UE needs in every slot to sustain `threshold` bit/s.
pub fn hb_reservation(threshold: f64, gain_sq: f64, radio: &RadioConstants) -> f64 {
    threshold / dl_rate_per_rb(gain_sq, radio)
}

/// Uplink SNR per unit power per unit RB: the `a` in `K W log2(1 + a p / K)`.
pub fn ul_snr_coeff(gain_sq: f64, radio: &RadioConstants) -> f64 {
    gain_sq / (radio.rb_bandwidth() * radio.noise_psd)
}

/// Uplink rate in bit/s: the UE spreads `power` over `rb_count` RBs.
/// Jointly concave in `(rb_count, power)`; zero at `rb_count = 0`.
pub fn ul_rate(rb_count: f64, power: f64, gain_sq: f64, radio: &RadioConstants) -> f64 {
    perspective_rate(rb_count, power, ul_snr_coeff(gain_sq, radio), radio.rb_bandwidth())
}

/// `K W log2(1 + a p / K)` with the continuous extension `0` at `K = 0`.
pub fn perspective_rate(k: f64, p: f64, a: f64, w: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    k * w * (a * p / k).ln_1p() / LN_2
}

/// Value, gradient `[d/dK, d/dp]` and Hessian of [`perspective_rate`] at
/// `k > 0`.
pub fn perspective_rate_derivs(k: f64, p: f64, a: f64, w: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let x = a * p / k;
    let c = w / LN_2;
    let value = c * k * x.ln_1p();
    let dk = c * (x.ln_1p() - x / (1.0 + x));
    let dp = c * a / (1.0 + x);
    let s = -c / (k * (1.0 + x) * (1.0 + x));
    let hess = [[s * x * x, -s * a * x], [-s * a * x, s * a * a]];
    (value, [dk, dp], hess)
}

/// Local-training time at CPU speed `f`.
pub fn compute_time(w: &FlWorkload, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::InvalidArgument(format!("CPU speed must be positive, got {f}")));
    }
    Ok(w.total_cycles() / f)
}

/// Local-training energy at CPU speed `f`.
pub fn compute_energy(w: &FlWorkload, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::InvalidArgument(format!("CPU speed must be positive, got {f}")));
    }
    Ok(w.kappa * w.total_cycles() * f * f)
}

/// Local-training energy expressed through the compute time instead of the
/// CPU speed: `kappa (alpha Theta)^3 / tau^2`.
pub fn compute_energy_for_time(w: &FlWorkload, tau: f64) -> f64 {
    w.energy_coeff() / (tau * tau)
}

/// Round latency: the slowest UE's download + compute + upload time.
pub fn round_latency(dl_times: &[f64], cp_times: &[f64], ul_times: &[f64]) -> f64 {
    assert!(dl_times.len() == cp_times.len() && cp_times.len() == ul_times.len());
    dl_times
        .iter()
        .zip(cp_times)
        .zip(ul_times)
        .map(|((a, b), c)| a + b + c)
        .fold(0.0, f64::max)
}
