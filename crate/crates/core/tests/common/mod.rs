#![allow(dead_code)]

use flround::ratemodel;
use flround::session::{Ordering, SessionSchedule};
use flround::{Overrides, Scenario};
use rayon::prelude::*;

pub fn scenario(seed: u64, pairs: &[(&str, f64)]) -> Scenario {
    let ov: Overrides = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Scenario::generate(seed, &ov).unwrap()
}

/// Every FL UE gets the median UE's channel and an equal share of the
/// samples.
pub fn homogeneous(mut sc: Scenario) -> Scenario {
    let s = sc.num_fl();
    let mid = sc.fl_ues[s / 2].clone();
    let share = sc.fl_ues.iter().map(|u| u.workload().local_samples).sum::<u64>() / s as u64;
    for ue in sc.fl_ues.iter_mut() {
        ue.channel_gain_sq = mid.channel_gain_sq;
        ue.position = mid.position;
        ue.workload.as_mut().unwrap().local_samples = share;
    }
    sc
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub const LATTICE: usize = 10;

fn grid(lo: f64, hi: f64) -> [f64; LATTICE] {
    std::array::from_fn(|i| lo + (hi - lo) * i as f64 / (LATTICE - 1) as f64)
}

/// Lattice point of the two-UE, one-HB-UE session problem.
#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub ordering: [usize; 2],
    pub h_dl: f64,
    pub h_ul: f64,
    /// Share of the second uplink session's FL RBs held by the rank-0 UE.
    pub share: f64,
    pub p: [f64; 3],
    /// Compute time stretch of each rank over its minimum.
    pub stretch: [f64; 2],
}

struct Consts {
    k: f64,
    d: f64,
    pmax: f64,
    c: [f64; 2],
    c_hb: f64,
    theta: f64,
    tau_min: [f64; 2],
    e_coef: [f64; 2],
    lambda: [f64; 2],
    gain: [f64; 2],
}

/// Durations fixed by a lattice point: each session as short as its
/// completion requirement allows.
fn durations(q: &Point, k: &Consts, sc: &Scenario) -> Option<([f64; 2], f64, [f64; 2], f64)> {
    let [a, b] = q.ordering;
    let kd = k.k - q.h_dl;
    let ku = k.k - q.h_ul;
    if kd <= 0.0 || ku <= 0.0 {
        return None;
    }
    let t0 = k.d / (k.c[0] * kd);
    let t_dl = [t0, (k.d / (k.c[1] * kd) - t0).max(0.0)];
    let after = |u: usize| if u == 0 { t_dl[1] } else { 0.0 };
    let t_idle = (k.tau_min[a] * (1.0 + q.stretch[0]) - after(a)).max(0.0);
    let t_ul0 = (k.tau_min[b] * (1.0 + q.stretch[1]) - after(b) - t_idle).max(0.0);
    let rate = |u: usize, rbs: f64, p: f64| ratemodel::ul_rate(rbs, p, k.gain[u], &sc.radio);
    let left_a = k.d - rate(a, ku, q.p[0]) * t_ul0;
    let ra1 = rate(a, q.share * ku, q.p[1]);
    let rb1 = rate(b, (1.0 - q.share) * ku, q.p[2]);
    let need_a = if left_a <= 0.0 {
        0.0
    } else if ra1 > 0.0 {
        left_a / ra1
    } else {
        return None;
    };
    if !(rb1 > 0.0) {
        return None;
    }
    let t_ul1 = need_a.max(k.d / rb1);
    Some((t_dl, t_idle, [t_ul0, t_ul1], ku))
}

fn objective(q: &Point, k: &Consts, sc: &Scenario) -> Option<f64> {
    let (t_dl, t_idle, t_ul, _) = durations(q, k, sc)?;
    let [a, b] = q.ordering;
    let total = t_dl[0] + t_dl[1] + t_idle + t_ul[0] + t_ul[1];
    let served = k.c_hb * (q.h_dl * (t_dl[0] + t_dl[1]) + q.h_ul * (t_ul[0] + t_ul[1]) + k.k * t_idle);
    if served < k.theta * total {
        return None;
    }
    let after = |u: usize| if u == 0 { t_dl[1] } else { 0.0 };
    let tau_a = after(a) + t_idle;
    let tau_b = after(b) + t_idle + t_ul[0];
    let energy_a = k.e_coef[a] / (tau_a * tau_a) + q.p[0] * t_ul[0] + if q.share > 0.0 { q.p[1] * t_ul[1] } else { 0.0 };
    let energy_b = k.e_coef[b] / (tau_b * tau_b) + q.p[2] * t_ul[1];
    Some(total + k.lambda[a] * energy_a + k.lambda[b] * energy_b)
}

/// The session schedule of a lattice point.
pub fn schedule_of(q: &Point, sc: &Scenario) -> SessionSchedule {
    let k = consts(sc);
    let (t_dl, t_idle, t_ul, ku) = durations(q, &k, sc).expect("feasible lattice point");
    let p1 = if q.share > 0.0 { q.p[1] } else { 0.0 };
    SessionSchedule {
        ordering: Ordering::new(q.ordering.to_vec()).unwrap(),
        t_dl: t_dl.to_vec(),
        t_idle,
        t_ul: t_ul.to_vec(),
        k_dl: vec![k.k - q.h_dl; 2],
        k_hb_dl: vec![vec![q.h_dl; 2]],
        k_ul: vec![vec![ku, q.share * ku], vec![0.0, (1.0 - q.share) * ku]],
        p_ul: vec![vec![q.p[0], p1], vec![0.0, q.p[2]]],
        k_hb_ul: vec![vec![q.h_ul; 2]],
    }
}

fn consts(sc: &Scenario) -> Consts {
    assert_eq!((sc.num_fl(), sc.num_hb()), (2, 1));
    let r = &sc.radio;
    let w = |u: usize| sc.fl_ues[u].workload();
    Consts {
        k: r.k(),
        d: sc.model_bits(),
        pmax: r.ue_max_power,
        c: std::array::from_fn(|u| ratemodel::dl_rate_per_rb(sc.fl_ues[u].channel_gain_sq, r)),
        c_hb: ratemodel::dl_rate_per_rb(sc.hb_ues[0].channel_gain_sq, r),
        theta: sc.hb_threshold,
        tau_min: std::array::from_fn(|u| w(u).min_compute_time()),
        e_coef: std::array::from_fn(|u| w(u).energy_coeff()),
        lambda: std::array::from_fn(|u| w(u).energy_weight),
        gain: std::array::from_fn(|u| sc.fl_ues[u].channel_gain_sq),
    }
}

/// Exhaustive search over a 10-point lattice on each free axis: HB RBs in
/// the downlink and uplink sessions, the uplink RB share in the shared
/// session, the three uplink powers and the compute stretch of each UE,
/// for both orderings. Durations are set to the shortest the completion
/// requirements allow; infeasible points are skipped.
pub fn lattice_search(sc: &Scenario) -> (f64, Point) {
    let k = consts(sc);
    let hs = grid(0.0, 0.9 * k.k);
    let shares = grid(0.0, 1.0);
    let ps = grid(0.1 * k.pmax, k.pmax);
    let stretches = grid(0.0, 0.9);
    let mut outer = Vec::new();
    for ordering in [[0, 1], [1, 0]] {
        for &h_dl in &hs {
            for &h_ul in &hs {
                outer.push((ordering, h_dl, h_ul));
            }
        }
    }
    outer
        .into_par_iter()
        .map(|(ordering, h_dl, h_ul)| {
            let mut best = (f64::INFINITY, None);
            for &share in &shares {
                for &p0 in &ps {
                    for &p1 in &ps {
                        for &p2 in &ps {
                            for &s0 in &stretches {
                                for &s1 in &stretches {
                                    let q = Point { ordering, h_dl, h_ul, share, p: [p0, p1, p2], stretch: [s0, s1] };
                                    if let Some(v) = objective(&q, &k, sc) {
                                        if v < best.0 {
                                            best = (v, Some(q));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            best
        })
        .filter_map(|(v, q)| q.map(|q| (v, q)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("some lattice point is feasible")
}
