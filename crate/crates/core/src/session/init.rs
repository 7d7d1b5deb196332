use crate::error::{Error, Result};
use crate::scenario::Scenario;

use super::{HbMode, Ordering, SessionSchedule, SessionProblem};

/// Relative margin by which the starting point clears every constraint.
const MARGIN: f64 = 1e-6;
/// Shortest session the starting point uses.
const MIN_SESSION: f64 = 1e-6;

/// A strictly feasible schedule built forward in time: every HB UE keeps its
/// per-slot reservation in every session, the FL broadcast takes the rest of
/// the downlink spectrum, uplink UEs split the rest equally at half power,
/// and all UEs compute at full speed.
pub fn init_feasible(sc: &Scenario, ordering: &Ordering) -> Result<SessionSchedule> {
    let st = SessionProblem::new(sc, ordering, HbMode::PerUe)?;
    let s = st.s;
    let hb: Vec<f64> = st.hb_k.iter().map(|k| k * (1.0 + MARGIN)).collect();
    let residual = (st.k - hb.iter().sum::<f64>()) * (1.0 - MARGIN);
    if !(residual > 0.0) {
        return Err(Error::Infeasible(format!(
            "HB reservations need {:.4} of {} RBs",
            st.hb_total(),
            st.k
        )));
    }

    let mut t_dl = vec![0.0; s];
    let mut done = vec![0.0; s];
    let mut elapsed = 0.0;
    for j in 0..s {
        let need = st.d / (st.dl_rb_rate[j] * residual) * (1.0 + MARGIN);
        t_dl[j] = (need - elapsed).max(MIN_SESSION);
        elapsed += t_dl[j];
        done[j] = elapsed;
    }
    let dl_end = elapsed;
    let ready = |u: usize| done[u] + st.tau_min[u] * (1.0 + MARGIN) + MIN_SESSION;

    let t_idle = (ready(ordering.ue(0)) - dl_end).max(MIN_SESSION);
    let mut starts = vec![dl_end + t_idle; s];
    for r in 1..s {
        starts[r] = (starts[r - 1] + MIN_SESSION).max(ready(ordering.ue(r)));
    }
    let p = st.pmax / 2.0;
    let mut k_ul = vec![vec![0.0; s]; s];
    let mut p_ul = vec![vec![0.0; s]; s];
    for l in 0..s {
        for r in 0..=l {
            k_ul[r][l] = residual / (l + 1) as f64;
            p_ul[r][l] = p;
        }
    }
    let mut t_ul = vec![0.0; s];
    for l in 0..s.saturating_sub(1) {
        t_ul[l] = starts[l + 1] - starts[l];
    }
    // the last session runs until every UE has its upload through
    let mut last: f64 = MIN_SESSION;
    for r in 0..s {
        let sent: f64 = (r..s - 1).map(|l| st.ul_norm_rate(r, k_ul[r][l], p) * t_ul[l]).sum();
        let left = 1.0 - sent;
        if left > 0.0 {
            last = last.max(left / st.ul_norm_rate(r, k_ul[r][s - 1], p) * (1.0 + MARGIN));
        }
    }
    t_ul[s - 1] = last;

    Ok(SessionSchedule {
        ordering: ordering.clone(),
        t_dl,
        t_idle,
        t_ul,
        k_dl: vec![residual; s],
        k_hb_dl: hb.iter().map(|&k| vec![k; s]).collect(),
        k_ul,
        p_ul,
        k_hb_ul: hb.iter().map(|&k| vec![k; s]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Overrides;
    use crate::session::evaluate;

    fn scenario(pairs: &[(&str, f64)]) -> Scenario {
        let ov: Overrides = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Scenario::generate(1, &ov).unwrap()
    }

    #[test]
    fn default_start_is_strictly_feasible() {
        let sc = scenario(&[]);
        for o in [Ordering::identity(10), Ordering::new((0..10).rev().collect()).unwrap()] {
            let init = init_feasible(&sc, &o).unwrap();
            let out = evaluate(&init, &sc).unwrap();
            for (family, v) in &out.residuals {
                // unused triangle entries sit at exactly zero
                if family == "nonnegativity" {
                    assert!(*v <= 0.0);
                } else {
                    assert!(*v < 0.0, "{family}: {v}");
                }
            }
        }
    }

    #[test]
    fn without_a_floor_the_broadcast_takes_everything() {
        let sc = scenario(&[("theta", 0.0)]);
        let init = init_feasible(&sc, &Ordering::identity(10)).unwrap();
        let k = sc.radio.k();
        assert!(init.k_dl.iter().all(|&v| v >= k * (1.0 - 1e-5)));
        assert!(init.k_hb_dl.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn floor_beyond_the_spectrum_is_infeasible() {
        let sc = scenario(&[("theta", 1e6)]);
        assert!(sc.hb_reservation_total() >= sc.radio.k());
        assert!(matches!(init_feasible(&sc, &Ordering::identity(10)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_ue_waits_in_the_idle_gap() {
        let sc = scenario(&[("S", 1.0)]);
        let init = init_feasible(&sc, &Ordering::identity(1)).unwrap();
        let tau = sc.fl_ues[0].workload().min_compute_time();
        assert!(init.implied_compute_time(0) >= tau);
        assert!((init.t_idle - tau) / tau <= 1e-5);
    }
}
