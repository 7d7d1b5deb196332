use crate::error::{Error, Result};
use crate::outcome::{ResidualSet, RoundOutcome};
use crate::ratemodel;
use crate::scenario::Scenario;

use super::{HbMode, SessionSchedule, SessionProblem};

/// Exact latency, energies and residuals of `schedule`, without any
/// surrogate. Residuals are reported even when the schedule is infeasible.
pub fn evaluate(sch: &SessionSchedule, sc: &Scenario) -> Result<RoundOutcome> {
    let st = SessionProblem::new(sc, &sch.ordering, HbMode::PerUe)?;
    let s = st.s;
    let e_count = sc.num_hb();
    let dims_ok = sch.t_dl.len() == s
        && sch.t_ul.len() == s
        && sch.k_dl.len() == s
        && sch.k_ul.len() == s
        && sch.p_ul.len() == s
        && sch.k_ul.iter().chain(&sch.p_ul).all(|v| v.len() == s)
        && sch.k_hb_dl.len() == e_count
        && sch.k_hb_ul.len() == e_count
        && sch.k_hb_dl.iter().chain(&sch.k_hb_ul).all(|v| v.len() == s);
    if !dims_ok {
        return Err(Error::InvalidArgument("schedule dimensions do not match the scenario".into()));
    }
    let mut res = ResidualSet::default();
    let latency = sch.latency();
    let d = st.d;

    let mut cum = 0.0;
    for j in 0..s {
        cum += sch.k_dl[j] * sch.t_dl[j];
        res.push("dl_completion", (d - st.dl_rb_rate[j] * cum) / d);
    }
    let mut e_cm = vec![0.0; s];
    let mut e_cp = vec![0.0; s];
    for r in 0..s {
        let u = sch.ordering.ue(r);
        let mut bits = 0.0;
        for l in r..s {
            let (k, p, t) = (sch.k_ul[r][l], sch.p_ul[r][l], sch.t_ul[l]);
            bits += ratemodel::perspective_rate(k.max(0.0), p.max(0.0), st.ul_a[u], st.w) * t;
            e_cm[u] += p * t;
            res.push("power", (p - st.pmax) / st.pmax);
        }
        res.push("ul_completion", (d - bits) / d);
        let tau = sch.implied_compute_time(r);
        if st.tau_min[u] > 0.0 {
            res.push("compute_time", (st.tau_min[u] - tau) / st.tau_min[u]);
        }
        e_cp[u] = if st.e_coef[u] == 0.0 { 0.0 } else { st.e_coef[u] / (tau * tau) };
    }
    for j in 0..s {
        let used = sch.k_dl[j] + sch.k_hb_dl.iter().map(|v| v[j]).sum::<f64>();
        res.push("dl_rb", (used - st.k) / st.k);
        let used = (0..=j).map(|r| sch.k_ul[r][j]).sum::<f64>() + sch.k_hb_ul.iter().map(|v| v[j]).sum::<f64>();
        res.push("ul_rb", (used - st.k) / st.k);
    }
    let all = sch
        .t_dl
        .iter()
        .chain(&sch.t_ul)
        .chain(std::iter::once(&sch.t_idle))
        .map(|v| v / latency.max(f64::MIN_POSITIVE))
        .chain(sch.k_dl.iter().chain(sch.k_hb_dl.iter().flatten()).chain(sch.k_hb_ul.iter().flatten()).map(|v| v / st.k))
        .chain((0..s).flat_map(|r| (r..s).map(move |l| (r, l))).flat_map(|(r, l)| [sch.k_ul[r][l] / st.k, sch.p_ul[r][l] / st.pmax]));
    res.push("nonnegativity", all.fold(0.0, |m: f64, v| m.max(-v)));

    let mut hb_avg_rates = Vec::with_capacity(e_count);
    for e in 0..e_count {
        let c = st.hb_rb_rate[e];
        let idle = if st.hb_active() { st.idle_share(e) } else { 0.0 };
        let rb_time: f64 = (0..s)
            .map(|j| sch.k_hb_dl[e][j] * sch.t_dl[j] + sch.k_hb_ul[e][j] * sch.t_ul[j])
            .sum::<f64>()
            + idle * sch.t_idle;
        let avg = if latency > 0.0 { c * rb_time / latency } else { c * idle };
        hb_avg_rates.push(avg);
        if st.theta > 0.0 {
            res.push("hb_rate", (st.theta - avg) / st.theta);
        }
    }

    let e_tot: Vec<f64> = e_cp.iter().zip(&e_cm).map(|(a, b)| a + b).collect();
    let objective = latency + e_tot.iter().zip(&st.lambda).map(|(e, l)| e * l).sum::<f64>();
    Ok(RoundOutcome {
        latency,
        e_cp,
        e_cm,
        e_tot,
        hb_avg_rates,
        objective,
        residuals: res.into_map(),
    })
}
