use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::{ResidualSet, RoundOutcome};
use crate::ratemodel;
use crate::scenario::Scenario;

use super::MAX_SLOTS;

/// How the RBs left after the HB reservations are split among FL flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    /// Maximize the instantaneous sum rate.
    Msr,
    /// Maximize the smallest cumulative average rate.
    Mmr,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Msr => "msr",
            Policy::Mmr => "mmr",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Slot length in seconds; the scenario's TTI when `None`.
    pub delta: Option<f64>,
    /// Record one [`TimelineRow`] per slot and flow with RBs.
    pub timeline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub slot: u64,
    /// `hb_dl:<e>`, `fl_dl` or `fl_ul:<u>`.
    pub flow: String,
    pub rbs: f64,
    pub power: f64,
    pub bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub outcome: RoundOutcome,
    pub slots: u64,
    pub delta: f64,
    pub timeline: Vec<TimelineRow>,
}

/// Uplink flow at full power: rate as a function of RBs.
#[derive(Debug, Clone, Copy)]
struct UlCurve {
    /// `a p` of the perspective rate.
    ap: f64,
    w: f64,
}

impl UlCurve {
    fn rate(&self, k: f64) -> f64 {
        ratemodel::perspective_rate(k, self.ap, 1.0, self.w)
    }

    /// Rate ceiling as the RBs grow without bound.
    fn cap(&self) -> f64 {
        self.ap * self.w / LN_2
    }

    /// d rate / d K.
    fn marginal(&self, k: f64) -> f64 {
        let x = self.ap / k;
        self.w / LN_2 * (x.ln_1p() - x / (1.0 + x))
    }

    /// RBs at which the marginal rate equals `nu`.
    fn rbs_at_marginal(&self, nu: f64) -> f64 {
        // marginal in terms of x = ap / K is increasing in x
        let target = nu * LN_2 / self.w;
        let g = |x: f64| x.ln_1p() - x / (1.0 + x);
        let (mut lo, mut hi) = (0.0, 1.0);
        while g(hi) < target {
            hi *= 2.0;
            if hi > 1e300 {
                return 0.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        self.ap / (0.5 * (lo + hi))
    }

    /// RBs needed for `rate`, or `None` beyond the ceiling.
    fn rbs_for_rate(&self, rate: f64, guess: f64) -> Option<f64> {
        if rate <= 0.0 {
            return Some(0.0);
        }
        if rate >= self.cap() * (1.0 - 1e-12) {
            return None;
        }
        // Newton from the left converges monotonically on a concave
        // increasing function.
        let mut k = if guess > 0.0 { guess } else { 1.0 };
        while self.rate(k) > rate {
            k *= 0.5;
        }
        for _ in 0..100 {
            let step = (rate - self.rate(k)) / self.marginal(k);
            k += step;
            if step.abs() <= 1e-13 * k {
                break;
            }
        }
        Some(k)
    }
}

struct Flows {
    /// Bits received per FL UE on the broadcast.
    dl_bits: Vec<f64>,
    dl_done: Vec<bool>,
    ul_ready: Vec<Option<u64>>,
    ul_bits: Vec<f64>,
    ul_done: Vec<bool>,
    /// Slots each flow has been active, broadcast last.
    active_slots: Vec<u64>,
    /// Cumulative bits per flow as used by max-min fairness, broadcast last.
    cum_bits: Vec<f64>,
    guess: Vec<f64>,
}

/// Runs `policy` slot by slot until every FL UE has uploaded. Every HB UE
/// first gets its per-slot reservation; the rest goes to the active FL
/// flows, and to the HB UEs when no FL flow is active. Uplinks use full
/// power and local training runs at full CPU speed.
pub fn run_policy(sc: &Scenario, policy: Policy, opts: &SimOptions) -> Result<SimResult> {
    sc.validate()?;
    let radio = &sc.radio;
    let dt = opts.delta.unwrap_or(radio.tti_len);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("slot length must be positive, got {dt}")));
    }
    let s = sc.num_fl();
    let d = sc.model_bits();
    let hb = sc.hb_reservations();
    let hb_total: f64 = hb.iter().sum();
    let residual = radio.k() - hb_total;
    if !(residual > 0.0) {
        return Err(Error::Infeasible(format!("HB reservations need {hb_total:.4} of {} RBs", radio.k())));
    }
    let c: Vec<f64> = sc.fl_ues.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, radio)).collect();
    let hb_c: Vec<f64> = sc.hb_ues.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, radio)).collect();
    let pmax = radio.ue_max_power;
    let curves: Vec<UlCurve> = sc
        .fl_ues
        .iter()
        .map(|u| UlCurve {
            ap: ratemodel::ul_snr_coeff(u.channel_gain_sq, radio) * pmax,
            w: radio.rb_bandwidth(),
        })
        .collect();
    let compute_slots: Vec<u64> = sc
        .fl_ues
        .iter()
        .map(|u| slots_for(u.workload().min_compute_time(), dt))
        .collect();

    let mut st = Flows {
        dl_bits: vec![0.0; s],
        dl_done: vec![false; s],
        ul_ready: vec![None; s],
        ul_bits: vec![0.0; s],
        ul_done: vec![false; s],
        active_slots: vec![0; s + 1],
        cum_bits: vec![0.0; s + 1],
        guess: vec![0.0; s + 1],
    };
    let mut airtime = vec![0.0; s];
    let mut hb_bits = vec![0.0; hb.len()];
    let mut timeline = Vec::new();
    let mut msr_cache: Option<(Vec<bool>, Vec<f64>)> = None;
    let mut alloc = vec![0.0; s + 1];
    let mut slot: u64 = 0;

    while !st.ul_done.iter().all(|&v| v) {
        if slot >= MAX_SLOTS {
            return Err(Error::InvalidArgument(format!("simulation exceeded {MAX_SLOTS} slots")));
        }
        let bcast = st.dl_done.iter().any(|&v| !v);
        let ul_active: Vec<bool> = (0..s)
            .map(|u| !st.ul_done[u] && st.ul_ready[u].is_some_and(|r| r <= slot))
            .collect();
        if !bcast && !ul_active.iter().any(|&v| v) {
            // every FL UE is training: jump to the next upload start
            let next = st.ul_ready.iter().zip(&st.ul_done).filter(|(_, d)| !**d).filter_map(|(r, _)| *r).min();
            let next = next.expect("a pending upload has a ready slot");
            let span = if opts.timeline { 1 } else { next - slot };
            for (e, k) in hb.iter().enumerate() {
                let rbs = k + residual * k / hb_total;
                hb_bits[e] += hb_c[e] * rbs * dt * span as f64;
                if opts.timeline {
                    timeline.push(TimelineRow { slot, flow: format!("hb_dl:{e}"), rbs, power: 0.0, bits: hb_c[e] * rbs * dt });
                }
            }
            slot += span;
            continue;
        }
        // weakest UE still receiving sets the broadcast's rate per RB
        let c_b = (0..s).filter(|&j| !st.dl_done[j]).map(|j| c[j]).fold(f64::INFINITY, f64::min);
        alloc.fill(0.0);
        match policy {
            Policy::Msr => {
                let mut key = ul_active.clone();
                key.push(bcast);
                key.extend((0..s).map(|j| st.dl_done[j]));
                match &msr_cache {
                    Some((k, a)) if *k == key => alloc.copy_from_slice(a),
                    _ => {
                        msr_split(&curves, &ul_active, bcast.then_some(c_b), residual, &mut alloc);
                        msr_cache = Some((key, alloc.clone()));
                    }
                }
            }
            Policy::Mmr => {
                for u in 0..s {
                    if ul_active[u] {
                        st.active_slots[u] += 1;
                    }
                }
                if bcast {
                    st.active_slots[s] += 1;
                }
                mmr_split(&curves, &ul_active, bcast.then_some(c_b), residual, dt, &mut st, &mut alloc);
            }
        }

        let mut used = 0.0;
        if bcast {
            let kb = alloc[s];
            used += kb;
            st.cum_bits[s] += c_b * kb * dt;
            for j in 0..s {
                if st.dl_done[j] {
                    continue;
                }
                st.dl_bits[j] += c[j] * kb * dt;
                if st.dl_bits[j] >= d * (1.0 - 1e-12) {
                    st.dl_done[j] = true;
                    st.ul_ready[j] = Some(slot + 1 + compute_slots[j]);
                }
            }
            if opts.timeline && kb > 0.0 {
                timeline.push(TimelineRow { slot, flow: "fl_dl".into(), rbs: kb, power: 0.0, bits: c_b * kb * dt });
            }
        }
        for u in 0..s {
            if !ul_active[u] || alloc[u] <= 0.0 {
                continue;
            }
            let k = alloc[u];
            used += k;
            let rate = curves[u].rate(k);
            let need = d - st.ul_bits[u];
            let bits = (rate * dt).min(need);
            airtime[u] += if rate * dt >= need { need / rate } else { dt };
            st.ul_bits[u] += bits;
            st.cum_bits[u] += bits;
            if st.ul_bits[u] >= d * (1.0 - 1e-12) {
                st.ul_done[u] = true;
            }
            if opts.timeline {
                timeline.push(TimelineRow { slot, flow: format!("fl_ul:{u}"), rbs: k, power: pmax, bits });
            }
        }
        let left = (residual - used).max(0.0);
        for (e, k) in hb.iter().enumerate() {
            let rbs = k + left * k / hb_total;
            hb_bits[e] += hb_c[e] * rbs * dt;
            if opts.timeline {
                timeline.push(TimelineRow { slot, flow: format!("hb_dl:{e}"), rbs, power: 0.0, bits: hb_c[e] * rbs * dt });
            }
        }
        slot += 1;
    }

    let latency = slot as f64 * dt;
    let mut res = ResidualSet::default();
    let e_cp: Vec<f64> = sc
        .fl_ues
        .iter()
        .map(|u| ratemodel::compute_energy(u.workload(), u.workload().f_max))
        .collect::<Result<_>>()?;
    let e_cm: Vec<f64> = airtime.iter().map(|a| a * pmax).collect();
    for u in 0..s {
        res.push("dl_completion", (d - st.dl_bits[u]) / d);
        res.push("ul_completion", (d - st.ul_bits[u]) / d);
    }
    let hb_avg_rates: Vec<f64> = hb_bits.iter().map(|b| if latency > 0.0 { b / latency } else { 0.0 }).collect();
    if sc.hb_threshold > 0.0 {
        for r in &hb_avg_rates {
            res.push("hb_rate", (sc.hb_threshold - r) / sc.hb_threshold);
        }
    }
    let e_tot: Vec<f64> = e_cp.iter().zip(&e_cm).map(|(a, b)| a + b).collect();
    let objective = latency
        + e_tot
            .iter()
            .zip(&sc.fl_ues)
            .map(|(e, u)| e * u.workload().energy_weight)
            .sum::<f64>();
    Ok(SimResult {
        outcome: RoundOutcome {
            latency,
            e_cp,
            e_cm,
            e_tot,
            hb_avg_rates,
            objective,
            residuals: res.into_map(),
        },
        slots: slot,
        delta: dt,
        timeline,
    })
}

/// Whole slots covering `t` seconds.
pub(crate) fn slots_for(t: f64, dt: f64) -> u64 {
    let n = t / dt;
    // tolerate representation error of exact multiples
    (n * (1.0 - 1e-12)).ceil().max(0.0) as u64
}

/// Sum-rate split: equal marginal rates across uplinks, with the broadcast
/// (linear in its RBs) taking everything above its own per-RB rate.
fn msr_split(curves: &[UlCurve], ul_active: &[bool], bcast: Option<f64>, total: f64, alloc: &mut [f64]) {
    let s = curves.len();
    let ul: Vec<usize> = (0..s).filter(|&u| ul_active[u]).collect();
    if ul.is_empty() {
        if bcast.is_some() {
            alloc[s] = total;
        }
        return;
    }
    let demand = |nu: f64| ul.iter().map(|&u| curves[u].rbs_at_marginal(nu)).sum::<f64>();
    if let Some(c_b) = bcast {
        if demand(c_b) <= total {
            let mut used = 0.0;
            for &u in &ul {
                alloc[u] = curves[u].rbs_at_marginal(c_b);
                used += alloc[u];
            }
            alloc[s] = total - used;
            return;
        }
    }
    // level at which the uplinks alone use every RB
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while demand(hi) > total {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if demand(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let mut used = 0.0;
    for &u in &ul {
        alloc[u] = curves[u].rbs_at_marginal(hi);
        used += alloc[u];
    }
    // hand rounding leftovers to the flow with the largest share
    if let Some(&u) = ul.iter().max_by(|&&a, &&b| alloc[a].total_cmp(&alloc[b])) {
        alloc[u] += (total - used).max(0.0);
    }
}

/// Max-min split of this slot's RBs: the largest level `L` such that every
/// active flow can lift its cumulative average rate to `L` within the
/// budget.
fn mmr_split(
    curves: &[UlCurve],
    ul_active: &[bool],
    bcast: Option<f64>,
    total: f64,
    dt: f64,
    st: &mut Flows,
    alloc: &mut [f64],
) {
    let s = curves.len();
    let mut flows: Vec<usize> = (0..s).filter(|&u| ul_active[u]).collect();
    if bcast.is_some() {
        flows.push(s);
    }
    // rate flow i needs this slot to reach average L
    let need = |i: usize, l: f64, st: &Flows| -> f64 { (l * st.active_slots[i] as f64 - st.cum_bits[i] / dt).max(0.0) };
    let rbs = |i: usize, rate: f64, st: &Flows| -> Option<f64> {
        if i == s {
            Some(rate / bcast.unwrap())
        } else {
            curves[i].rbs_for_rate(rate, st.guess[i])
        }
    };
    let demand = |l: f64, st: &Flows| -> f64 {
        let mut sum = 0.0;
        for &i in &flows {
            match rbs(i, need(i, l, st), st) {
                Some(k) => sum += k,
                None => return f64::INFINITY,
            }
        }
        sum
    };
    let (mut lo, mut hi) = (0.0_f64, 1e3_f64);
    while demand(hi, st) <= total {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if demand(mid, st) <= total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    for &i in &flows {
        let k = rbs(i, need(i, lo, st), st).unwrap_or(0.0);
        alloc[i] = k;
        st.guess[i] = k;
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::scenario::Overrides;
    use crate::sim::timeline_csv;

    fn scenario(seed: u64, pairs: &[(&str, f64)]) -> Scenario {
        let ov: Overrides = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Scenario::generate(seed, &ov).unwrap()
    }

    /// A small cell that finishes in a few thousand slots.
    fn small(seed: u64, s: usize, e: usize) -> Scenario {
        scenario(seed, &[("S", s as f64), ("E", e as f64), ("D", 2e6), ("total_samples", 200.0)])
    }

    #[test]
    fn lone_ue_matches_the_closed_form() {
        for seed in 1..=5 {
            let sc = scenario(seed, &[("S", 1.0), ("E", 0.0)]);
            let r = &sc.radio;
            let ue = &sc.fl_ues[0];
            let d = sc.model_bits();
            let dl = d / ratemodel::dl_rate(r.k(), ue.channel_gain_sq, r);
            let ul = d / ratemodel::ul_rate(r.k(), r.ue_max_power, ue.channel_gain_sq, r);
            let tau = ue.workload().min_compute_time();
            let dt = r.tti_len;
            let want = (dl / dt).ceil() + (tau / dt).ceil() + (ul / dt).ceil();
            for policy in [Policy::Msr, Policy::Mmr] {
                let out = run_policy(&sc, policy, &SimOptions::default()).unwrap();
                assert_eq!(out.slots as f64, want, "seed {seed} {policy}");
                assert!((out.outcome.latency - want * dt).abs() <= 1e-9 * want * dt);
            }
        }
    }

    #[test]
    fn slots_respect_budget_and_conserve_bits() {
        let sc = small(3, 3, 4);
        let k = sc.radio.k();
        for policy in [Policy::Msr, Policy::Mmr] {
            let out = run_policy(&sc, policy, &SimOptions { delta: None, timeline: true }).unwrap();
            let mut per_slot: BTreeMap<u64, f64> = BTreeMap::new();
            let mut per_flow: BTreeMap<String, f64> = BTreeMap::new();
            for row in &out.timeline {
                *per_slot.entry(row.slot).or_default() += row.rbs;
                *per_flow.entry(row.flow.clone()).or_default() += row.bits;
                assert!(row.rbs >= 0.0 && row.bits >= 0.0);
            }
            assert_eq!(per_slot.len() as u64, out.slots);
            for (slot, used) in &per_slot {
                assert!(*used <= k + 1e-9, "{policy} slot {slot}: {used}");
            }
            let d = sc.model_bits();
            for u in 0..3 {
                let sent = per_flow[&format!("fl_ul:{u}")];
                assert!((sent - d).abs() <= 1e-9 * d, "{policy} UE {u}: {sent}");
            }
            for e in 0..4 {
                let avg = per_flow[&format!("hb_dl:{e}")] / out.outcome.latency;
                let got = out.outcome.hb_avg_rates[e];
                assert!((avg - got).abs() <= 1e-9 * got);
            }
            assert!(out.outcome.is_feasible(1e-9), "{:?}", out.outcome.residuals);
        }
    }

    #[test]
    fn hb_floor_holds_under_both_policies() {
        for seed in 1..=3 {
            let sc = scenario(seed, &[]);
            for policy in [Policy::Msr, Policy::Mmr] {
                let out = run_policy(&sc, policy, &SimOptions::default()).unwrap();
                for r in &out.outcome.hb_avg_rates {
                    assert!(*r >= sc.hb_threshold * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn full_power_energy() {
        let sc = small(2, 2, 1);
        let out = run_policy(&sc, Policy::Msr, &SimOptions::default()).unwrap();
        let pmax = sc.radio.ue_max_power;
        for (u, ue) in sc.fl_ues.iter().enumerate() {
            let w = ue.workload();
            assert_eq!(out.outcome.e_cp[u], ratemodel::compute_energy(w, w.f_max).unwrap());
            // at least the airtime of a full-spectrum upload
            let fastest = sc.model_bits() / ratemodel::ul_rate(sc.radio.k(), pmax, ue.channel_gain_sq, &sc.radio);
            assert!(out.outcome.e_cm[u] >= pmax * fastest * (1.0 - 1e-9));
        }
    }

    #[test]
    fn timeline_csv_has_one_line_per_row() {
        let sc = small(1, 1, 1);
        let out = run_policy(&sc, Policy::Mmr, &SimOptions { delta: Some(2e-3), timeline: true }).unwrap();
        let csv = timeline_csv(&out.timeline);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("slot,flow,rbs,power_w,bits"));
        assert_eq!(lines.count(), out.timeline.len());
        assert_eq!(out.delta, 2e-3);
    }

    #[test]
    fn bad_slot_length_and_saturated_cell() {
        let sc = small(1, 1, 1);
        assert!(run_policy(&sc, Policy::Msr, &SimOptions { delta: Some(0.0), timeline: false }).is_err());
        let full = scenario(1, &[("S", 1.0), ("theta", 1e6)]);
        assert!(matches!(run_policy(&full, Policy::Msr, &SimOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn ul_curve_inverses() {
        let c = UlCurve { ap: 3e3, w: 720e3 };
        for k in [0.01, 0.3, 1.0, 7.5] {
            let back = c.rbs_at_marginal(c.marginal(k));
            assert!((back - k).abs() <= 1e-9 * k);
            let back = c.rbs_for_rate(c.rate(k), 1.0).unwrap();
            assert!((back - k).abs() <= 1e-9 * k);
        }
        assert!(c.rbs_for_rate(c.cap() * 1.01, 1.0).is_none());
    }

    #[test]
    fn slot_rounding() {
        assert_eq!(slots_for(0.0, 1e-3), 0);
        assert_eq!(slots_for(3e-3, 1e-3), 3);
        assert_eq!(slots_for(3.0001e-3, 1e-3), 4);
    }
}
