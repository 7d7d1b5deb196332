use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratemodel;
use crate::scenario::Scenario;
use crate::session::SessionSchedule;

use super::policy::slots_for;

/// Relative slack below which a check is listed as violated.
const VIOLATION_TOL: f64 = 1e-9;
/// Share of the model a UE must hold to count as having downloaded it.
const DONE_FRACTION: f64 = 1.0 - 1e-6;

/// One audited requirement. `slack` is relative to the requirement:
/// negative means violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub family: String,
    /// UE, session or slot the check refers to.
    pub index: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub delta: f64,
    pub slots: u64,
    /// Whole slots times the slot length.
    pub latency: f64,
    /// Smallest slack of each check family.
    pub worst_by_family: BTreeMap<String, f64>,
    pub worst_slack: f64,
    pub violations: Vec<Check>,
}

impl ReplayReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_slack >= -tol
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Default)]
struct Audit {
    checks: Vec<Check>,
}

impl Audit {
    fn push(&mut self, family: &str, index: usize, slack: f64) {
        self.checks.push(Check { family: family.into(), index, slack });
    }
}

/// Slot lengths of a session of `t` seconds: whole slots, the last one
/// shortened to the time actually scheduled.
fn session_slots(t: f64, dt: f64) -> (u64, f64) {
    if t <= 0.0 {
        return (0, 0.0);
    }
    let n = slots_for(t, dt).max(1);
    (n, t - (n - 1) as f64 * dt)
}

/// Lays `schedule` onto slots of length `delta` (the scenario's TTI when
/// `None`) and audits it against the slot-level round model: bits delivered
/// in each direction, the per-slot RB budget, uplink power, each HB UE's
/// average rate over the stretched round, that no upload starts before its
/// UE has downloaded the model and trained on it, and the slotted round
/// length against the schedule's own latency.
///
/// Every session lasts whole slots; its last slot carries only the bits of
/// the time the session actually had. The HB UEs share all RBs during the
/// idle gap in proportion to their reservations.
pub fn replay_schedule(schedule: &SessionSchedule, sc: &Scenario, delta: Option<f64>) -> Result<ReplayReport> {
    let dt = delta.unwrap_or(sc.radio.tti_len);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("slot length must be positive, got {dt}")));
    }
    let s = sc.num_fl();
    let e_count = sc.num_hb();
    if schedule.t_dl.len() != s
        || schedule.t_ul.len() != s
        || schedule.k_hb_dl.len() != e_count
        || schedule.k_hb_ul.len() != e_count
    {
        return Err(Error::InvalidArgument("schedule dimensions do not match the scenario".into()));
    }
    let radio = &sc.radio;
    let k = radio.k();
    let d = sc.model_bits();
    let pmax = radio.ue_max_power;
    let c: Vec<f64> = sc.fl_ues.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, radio)).collect();
    let hb_c: Vec<f64> = sc.hb_ues.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, radio)).collect();
    let hb_k = sc.hb_reservations();
    let hb_total: f64 = hb_k.iter().sum();
    let ord = &schedule.ordering;

    let mut audit = Audit::default();
    let mut slot: u64 = 0;
    let mut dl_bits = vec![0.0; s];
    let mut dl_done: Vec<Option<u64>> = vec![None; s];
    let mut ul_bits = vec![0.0; s];
    let mut ul_start: Vec<Option<u64>> = vec![None; s];
    let mut hb_bits = vec![0.0; e_count];

    for j in 0..s {
        let (n, last) = session_slots(schedule.t_dl[j], dt);
        if n == 0 {
            continue;
        }
        let kd = schedule.k_dl[j];
        let used = kd + (0..e_count).map(|e| schedule.k_hb_dl[e][j]).sum::<f64>();
        audit.push("slot_budget", j, (k - used) / k);
        let air = (n - 1) as f64 * dt + last;
        for u in 0..s {
            if dl_done[u].is_some() {
                continue;
            }
            let rate = c[u] * kd.max(0.0);
            let before = dl_bits[u];
            dl_bits[u] += rate * air;
            if dl_bits[u] >= d * DONE_FRACTION {
                // slot inside this session in which the model is complete
                let need = d * DONE_FRACTION - before;
                let at = if rate > 0.0 { (need / (rate * dt)).ceil().max(1.0) as u64 } else { n };
                dl_done[u] = Some(slot + at.min(n) - 1);
            }
        }
        for e in 0..e_count {
            hb_bits[e] += hb_c[e] * schedule.k_hb_dl[e][j].max(0.0) * air;
        }
        slot += n;
    }
    let dl_end_slot = slot;

    let (n_idle, last_idle) = session_slots(schedule.t_idle, dt);
    if n_idle > 0 && hb_total > 0.0 {
        let air = (n_idle - 1) as f64 * dt + last_idle;
        for e in 0..e_count {
            hb_bits[e] += hb_c[e] * k * hb_k[e] / hb_total * air;
        }
    }
    slot += n_idle;

    for l in 0..s {
        let (n, last) = session_slots(schedule.t_ul[l], dt);
        if n == 0 {
            continue;
        }
        let air = (n - 1) as f64 * dt + last;
        let mut used: f64 = (0..e_count).map(|e| schedule.k_hb_ul[e][l]).sum();
        for r in 0..=l {
            let u = ord.ue(r);
            let (kr, p) = (schedule.k_ul[r][l], schedule.p_ul[r][l]);
            used += kr;
            audit.push("power", u, (pmax - p) / pmax);
            if kr > 0.0 && p > 0.0 {
                ul_start[u].get_or_insert(slot);
                ul_bits[u] += ratemodel::ul_rate(kr, p, sc.fl_ues[u].channel_gain_sq, radio) * air;
            }
        }
        audit.push("slot_budget", s + l, (k - used) / k);
        for e in 0..e_count {
            hb_bits[e] += hb_c[e] * schedule.k_hb_ul[e][l].max(0.0) * air;
        }
        slot += n;
    }

    let latency = slot as f64 * dt;
    // rounding sessions up to whole slots delays the end of the round
    let promised = schedule.latency();
    if promised > 0.0 {
        audit.push("latency", 0, (promised - latency) / promised);
    }
    for u in 0..s {
        audit.push("dl_bits", u, (dl_bits[u] - d) / d);
        audit.push("ul_bits", u, (ul_bits[u] - d) / d);
        let tau_min = sc.fl_ues[u].workload().min_compute_time();
        if let Some(start) = ul_start[u] {
            let done = dl_done[u].unwrap_or(dl_end_slot.saturating_sub(1));
            let avail = start.saturating_sub(done + 1) as f64 * dt;
            if tau_min > 0.0 {
                audit.push("compute_order", u, (avail - tau_min) / tau_min);
            }
        }
    }
    if sc.hb_threshold > 0.0 {
        for e in 0..e_count {
            let avg = if latency > 0.0 { hb_bits[e] / latency } else { 0.0 };
            audit.push("hb_rate", e, (avg - sc.hb_threshold) / sc.hb_threshold);
        }
    }

    let mut worst_by_family: BTreeMap<String, f64> = BTreeMap::new();
    for ch in &audit.checks {
        let w = worst_by_family.entry(ch.family.clone()).or_insert(f64::INFINITY);
        *w = w.min(ch.slack);
    }
    let worst_slack = audit.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let violations = audit.checks.into_iter().filter(|c| !(c.slack >= -VIOLATION_TOL)).collect();
    Ok(ReplayReport {
        delta: dt,
        slots: slot,
        latency,
        worst_by_family,
        worst_slack,
        violations,
    })
}
