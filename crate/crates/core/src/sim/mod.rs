//! Slot-level simulation: the max-sum-rate and max-min-rate schedulers that
//! treat FL flows like any other traffic, and a replay of session schedules
//! on the slotted timeline.

mod policy;
mod replay;

pub use policy::{run_policy, Policy, SimOptions, SimResult, TimelineRow};
pub use replay::{replay_schedule, Check, ReplayReport};

/// Simulations longer than this many slots are abandoned.
pub const MAX_SLOTS: u64 = 10_000_000;

/// The timeline as CSV with a header row.
pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut out = String::from("slot,flow,rbs,power_w,bits\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.9e},{:.9e},{:.9e}\n", r.slot, r.flow, r.rbs, r.power, r.bits));
    }
    out
}
