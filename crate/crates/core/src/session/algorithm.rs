use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{solve, SolveOptions, SolveStatus};
use crate::error::{Error, Result, SolveError};
use crate::outcome::RoundOutcome;
use crate::scenario::Scenario;

use super::{evaluate, init_feasible, HbMode, Ordering, SessionSchedule, SessionProblem};

/// Durations shorter than this are reported as zero.
const SNAP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algorithm1Options {
    /// Relative objective change at which iteration stops.
    pub eps: f64,
    pub max_iter: usize,
    pub hb_mode: HbMode,
    pub solver: SolveOptions,
}

impl Default for Algorithm1Options {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_iter: 50,
            hb_mode: HbMode::Aggregated,
            solver: SolveOptions::default(),
        }
    }
}

/// One row per iteration; row 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub latency: f64,
    pub energy: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Algorithm1Result {
    pub schedule: SessionSchedule,
    pub outcome: RoundOutcome,
    pub trace: Vec<TraceRow>,
    /// Convex subproblems solved.
    pub iterations: usize,
    pub converged: bool,
}

fn row(iteration: usize, o: &RoundOutcome, newton_steps: usize) -> TraceRow {
    TraceRow {
        iteration,
        objective: o.objective,
        latency: o.latency,
        energy: o.total_energy(),
        newton_steps,
    }
}

/// Alternates tight auxiliary updates with solves of the convex subproblem,
/// starting from [`init_feasible`], until the objective settles.
pub fn run_algorithm1(sc: &Scenario, ordering: &Ordering, opts: &Algorithm1Options) -> Result<Algorithm1Result> {
    let st = SessionProblem::new(sc, ordering, opts.hb_mode)?;
    let init = init_feasible(sc, ordering)?;
    let mut x = st.pack(&init);
    let mut best = evaluate(&st.unpack(&x), sc)?;
    let mut trace = vec![row(0, &best, 0)];
    let mut converged = false;
    let mut iterations = 0;
    for n in 1..=opts.max_iter {
        iterations = n;
        let aux = st.aux_at(&x)?;
        let prog = st.build(&aux)?;
        let report = solve(&prog, &x, &opts.solver).map_err(|e| Error::Solver { iteration: n, source: e })?;
        if report.status == SolveStatus::MaxIter {
            return Err(Error::Solver {
                iteration: n,
                source: SolveError::MaxIter(report.newton_iterations),
            });
        }
        let out = evaluate(&st.unpack(&report.x), sc)?;
        // The surrogate majorizes the objective and is tight at `x`, so a
        // rise can only come from rounding; keep the better point then.
        if out.objective > best.objective {
            log::debug!("iteration {n}: objective rose by {:e}", out.objective - best.objective);
            trace.push(row(n, &best, report.newton_iterations));
            converged = true;
            break;
        }
        let change = (best.objective - out.objective).abs() / out.objective.abs().max(f64::MIN_POSITIVE);
        trace.push(row(n, &out, report.newton_iterations));
        x = report.x;
        best = out;
        if change <= opts.eps {
            converged = true;
            break;
        }
    }
    let schedule = st.unpack(&x).snapped(SNAP);
    let outcome = evaluate(&schedule, sc)?;
    Ok(Algorithm1Result {
        schedule,
        outcome,
        trace,
        iterations,
        converged,
    })
}

/// The trace as CSV with a header row.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,objective,latency_s,energy_j,newton_steps\n");
    for r in trace {
        out.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{}\n",
            r.iteration, r.objective, r.latency, r.energy, r.newton_steps
        ));
    }
    out
}

/// Runs the algorithm for every ordering of the FL UEs and ranks them by
/// objective. Orderings whose run fails are ranked last with an infinite
/// objective.
pub fn enumerate_orderings(
    sc: &Scenario,
    s_cap: usize,
    opts: &Algorithm1Options,
) -> Result<Vec<(Ordering, f64)>> {
    let s = sc.num_fl();
    if s > s_cap {
        return Err(Error::InvalidArgument(format!(
            "{s} FL UEs exceed the enumeration cap of {s_cap}"
        )));
    }
    let mut ranked: Vec<(Ordering, f64)> = Ordering::all(s)
        .into_par_iter()
        .map(|o| {
            let obj = match run_algorithm1(sc, &o, opts) {
                Ok(r) => r.outcome.objective,
                Err(e) => {
                    log::warn!("ordering {o}: {e}");
                    f64::INFINITY
                }
            };
            (o, obj)
        })
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}
