//! The rigid baseline: one RB/power/compute-speed assignment held for the
//! whole round, and the uplink ordering heuristic derived from it.

use serde::{Deserialize, Serialize};

use crate::convex::{solve, Affine, ConvexProgram, SolveOptions, SolveStatus, Smooth, Sum};
use crate::error::{Error, Result, SolveError};
use crate::outcome::{ResidualSet, RoundOutcome};
use crate::ratemodel;
use crate::scenario::Scenario;
use crate::session::{Ordering, SessionSchedule};
use crate::transform::{supply_aux, CostBound, InverseSquare, Reciprocal, Supply, SupplyConstraint, SupplyPiece};

const MARGIN: f64 = 1e-6;
const MIN_DURATION: f64 = 1e-9;

/// When uplink may start relative to the broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Separation {
    /// Every UE's compute time alone covers the slowest download.
    #[default]
    Strict,
    /// Download plus compute time of every UE covers the slowest download.
    Loose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidOptions {
    pub eps: f64,
    pub max_iter: usize,
    pub separation: Separation,
    pub solver: SolveOptions,
}

impl Default for RigidOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_iter: 50,
            separation: Separation::Strict,
            solver: SolveOptions::default(),
        }
    }
}

/// Per-UE vectors follow the scenario's FL UE order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidSolution {
    /// Broadcast RBs.
    pub k_dl: f64,
    pub k_ul: Vec<f64>,
    pub p_ul: Vec<f64>,
    pub tau_cp: Vec<f64>,
    pub t_ul: Vec<f64>,
    /// Epigraph of the slowest UE's round time.
    pub t_epi: f64,
    /// RBs held by HB traffic throughout.
    pub k_hb: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidResult {
    pub solution: RigidSolution,
    pub outcome: RoundOutcome,
    /// Evaluated objective per iteration, starting point first.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Rigid {
    s: usize,
    d: f64,
    k_avail: f64,
    k_hb: f64,
    dl_rb_rate: Vec<f64>,
    ul_a: Vec<f64>,
    w: f64,
    pmax: f64,
    tau_min: Vec<f64>,
    e_coef: Vec<f64>,
    lambda: Vec<f64>,
    separation: Separation,
}

// variable order: k_dl | k_ul[S] | p_ul[S] | tau[S] | t_ul[S] | t_epi
impl Rigid {
    fn new(sc: &Scenario, separation: Separation) -> Result<Self> {
        sc.validate()?;
        let r = &sc.radio;
        let k_hb = sc.hb_reservation_total();
        let k_avail = r.k() - k_hb;
        if !(k_avail > 0.0) {
            return Err(Error::Infeasible(format!("HB reservations need {k_hb:.4} of {} RBs", r.k())));
        }
        let fl = &sc.fl_ues;
        Ok(Self {
            s: fl.len(),
            d: sc.model_bits(),
            k_avail,
            k_hb,
            dl_rb_rate: fl.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, r)).collect(),
            ul_a: fl.iter().map(|u| ratemodel::ul_snr_coeff(u.channel_gain_sq, r)).collect(),
            w: r.rb_bandwidth(),
            pmax: r.ue_max_power,
            tau_min: fl.iter().map(|u| u.workload().min_compute_time()).collect(),
            e_coef: fl.iter().map(|u| u.workload().energy_coeff()).collect(),
            lambda: fl.iter().map(|u| u.workload().energy_weight).collect(),
            separation,
        })
    }

    fn n(&self) -> usize {
        4 * self.s + 2
    }
    fn k_ul(&self, s: usize) -> usize {
        1 + s
    }
    fn p_ul(&self, s: usize) -> usize {
        1 + self.s + s
    }
    fn tau(&self, s: usize) -> usize {
        1 + 2 * self.s + s
    }
    fn t_ul(&self, s: usize) -> usize {
        1 + 3 * self.s + s
    }
    fn t_epi(&self) -> usize {
        1 + 4 * self.s
    }

    fn ul_rate(&self, s: usize, k: f64, p: f64) -> f64 {
        ratemodel::perspective_rate(k, p, self.ul_a[s], self.w)
    }

    fn dl_time(&self, s: usize, k_dl: f64) -> f64 {
        self.d / (self.dl_rb_rate[s] * k_dl)
    }

    /// Slowest download time per broadcast RB.
    fn slowest_dl_coef(&self) -> f64 {
        self.dl_rb_rate.iter().map(|c| self.d / c).fold(0.0, f64::max)
    }

    /// Download-time coefficient the separation constraint of UE `s` puts on
    /// `1 / k_dl`.
    fn separation_coef(&self, s: usize) -> f64 {
        match self.separation {
            Separation::Strict => self.slowest_dl_coef(),
            Separation::Loose => (self.slowest_dl_coef() - self.d / self.dl_rb_rate[s]).max(0.0),
        }
    }

    fn initial(&self) -> Vec<f64> {
        let s = self.s;
        let mut x = vec![0.0; self.n()];
        let k_dl = self.k_avail * (1.0 - MARGIN);
        x[0] = k_dl;
        let mut t_epi: f64 = 0.0;
        for u in 0..s {
            let k = self.k_avail * (1.0 - MARGIN) / s as f64;
            let p = self.pmax / 2.0;
            let tau = self.tau_min[u].max(self.separation_coef(u) / k_dl) * (1.0 + MARGIN) + MIN_DURATION;
            let t = self.d / self.ul_rate(u, k, p) * (1.0 + MARGIN);
            x[self.k_ul(u)] = k;
            x[self.p_ul(u)] = p;
            x[self.tau(u)] = tau;
            x[self.t_ul(u)] = t;
            t_epi = t_epi.max(self.dl_time(u, k_dl) + tau + t);
        }
        x[self.t_epi()] = t_epi * (1.0 + MARGIN);
        x
    }

    /// Transform coefficients `(y_rate, y_energy)` tight at `x`.
    fn aux_at(&self, x: &[f64]) -> Vec<(f64, f64)> {
        (0..self.s)
            .map(|u| {
                let t = x[self.t_ul(u)];
                let (k, p) = (x[self.k_ul(u)], x[self.p_ul(u)]);
                (supply_aux(self.ul_rate(u, k, p) / self.d, t), p / t)
            })
            .collect()
    }

    fn build(&self, aux: &[(f64, f64)]) -> ConvexProgram {
        let s = self.s;
        let mut prog = ConvexProgram::new(self.n());
        prog.objective.push(Box::new(Affine::new([(self.t_epi(), 1.0)], 0.0)));
        for u in 0..s {
            let lam = self.lambda[u];
            if lam > 0.0 {
                prog.objective.push(Box::new(InverseSquare {
                    support: vec![self.tau(u)],
                    coefs: vec![1.0],
                    weight: lam * self.e_coef[u],
                }));
                prog.objective.push(Box::new(CostBound::new(self.p_ul(u), self.t_ul(u), aux[u].1, lam)));
            }
        }
        for u in 0..s {
            // round time of UE u below the epigraph
            let terms: Vec<Box<dyn Smooth>> = vec![
                Box::new(Reciprocal::new(0, self.d / self.dl_rb_rate[u])),
                Box::new(Affine::new(
                    [(self.tau(u), 1.0), (self.t_ul(u), 1.0), (self.t_epi(), -1.0)],
                    0.0,
                )),
            ];
            prog.constraints.push(Box::new(Sum::new(terms)));
            // upload completes within t_ul
            let piece = SupplyPiece {
                t: self.t_ul(u),
                y: aux[u].0,
                coef: 1.0,
                supply: Supply::Rate {
                    k: self.k_ul(u),
                    p: self.p_ul(u),
                    a: self.ul_a[u],
                    w: self.w,
                    scale: 1.0 / self.d,
                },
            };
            prog.constraints.push(Box::new(SupplyConstraint::new(1.0, vec![], vec![piece])));
            let c = self.separation_coef(u);
            if c > 0.0 {
                let terms: Vec<Box<dyn Smooth>> = vec![
                    Box::new(Reciprocal::new(0, c)),
                    Box::new(Affine::new([(self.tau(u), -1.0)], 0.0)),
                ];
                prog.constraints.push(Box::new(Sum::new(terms)));
            }
        }
        prog.constraints.push(Box::new(Affine::new((0..s).map(|u| (self.k_ul(u), 1.0)), -self.k_avail)));

        prog.lower[0] = 0.0;
        prog.upper[0] = self.k_avail;
        for u in 0..s {
            prog.lower[self.k_ul(u)] = 0.0;
            prog.lower[self.p_ul(u)] = 0.0;
            prog.upper[self.p_ul(u)] = self.pmax;
            prog.lower[self.tau(u)] = self.tau_min[u];
            prog.lower[self.t_ul(u)] = MIN_DURATION;
        }
        prog
    }

    fn unpack(&self, x: &[f64]) -> RigidSolution {
        let s = self.s;
        RigidSolution {
            k_dl: x[0],
            k_ul: (0..s).map(|u| x[self.k_ul(u)]).collect(),
            p_ul: (0..s).map(|u| x[self.p_ul(u)]).collect(),
            tau_cp: (0..s).map(|u| x[self.tau(u)]).collect(),
            t_ul: (0..s).map(|u| x[self.t_ul(u)]).collect(),
            t_epi: x[self.t_epi()],
            k_hb: self.k_hb,
        }
    }

    fn evaluate(&self, sol: &RigidSolution, sc: &Scenario) -> RoundOutcome {
        let s = self.s;
        let k = sc.radio.k();
        let mut res = ResidualSet::default();
        let mut latency: f64 = 0.0;
        let mut e_cp = vec![0.0; s];
        let mut e_cm = vec![0.0; s];
        let slowest = (0..s).map(|u| self.dl_time(u, sol.k_dl)).fold(0.0, f64::max);
        for u in 0..s {
            let dl = self.dl_time(u, sol.k_dl);
            let ul = self.d / self.ul_rate(u, sol.k_ul[u], sol.p_ul[u]);
            let tau = sol.tau_cp[u];
            latency = latency.max(dl + tau + ul);
            e_cp[u] = self.e_coef[u] / (tau * tau);
            e_cm[u] = sol.p_ul[u] * ul;
            if self.tau_min[u] > 0.0 {
                res.push("compute_time", (self.tau_min[u] - tau) / self.tau_min[u]);
            }
            let covered = match self.separation {
                Separation::Strict => tau,
                Separation::Loose => dl + tau,
            };
            res.push("separation", (slowest - covered) / slowest);
            res.push("power", (sol.p_ul[u] - self.pmax) / self.pmax);
            res.push("nonnegativity", (-sol.k_ul[u] / k).max(-sol.p_ul[u] / self.pmax));
        }
        res.push("ul_rb", (sol.k_ul.iter().sum::<f64>() + self.k_hb - k) / k);
        res.push("dl_rb", (sol.k_dl + self.k_hb - k) / k);
        res.push("nonnegativity", -sol.k_dl / k);
        let mut hb_avg_rates = Vec::with_capacity(sc.num_hb());
        for (ue, need) in sc.hb_ues.iter().zip(sc.hb_reservations()) {
            let rate = ratemodel::dl_rate(need, ue.channel_gain_sq, &sc.radio);
            hb_avg_rates.push(rate);
            if sc.hb_threshold > 0.0 {
                res.push("hb_rate", (sc.hb_threshold - rate) / sc.hb_threshold);
            }
        }
        let e_tot: Vec<f64> = e_cp.iter().zip(&e_cm).map(|(a, b)| a + b).collect();
        let objective = latency + e_tot.iter().zip(&self.lambda).map(|(e, l)| e * l).sum::<f64>();
        RoundOutcome {
            latency,
            e_cp,
            e_cm,
            e_tot,
            hb_avg_rates,
            objective,
            residuals: res.into_map(),
        }
    }
}

/// Solves the rigid problem by alternating tight transform updates with
/// convex solves, from a strictly feasible equal split.
pub fn solve_rigid(sc: &Scenario, opts: &RigidOptions) -> Result<RigidResult> {
    let rp = Rigid::new(sc, opts.separation)?;
    let mut x = rp.initial();
    let mut best = rp.evaluate(&rp.unpack(&x), sc);
    let mut trace = vec![best.objective];
    let mut converged = false;
    let mut iterations = 0;
    for n in 1..=opts.max_iter {
        iterations = n;
        let prog = rp.build(&rp.aux_at(&x));
        let report = solve(&prog, &x, &opts.solver).map_err(|e| Error::Solver { iteration: n, source: e })?;
        if report.status == SolveStatus::MaxIter {
            return Err(Error::Solver {
                iteration: n,
                source: SolveError::MaxIter(report.newton_iterations),
            });
        }
        let out = rp.evaluate(&rp.unpack(&report.x), sc);
        if out.objective > best.objective {
            converged = true;
            break;
        }
        let change = (best.objective - out.objective) / out.objective.abs().max(f64::MIN_POSITIVE);
        trace.push(out.objective);
        x = report.x;
        best = out;
        if change <= opts.eps {
            converged = true;
            break;
        }
    }
    let mut solution = rp.unpack(&x);
    // The epigraph may sit above the slowest UE by the barrier's margin.
    solution.t_epi = best.latency;
    Ok(RigidResult {
        solution,
        outcome: best,
        trace,
        iterations,
        converged,
    })
}

/// Uplink-ready time of every FL UE under `solution`: download plus
/// compute time.
pub fn ready_times(solution: &RigidSolution, sc: &Scenario) -> Vec<f64> {
    let d = sc.model_bits();
    sc.fl_ues
        .iter()
        .zip(&solution.tau_cp)
        .map(|(ue, tau)| d / ratemodel::dl_rate(solution.k_dl, ue.channel_gain_sq, &sc.radio) + tau)
        .collect()
}

/// UEs sorted by uplink-ready time. Ready times equal to 9 significant
/// digits count as ties, broken by larger gain and then by index.
pub fn ordering_from_rigid(solution: &RigidSolution, sc: &Scenario) -> Ordering {
    let ready = ready_times(solution, sc);
    let key = |v: f64| -> f64 { format!("{v:.8e}").parse().unwrap_or(v) };
    let mut idx: Vec<usize> = (0..ready.len()).collect();
    idx.sort_by(|&a, &b| {
        key(ready[a])
            .total_cmp(&key(ready[b]))
            .then(sc.fl_ues[b].channel_gain_sq.total_cmp(&sc.fl_ues[a].channel_gain_sq))
            .then(a.cmp(&b))
    });
    Ordering::new(idx).expect("sorted indices form a permutation")
}

/// The rigid solution written as a session schedule over
/// [`ordering_from_rigid`]. A UE that finishes its upload inside a session
/// is given its time-averaged RBs and power over that session, which
/// delivers the same bits with the same energy. Fails when an upload would
/// start before the broadcast ends.
pub fn rigid_to_session(solution: &RigidSolution, sc: &Scenario) -> Result<SessionSchedule> {
    let s = sc.num_fl();
    let d = sc.model_bits();
    let ordering = ordering_from_rigid(solution, sc);
    let ready = ready_times(solution, sc);
    let dl_done: Vec<f64> = sc
        .fl_ues
        .iter()
        .map(|ue| d / ratemodel::dl_rate(solution.k_dl, ue.channel_gain_sq, &sc.radio))
        .collect();
    let mut t_dl = vec![0.0; s];
    let mut prev = 0.0;
    for j in 0..s {
        let end = dl_done[j].max(prev);
        t_dl[j] = end - prev;
        prev = end;
    }
    let dl_end = prev;
    let starts: Vec<f64> = (0..s).map(|r| ready[ordering.ue(r)]).collect();
    if starts[0] < dl_end * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(
            "an upload starts before the broadcast ends; the schedule has no session form".into(),
        ));
    }
    let finish: Vec<f64> = (0..s).map(|r| starts[r] + d / ul_rate_of(solution, sc, ordering.ue(r))).collect();
    let end = finish.iter().copied().fold(0.0, f64::max);
    let mut bounds = starts.clone();
    bounds.push(end);
    let t_ul: Vec<f64> = (0..s).map(|l| (bounds[l + 1] - bounds[l]).max(0.0)).collect();
    let mut k_ul = vec![vec![0.0; s]; s];
    let mut p_ul = vec![vec![0.0; s]; s];
    for r in 0..s {
        let u = ordering.ue(r);
        for l in r..s {
            let (a, b) = (bounds[l], bounds[l + 1]);
            if b <= a {
                continue;
            }
            let on = ((finish[r].min(b) - a) / (b - a)).clamp(0.0, 1.0);
            k_ul[r][l] = solution.k_ul[u] * on;
            p_ul[r][l] = solution.p_ul[u] * on;
        }
    }
    let hb = sc.hb_reservations();
    Ok(SessionSchedule {
        ordering,
        t_dl,
        t_idle: (starts[0] - dl_end).max(0.0),
        t_ul,
        k_dl: vec![solution.k_dl; s],
        k_hb_dl: hb.iter().map(|&k| vec![k; s]).collect(),
        k_ul,
        p_ul,
        k_hb_ul: hb.iter().map(|&k| vec![k; s]).collect(),
    })
}

fn ul_rate_of(solution: &RigidSolution, sc: &Scenario, u: usize) -> f64 {
    ratemodel::ul_rate(solution.k_ul[u], solution.p_ul[u], sc.fl_ues[u].channel_gain_sq, &sc.radio)
}
