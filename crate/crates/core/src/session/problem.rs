use crate::convex::{Affine, ConvexProgram};
use crate::error::{Error, Result};
use crate::ratemodel;
use crate::scenario::Scenario;
use crate::transform::{supply_aux, CostBound, InverseSquare, Supply, SupplyConstraint, SupplyPiece};

use super::{AuxVars, HbMode, Layout, Ordering, SessionSchedule};

/// Smallest duration the solver may use. Products divide by durations.
pub(crate) const MIN_DURATION: f64 = 1e-9;

/// Scenario constants in the form the session problem consumes.
#[derive(Debug, Clone)]
pub struct SessionProblem {
    pub(crate) s: usize,
    pub(crate) k: f64,
    pub(crate) d: f64,
    pub(crate) ordering: Ordering,
    /// Downlink bit/s per RB of each FL UE.
    pub(crate) dl_rb_rate: Vec<f64>,
    pub(crate) ul_a: Vec<f64>,
    pub(crate) w: f64,
    pub(crate) pmax: f64,
    pub(crate) tau_min: Vec<f64>,
    /// `kappa (alpha Theta)^3` per FL UE.
    pub(crate) e_coef: Vec<f64>,
    pub(crate) lambda: Vec<f64>,
    /// Per-slot RB reservation of each HB UE.
    pub(crate) hb_k: Vec<f64>,
    pub(crate) hb_rb_rate: Vec<f64>,
    pub(crate) theta: f64,
    pub(crate) mode: HbMode,
}

impl SessionProblem {
    pub fn new(sc: &Scenario, ordering: &Ordering, mode: HbMode) -> Result<Self> {
        sc.validate()?;
        let s = sc.num_fl();
        if ordering.len() != s {
            return Err(Error::InvalidArgument(format!(
                "ordering has {} entries for {s} FL UEs",
                ordering.len()
            )));
        }
        let r = &sc.radio;
        let fl = &sc.fl_ues;
        Ok(Self {
            s,
            k: r.k(),
            d: sc.model_bits(),
            ordering: ordering.clone(),
            dl_rb_rate: fl.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, r)).collect(),
            ul_a: fl.iter().map(|u| ratemodel::ul_snr_coeff(u.channel_gain_sq, r)).collect(),
            w: r.rb_bandwidth(),
            pmax: r.ue_max_power,
            tau_min: fl.iter().map(|u| u.workload().min_compute_time()).collect(),
            e_coef: fl.iter().map(|u| u.workload().energy_coeff()).collect(),
            lambda: fl.iter().map(|u| u.workload().energy_weight).collect(),
            hb_k: sc.hb_reservations(),
            hb_rb_rate: sc.hb_ues.iter().map(|u| ratemodel::dl_rate_per_rb(u.channel_gain_sq, r)).collect(),
            theta: sc.hb_threshold,
            mode,
        })
    }

    pub fn hb_total(&self) -> f64 {
        self.hb_k.iter().sum()
    }

    /// HB UEs only constrain the problem when they have a positive floor.
    pub fn hb_active(&self) -> bool {
        self.hb_total() > 0.0
    }

    pub fn groups(&self) -> usize {
        match (self.hb_active(), self.mode) {
            (false, _) => 0,
            (true, HbMode::PerUe) => self.hb_k.len(),
            (true, HbMode::Aggregated) => 1,
        }
    }

    /// Reservation (RBs per slot) a group has to sustain.
    pub fn group_need(&self, g: usize) -> f64 {
        match self.mode {
            HbMode::PerUe => self.hb_k[g],
            HbMode::Aggregated => self.hb_total(),
        }
    }

    /// RBs HB UE `e` holds while the cell is idle: all `K` RBs, split in
    /// proportion to the reservations.
    pub fn idle_share(&self, e: usize) -> f64 {
        self.k * self.hb_k[e] / self.hb_total()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.s, self.groups())
    }

    /// Uplink rate of the UE of rank `r` normalized by the model size.
    pub fn ul_norm_rate(&self, r: usize, k: f64, p: f64) -> f64 {
        let u = self.ordering.ue(r);
        ratemodel::perspective_rate(k, p, self.ul_a[u], self.w) / self.d
    }

    pub fn pack(&self, sch: &SessionSchedule) -> Vec<f64> {
        let lay = self.layout();
        let s = self.s;
        let mut x = vec![0.0; lay.n_vars()];
        for j in 0..s {
            x[lay.t_dl(j)] = sch.t_dl[j];
            x[lay.t_ul(j)] = sch.t_ul[j];
            x[lay.k_dl(j)] = sch.k_dl[j];
            for g in 0..lay.groups {
                let (dl, ul) = match self.mode {
                    HbMode::PerUe => (sch.k_hb_dl[g][j], sch.k_hb_ul[g][j]),
                    HbMode::Aggregated => (
                        sch.k_hb_dl.iter().map(|v| v[j]).sum(),
                        sch.k_hb_ul.iter().map(|v| v[j]).sum(),
                    ),
                };
                x[lay.h_dl(g, j)] = dl;
                x[lay.h_ul(g, j)] = ul;
            }
            for l in j..s {
                x[lay.k_ul(j, l)] = sch.k_ul[j][l];
                x[lay.p_ul(j, l)] = sch.p_ul[j][l];
            }
        }
        x[lay.t_idle()] = sch.t_idle;
        x
    }

    pub fn unpack(&self, x: &[f64]) -> SessionSchedule {
        let lay = self.layout();
        let s = self.s;
        let e = self.hb_k.len();
        let hb = |pick: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<f64>> {
            (0..e)
                .map(|ei| {
                    (0..s)
                        .map(|j| match (lay.groups, self.mode) {
                            (0, _) => 0.0,
                            (_, HbMode::PerUe) => x[pick(ei, j)],
                            (_, HbMode::Aggregated) => x[pick(0, j)] * self.hb_k[ei] / self.hb_total(),
                        })
                        .collect()
                })
                .collect()
        };
        let tri = |f: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<f64>> {
            (0..s)
                .map(|r| (0..s).map(|l| if l >= r { x[f(r, l)] } else { 0.0 }).collect())
                .collect()
        };
        SessionSchedule {
            ordering: self.ordering.clone(),
            t_dl: (0..s).map(|j| x[lay.t_dl(j)]).collect(),
            t_idle: x[lay.t_idle()],
            t_ul: (0..s).map(|l| x[lay.t_ul(l)]).collect(),
            k_dl: (0..s).map(|j| x[lay.k_dl(j)]).collect(),
            k_hb_dl: hb(&|g, j| lay.h_dl(g, j)),
            k_ul: tri(&|r, l| lay.k_ul(r, l)),
            p_ul: tri(&|r, l| lay.p_ul(r, l)),
            k_hb_ul: hb(&|g, l| lay.h_ul(g, l)),
        }
    }

    /// Auxiliary variables at which every transformed term is tight.
    pub fn aux_at(&self, x: &[f64]) -> Result<AuxVars> {
        let lay = self.layout();
        let s = self.s;
        let g = lay.groups;
        for i in 0..=2 * s {
            if !(x[i] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "auxiliary update needs positive durations, variable {i} is {}",
                    x[i]
                )));
            }
        }
        let mut aux = AuxVars {
            y_hb_dl: vec![vec![0.0; s]; g],
            y_hb_ul: vec![vec![0.0; s]; g],
            y_fl_dl: vec![0.0; s],
            y_fl_ul: vec![vec![0.0; s]; s],
            y_e: vec![vec![0.0; s]; s],
        };
        for j in 0..s {
            let (td, tu) = (x[lay.t_dl(j)], x[lay.t_ul(j)]);
            aux.y_fl_dl[j] = supply_aux(x[lay.k_dl(j)], td);
            for gg in 0..g {
                aux.y_hb_dl[gg][j] = supply_aux(x[lay.h_dl(gg, j)], td);
                aux.y_hb_ul[gg][j] = supply_aux(x[lay.h_ul(gg, j)], tu);
            }
        }
        for r in 0..s {
            for l in r..s {
                let t = x[lay.t_ul(l)];
                let (k, p) = (x[lay.k_ul(r, l)], x[lay.p_ul(r, l)]);
                aux.y_fl_ul[r][l] = supply_aux(self.ul_norm_rate(r, k, p), t);
                aux.y_e[r][l] = p / t;
            }
        }
        Ok(aux)
    }

    fn check_aux(&self, aux: &AuxVars) -> Result<()> {
        let s = self.s;
        let g = self.groups();
        let shape_ok = aux.y_fl_dl.len() == s
            && aux.y_fl_ul.len() == s
            && aux.y_e.len() == s
            && aux.y_hb_dl.len() == g
            && aux.y_hb_ul.len() == g
            && aux.y_fl_ul.iter().chain(&aux.y_e).chain(&aux.y_hb_dl).chain(&aux.y_hb_ul).all(|v| v.len() == s);
        if !shape_ok {
            return Err(Error::InvalidArgument("auxiliary variables do not match the problem size".into()));
        }
        let mut used = aux.y_fl_dl.iter().chain(aux.y_hb_dl.iter().flatten()).chain(aux.y_hb_ul.iter().flatten());
        let bad = used.any(|v| !(*v > 0.0 && v.is_finite()))
            || (0..s).any(|r| (r..s).any(|l| {
                let (a, b) = (aux.y_fl_ul[r][l], aux.y_e[r][l]);
                !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite())
            }));
        if bad {
            return Err(Error::InvalidArgument("auxiliary variables must be strictly positive".into()));
        }
        Ok(())
    }

    /// The convex subproblem for fixed auxiliary variables.
    pub fn build(&self, aux: &AuxVars) -> Result<ConvexProgram> {
        self.check_aux(aux)?;
        let lay = self.layout();
        let s = self.s;
        let groups = lay.groups;
        let mut prog = ConvexProgram::new(lay.n_vars());
        let durations: Vec<usize> = (0..=2 * s).collect();

        // latency
        prog.objective.push(Box::new(Affine::new(durations.iter().map(|&i| (i, 1.0)), 0.0)));
        for r in 0..s {
            let u = self.ordering.ue(r);
            let weight = self.lambda[u] * self.e_coef[u];
            if weight > 0.0 {
                let support = self.compute_time_support(r);
                let coefs = vec![1.0; support.len()];
                prog.objective.push(Box::new(InverseSquare { support, coefs, weight }));
            }
            if self.lambda[u] > 0.0 {
                for l in r..s {
                    prog.objective.push(Box::new(CostBound::new(
                        lay.p_ul(r, l),
                        lay.t_ul(l),
                        aux.y_e[r][l],
                        self.lambda[u],
                    )));
                }
            }
        }

        // downlink completion, normalized by the model size
        for j in 0..s {
            let c = self.dl_rb_rate[j] / self.d;
            let pieces = (0..=j)
                .map(|i| SupplyPiece {
                    t: lay.t_dl(i),
                    y: aux.y_fl_dl[i],
                    coef: c,
                    supply: Supply::Linear { k: lay.k_dl(i), a: 1.0 },
                })
                .collect();
            prog.constraints.push(Box::new(SupplyConstraint::new(1.0, vec![], pieces)));
        }
        // uplink completion
        for r in 0..s {
            let u = self.ordering.ue(r);
            let pieces = (r..s)
                .map(|l| SupplyPiece {
                    t: lay.t_ul(l),
                    y: aux.y_fl_ul[r][l],
                    coef: 1.0,
                    supply: Supply::Rate {
                        k: lay.k_ul(r, l),
                        p: lay.p_ul(r, l),
                        a: self.ul_a[u],
                        w: self.w,
                        scale: 1.0 / self.d,
                    },
                })
                .collect();
            prog.constraints.push(Box::new(SupplyConstraint::new(1.0, vec![], pieces)));
        }
        // RB budgets
        for j in 0..s {
            let terms = std::iter::once((lay.k_dl(j), 1.0)).chain((0..groups).map(|g| (lay.h_dl(g, j), 1.0)));
            prog.constraints.push(Box::new(Affine::new(terms, -self.k)));
        }
        for l in 0..s {
            let terms = (0..=l)
                .map(|r| (lay.k_ul(r, l), 1.0))
                .chain((0..groups).map(|g| (lay.h_ul(g, l), 1.0)));
            prog.constraints.push(Box::new(Affine::new(terms, -self.k)));
        }
        // compute speed
        for r in 0..s {
            let u = self.ordering.ue(r);
            let terms = self.compute_time_support(r).into_iter().map(|i| (i, -1.0));
            prog.constraints.push(Box::new(Affine::new(terms, self.tau_min[u])));
        }
        // HB average rate, in units of the group's reservation
        if groups > 0 {
            let credit = self.k / self.hb_total();
            for g in 0..groups {
                let c = 1.0 / self.group_need(g);
                let mut linear: Vec<(usize, f64)> = durations.iter().map(|&i| (i, 1.0)).collect();
                linear[lay.t_idle()].1 -= credit;
                let mut pieces = Vec::with_capacity(2 * s);
                for j in 0..s {
                    pieces.push(SupplyPiece {
                        t: lay.t_dl(j),
                        y: aux.y_hb_dl[g][j],
                        coef: c,
                        supply: Supply::Linear { k: lay.h_dl(g, j), a: 1.0 },
                    });
                    pieces.push(SupplyPiece {
                        t: lay.t_ul(j),
                        y: aux.y_hb_ul[g][j],
                        coef: c,
                        supply: Supply::Linear { k: lay.h_ul(g, j), a: 1.0 },
                    });
                }
                prog.constraints.push(Box::new(SupplyConstraint::new(0.0, linear, pieces)));
            }
        }

        for i in 0..lay.n_vars() {
            prog.lower[i] = if lay.is_duration(i) { MIN_DURATION } else { 0.0 };
        }
        for r in 0..s {
            for l in r..s {
                prog.upper[lay.p_ul(r, l)] = self.pmax;
            }
        }
        Ok(prog)
    }

    /// Variables whose sum is the compute time of the UE of rank `r`.
    pub fn compute_time_support(&self, r: usize) -> Vec<usize> {
        let lay = self.layout();
        let u = self.ordering.ue(r);
        (0..r)
            .map(|l| lay.t_ul(l))
            .chain((u + 1..self.s).map(|j| lay.t_dl(j)))
            .chain(std::iter::once(lay.t_idle()))
            .collect()
    }
}

/// Assembles the convex subproblem of the session problem for `ordering`
/// at the auxiliary point `aux`.
pub fn build_subproblem(sc: &Scenario, ordering: &Ordering, aux: &AuxVars, mode: HbMode) -> Result<ConvexProgram> {
    SessionProblem::new(sc, ordering, mode)?.build(aux)
}

/// Auxiliary variables that make every transformed term tight at `schedule`.
pub fn update_aux(sc: &Scenario, schedule: &SessionSchedule, mode: HbMode) -> Result<AuxVars> {
    let setup = SessionProblem::new(sc, &schedule.ordering, mode)?;
    setup.aux_at(&setup.pack(schedule))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::convex::check_derivatives;
    use crate::scenario::Overrides;
    use crate::session::{evaluate, init_feasible};

    fn scenario(pairs: &[(&str, f64)]) -> Scenario {
        let ov: Overrides = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Scenario::generate(1, &ov).unwrap()
    }

    /// Start point scaled by random factors in [0.5, 2].
    fn jitter(x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        x.iter().map(|v| v * 2f64.powf(rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn variable_count() {
        let sc = scenario(&[]);
        let (s, e) = (sc.num_fl(), sc.num_hb());
        let per_ue = SessionProblem::new(&sc, &Ordering::identity(s), HbMode::PerUe).unwrap();
        assert_eq!(per_ue.layout().n_vars(), 2 * s + 1 + s + s * e + s * (s + 1) / 2 * 2 + s * e);
        let pooled = SessionProblem::new(&sc, &Ordering::identity(s), HbMode::Aggregated).unwrap();
        assert_eq!(pooled.layout().n_vars(), 2 * s + 1 + s + s + s * (s + 1) + s);
    }

    #[test]
    fn single_ue_without_hb() {
        let sc = scenario(&[("S", 1.0), ("E", 0.0)]);
        let o = Ordering::identity(1);
        let init = init_feasible(&sc, &o).unwrap();
        let aux = update_aux(&sc, &init, HbMode::Aggregated).unwrap();
        let prog = build_subproblem(&sc, &o, &aux, HbMode::Aggregated).unwrap();
        // t_dl, t_idle, t_ul, k_dl, k_ul, p_ul
        assert_eq!(prog.n_vars, 6);
        // completion both ways, two RB budgets, compute time
        assert_eq!(prog.constraints.len(), 5);
    }

    #[test]
    fn rejects_nonpositive_aux() {
        let sc = scenario(&[("S", 2.0), ("E", 1.0)]);
        let o = Ordering::identity(2);
        let mut aux = update_aux(&sc, &init_feasible(&sc, &o).unwrap(), HbMode::PerUe).unwrap();
        aux.y_e[0][1] = 0.0;
        assert!(build_subproblem(&sc, &o, &aux, HbMode::PerUe).is_err());
        let mut zero = init_feasible(&sc, &o).unwrap();
        zero.t_ul[1] = 0.0;
        assert!(update_aux(&sc, &zero, HbMode::PerUe).is_err());
    }

    /// Constraint values computed from the exact products, in build order.
    fn direct_constraints(st: &SessionProblem, x: &[f64]) -> Vec<f64> {
        let lay = st.layout();
        let s = st.s;
        let mut out = Vec::new();
        for j in 0..s {
            let bits: f64 = (0..=j).map(|i| st.dl_rb_rate[j] * x[lay.k_dl(i)] * x[lay.t_dl(i)]).sum();
            out.push(1.0 - bits / st.d);
        }
        for r in 0..s {
            let u = st.ordering.ue(r);
            let bits: f64 = (r..s)
                .map(|l| {
                    ratemodel::perspective_rate(x[lay.k_ul(r, l)], x[lay.p_ul(r, l)], st.ul_a[u], st.w) * x[lay.t_ul(l)]
                })
                .sum();
            out.push(1.0 - bits / st.d);
        }
        for j in 0..s {
            out.push(x[lay.k_dl(j)] + (0..lay.groups).map(|g| x[lay.h_dl(g, j)]).sum::<f64>() - st.k);
        }
        for l in 0..s {
            let fl: f64 = (0..=l).map(|r| x[lay.k_ul(r, l)]).sum();
            out.push(fl + (0..lay.groups).map(|g| x[lay.h_ul(g, l)]).sum::<f64>() - st.k);
        }
        for r in 0..s {
            let u = st.ordering.ue(r);
            let tau: f64 = st.compute_time_support(r).iter().map(|&i| x[i]).sum();
            out.push(st.tau_min[u] - tau);
        }
        for g in 0..lay.groups {
            let total: f64 = (0..=2 * s).map(|i| x[i]).sum();
            let mut served = st.k * x[lay.t_idle()] / st.hb_total() * st.group_need(g);
            for j in 0..s {
                served += x[lay.h_dl(g, j)] * x[lay.t_dl(j)] + x[lay.h_ul(g, j)] * x[lay.t_ul(j)];
            }
            out.push(total - served / st.group_need(g));
        }
        out
    }

    #[test]
    fn transformed_terms_are_tight_at_the_aux_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [HbMode::PerUe, HbMode::Aggregated] {
            let sc = scenario(&[("S", 4.0), ("E", 3.0)]);
            let o = Ordering::new(vec![2, 0, 3, 1]).unwrap();
            let st = SessionProblem::new(&sc, &o, mode).unwrap();
            let x0 = st.pack(&init_feasible(&sc, &o).unwrap());
            for _ in 0..20 {
                let x = jitter(&x0, &mut rng);
                let prog = st.build(&st.aux_at(&x).unwrap()).unwrap();
                let want = evaluate(&st.unpack(&x), &sc).unwrap().objective;
                let got = prog.objective_value(&x);
                assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
                let direct = direct_constraints(&st, &x);
                let built = prog.constraint_values(&x);
                assert_eq!(direct.len(), built.len());
                for (a, b) in built.iter().zip(&direct) {
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn surrogate_bounds_the_exact_terms_away_from_the_aux_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sc = scenario(&[("S", 3.0), ("E", 2.0)]);
        let o = Ordering::identity(3);
        let st = SessionProblem::new(&sc, &o, HbMode::PerUe).unwrap();
        let x0 = st.pack(&init_feasible(&sc, &o).unwrap());
        let prog = st.build(&st.aux_at(&x0).unwrap()).unwrap();
        for _ in 0..50 {
            let x = jitter(&x0, &mut rng);
            let exact = evaluate(&st.unpack(&x), &sc).unwrap().objective;
            assert!(prog.objective_value(&x) >= exact * (1.0 - 1e-12));
            for (a, b) in prog.constraint_values(&x).iter().zip(direct_constraints(&st, &x)) {
                assert!(*a >= b - 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn chords_lie_above_the_program() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sc = scenario(&[]);
        let o = Ordering::identity(sc.num_fl());
        let st = SessionProblem::new(&sc, &o, HbMode::Aggregated).unwrap();
        let x0 = st.pack(&init_feasible(&sc, &o).unwrap());
        let prog = st.build(&st.aux_at(&x0).unwrap()).unwrap();
        for _ in 0..200 {
            let a = jitter(&x0, &mut rng);
            let b = jitter(&x0, &mut rng);
            let m: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
            let (fa, fb, fm) = (prog.objective_value(&a), prog.objective_value(&b), prog.objective_value(&m));
            assert!(fm <= 0.5 * (fa + fb) + 1e-8 * fm.abs().max(1.0));
            let (ga, gb, gm) = (prog.constraint_values(&a), prog.constraint_values(&b), prog.constraint_values(&m));
            for i in 0..gm.len() {
                let avg = 0.5 * (ga[i] + gb[i]);
                assert!(gm[i] <= avg + 1e-8 * avg.abs().max(1.0), "constraint {i}");
            }
        }
    }

    /// Start point with every duration lengthened and every FL allocation
    /// shrunk at random. HB allocations keep their reservation.
    fn interior(st: &SessionProblem, x0: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let lay = st.layout();
        let s = lay.s;
        let span: f64 = x0[..=2 * s].iter().sum::<f64>() / (2 * s + 1) as f64;
        let mut x = x0.to_vec();
        for i in 0..=2 * s {
            x[i] += span * rng.random_range(0.1..1.0);
        }
        for j in 0..s {
            x[lay.k_dl(j)] *= rng.random_range(0.8..1.0);
            for l in j..s {
                x[lay.k_ul(j, l)] *= rng.random_range(0.8..1.0);
                x[lay.p_ul(j, l)] *= rng.random_range(0.8..1.0);
            }
        }
        x
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sc = scenario(&[("S", 4.0), ("E", 3.0)]);
        let o = Ordering::new(vec![1, 3, 0, 2]).unwrap();
        for mode in [HbMode::PerUe, HbMode::Aggregated] {
            let st = SessionProblem::new(&sc, &o, mode).unwrap();
            let x0 = st.pack(&init_feasible(&sc, &o).unwrap());
            for _ in 0..20 {
                let (x, prog) = (0..100)
                    .find_map(|_| {
                        let x = interior(&st, &x0, &mut rng);
                        let prog = st.build(&st.aux_at(&x).unwrap()).unwrap();
                        prog.is_strictly_feasible(&x).then_some((x, prog))
                    })
                    .expect("a strictly feasible draw");
                let err = check_derivatives(&prog, &x, 1e-6);
                assert!(err <= 1e-5, "{err}");
            }
        }
    }
}
