use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Affine, ConvexProgram, Quadratic, Smooth};
use crate::error::SolveError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for the duality gap `m / t`, relative to `max(1, |f|)`.
    pub tol: f64,
    pub feas_tol: f64,
    /// Total Newton steps over all centering phases.
    pub max_newton: usize,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Armijo fraction of the backtracking line search.
    pub alpha: f64,
    /// Step shrink factor of the backtracking line search.
    pub beta: f64,
    /// Initial barrier parameter. Defaults to `m / max(1, |f(x0)|)`.
    pub t0: Option<f64>,
    /// Centering stops once half the squared Newton decrement drops below this.
    pub centering_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            feas_tol: 1e-8,
            max_newton: 500,
            mu: 10.0,
            alpha: 0.25,
            beta: 0.5,
            t0: None,
            centering_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Max of the scaled stationarity residual and the relative duality gap.
    pub kkt_residual: f64,
    /// Certified bound `m / t` on the suboptimality of `x`.
    pub duality_gap: f64,
    pub barrier_iterations: usize,
    pub newton_iterations: usize,
    /// `m / t` after each centering phase.
    pub gap_history: Vec<f64>,
    pub status: SolveStatus,
}

/// Relative barrier decrease below which a Newton step counts as stalled.
/// Early exit test on the current point.
type StopFn<'a> = &'a dyn Fn(&[f64]) -> bool;

const STALL: f64 = 1e-13;
const STALL_STEPS: usize = 3;

struct Engine<'a> {
    n: usize,
    objective: Vec<&'a dyn Smooth>,
    constraints: Vec<&'a dyn Smooth>,
    /// Phase-I slack subtracted from every constraint.
    shift: Option<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Option<(DMatrix<f64>, DVector<f64>)>,
    gbuf: Vec<f64>,
    hbuf: Vec<f64>,
    idx: Vec<usize>,
    vals: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        n: usize,
        objective: Vec<&'a dyn Smooth>,
        constraints: Vec<&'a dyn Smooth>,
        shift: Option<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        eq: Option<(DMatrix<f64>, DVector<f64>)>,
    ) -> Self {
        let max_support = objective
            .iter()
            .chain(&constraints)
            .map(|f| f.support().len())
            .max()
            .unwrap_or(0);
        Self {
            n,
            objective,
            constraints,
            shift,
            lower,
            upper,
            eq,
            gbuf: vec![0.0; max_support],
            hbuf: vec![0.0; max_support * max_support],
            idx: Vec::with_capacity(max_support + 1),
            vals: Vec::with_capacity(max_support + 1),
        }
    }

    fn num_barrier_terms(&self) -> usize {
        self.constraints.len()
            + self.lower.iter().filter(|v| v.is_finite()).count()
            + self.upper.iter().filter(|v| v.is_finite()).count()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|f| f.eval(x, None, None)).sum()
    }

    fn constraint(&self, i: usize, x: &[f64]) -> f64 {
        let v = self.constraints[i].eval(x, None, None);
        match self.shift {
            Some(s) => v - x[s],
            None => v,
        }
    }

    fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
    }

    /// `t f(x) + barrier(x)`, or `None` outside the strict interior.
    fn barrier_value(&self, t: f64, x: &[f64]) -> Option<f64> {
        if !self.in_bounds(x) {
            return None;
        }
        let mut phi = 0.0;
        for i in 0..self.constraints.len() {
            let g = self.constraint(i, x);
            if !(g < 0.0) {
                return None;
            }
            phi -= (-g).ln();
        }
        for (j, &v) in x.iter().enumerate() {
            if self.lower[j].is_finite() {
                phi -= (v - self.lower[j]).ln();
            }
            if self.upper[j].is_finite() {
                phi -= (self.upper[j] - v).ln();
            }
        }
        let val = t * self.objective(x) + phi;
        val.is_finite().then_some(val)
    }

    /// Gradient and Hessian of the barrier-augmented objective.
    fn assemble(&mut self, t: f64, x: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        grad.fill(0.0);
        hess.fill(0.0);
        for f in &self.objective {
            let sup = f.support();
            let m = sup.len();
            f.eval(x, Some(&mut self.gbuf[..m]), Some(&mut self.hbuf[..m * m]));
            for (a, &i) in sup.iter().enumerate() {
                grad[i] += t * self.gbuf[a];
                for (b, &j) in sup.iter().enumerate() {
                    hess[(i, j)] += t * self.hbuf[a * m + b];
                }
            }
        }
        for c in &self.constraints {
            let sup = c.support();
            let m = sup.len();
            let mut g = c.eval(x, Some(&mut self.gbuf[..m]), Some(&mut self.hbuf[..m * m]));
            self.idx.clear();
            self.vals.clear();
            self.idx.extend_from_slice(sup);
            self.vals.extend_from_slice(&self.gbuf[..m]);
            if let Some(s) = self.shift {
                g -= x[s];
                self.idx.push(s);
                self.vals.push(-1.0);
            }
            let inv = 1.0 / (-g);
            for (a, &i) in self.idx.iter().enumerate() {
                grad[i] += inv * self.vals[a];
                let va = inv * inv * self.vals[a];
                for (b, &j) in self.idx.iter().enumerate() {
                    hess[(i, j)] += va * self.vals[b];
                }
            }
            for (a, &i) in sup.iter().enumerate() {
                for (b, &j) in sup.iter().enumerate() {
                    hess[(i, j)] += inv * self.hbuf[a * m + b];
                }
            }
        }
        for j in 0..self.n {
            if self.lower[j].is_finite() {
                let d = x[j] - self.lower[j];
                grad[j] -= 1.0 / d;
                hess[(j, j)] += 1.0 / (d * d);
            }
            if self.upper[j].is_finite() {
                let d = self.upper[j] - x[j];
                grad[j] += 1.0 / d;
                hess[(j, j)] += 1.0 / (d * d);
            }
        }
    }

    fn newton_direction(
        &self,
        x: &[f64],
        grad: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> Result<DVector<f64>, SolveError> {
        match &self.eq {
            None => {
                let scale = (0..self.n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
                let mut ridge = 0.0;
                for _ in 0..12 {
                    let mut h = hess.clone();
                    if ridge > 0.0 {
                        for i in 0..self.n {
                            h[(i, i)] += ridge;
                        }
                    }
                    if let Some(ch) = h.cholesky() {
                        return Ok(-ch.solve(grad));
                    }
                    ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
                }
                Err(SolveError::Singular)
            }
            Some((a, b)) => {
                let p = a.nrows();
                let n = self.n;
                let mut kkt = DMatrix::zeros(n + p, n + p);
                kkt.view_mut((0, 0), (n, n)).copy_from(hess);
                kkt.view_mut((n, 0), (p, n)).copy_from(a);
                kkt.view_mut((0, n), (n, p)).copy_from(&a.transpose());
                let r = a * DVector::from_column_slice(x) - b;
                let mut rhs = DVector::zeros(n + p);
                rhs.rows_mut(0, n).copy_from(&(-grad));
                rhs.rows_mut(n, p).copy_from(&(-r));
                let sol = kkt.lu().solve(&rhs).ok_or(SolveError::Singular)?;
                Ok(sol.rows(0, n).into_owned())
            }
        }
    }

    /// Newton centering at fixed `t`. Returns the number of steps taken, or
    /// `Err(steps)` when the step budget ran out.
    fn center(
        &mut self,
        t: f64,
        x: &mut Vec<f64>,
        opts: &SolveOptions,
        budget: usize,
        stop: Option<StopFn>,
    ) -> Result<usize, SolveError> {
        let n = self.n;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut steps = 0;
        let mut phi = self.barrier_value(t, x).ok_or(SolveError::Infeasible(f64::NAN))?;
        let mut stalled = 0;
        loop {
            if let Some(stop) = stop {
                if stop(x) {
                    return Ok(steps);
                }
            }
            self.assemble(t, x, &mut grad, &mut hess);
            let dx = self.newton_direction(x, &grad, &hess)?;
            let slope = grad.dot(&dx);
            let decrement = -slope;
            if decrement / 2.0 <= opts.centering_tol || !decrement.is_finite() {
                return Ok(steps);
            }
            if steps >= budget {
                return Err(SolveError::MaxIter(steps));
            }
            steps += 1;
            let mut s = 1.0;
            let mut trial = vec![0.0; n];
            let mut accepted = false;
            while s > 1e-18 {
                for i in 0..n {
                    trial[i] = x[i] + s * dx[i];
                }
                if let Some(v) = self.barrier_value(t, &trial) {
                    if v <= phi + opts.alpha * s * slope {
                        // progress lost in rounding of the barrier value
                        if phi - v <= STALL * phi.abs().max(1.0) {
                            stalled += 1;
                        } else {
                            stalled = 0;
                        }
                        phi = v;
                        accepted = true;
                        break;
                    }
                }
                s *= opts.beta;
            }
            if !accepted {
                // No descent possible at working precision: treat as centered.
                return Ok(steps);
            }
            std::mem::swap(x, &mut trial);
            if stalled >= STALL_STEPS {
                return Ok(steps);
            }
        }
    }

    fn stationarity(&mut self, t: f64, x: &[f64]) -> f64 {
        let n = self.n;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        self.assemble(t, x, &mut grad, &mut hess);
        if let Some((a, _)) = &self.eq {
            let aat = a * a.transpose();
            if let Some(nu) = aat.lu().solve(&(-(a * &grad))) {
                grad += a.transpose() * nu;
            }
        }
        let mut fgrad = DVector::<f64>::zeros(n);
        for f in &self.objective {
            let sup = f.support();
            let m = sup.len();
            f.eval(x, Some(&mut self.gbuf[..m]), None);
            for (a, &i) in sup.iter().enumerate() {
                fgrad[i] += self.gbuf[a];
            }
        }
        grad.amax() / t / fgrad.amax().max(1.0)
    }

    fn run(
        &mut self,
        x0: &[f64],
        opts: &SolveOptions,
        stop: Option<StopFn>,
    ) -> Result<SolveReport, SolveError> {
        let mut x = x0.to_vec();
        let m = self.num_barrier_terms() as f64;
        let f0 = self.objective(&x);
        let mut t = opts.t0.unwrap_or_else(|| (m.max(1.0) / f0.abs().max(1.0)).max(1e-12));
        let mut newton = 0;
        let mut outer = 0;
        let mut gap_history = Vec::new();
        loop {
            outer += 1;
            let budget = opts.max_newton.saturating_sub(newton);
            let centered = self.center(t, &mut x, opts, budget, stop);
            let status = match centered {
                Ok(k) => {
                    newton += k;
                    None
                }
                Err(SolveError::MaxIter(k)) => {
                    newton += k;
                    Some(SolveStatus::MaxIter)
                }
                Err(e) => return Err(e),
            };
            let f = self.objective(&x);
            let gap = m / t;
            gap_history.push(gap);
            let scale = f.abs().max(1.0);
            let stopped = stop.is_some_and(|s| s(&x));
            if status.is_some() || stopped || gap <= opts.tol * scale || m == 0.0 {
                let stat = self.stationarity(t, &x);
                let kkt = stat.max(gap / scale);
                let status = status.unwrap_or(SolveStatus::Optimal);
                return Ok(SolveReport {
                    objective_value: f,
                    x,
                    kkt_residual: kkt,
                    duality_gap: gap,
                    barrier_iterations: outer,
                    newton_iterations: newton,
                    gap_history,
                    status,
                });
            }
            t *= opts.mu;
        }
    }
}

/// Finds a strictly feasible point by minimizing the largest constraint
/// value, starting from `x0` pulled inside the bounds.
fn phase_one(prog: &ConvexProgram, x0: &[f64], opts: &SolveOptions) -> Result<Vec<f64>, SolveError> {
    let n = prog.n_vars;
    let mut x: Vec<f64> = x0
        .iter()
        .zip(prog.lower.iter().zip(&prog.upper))
        .map(|(&v, (&lo, &hi))| interior_of(v, lo, hi))
        .collect();
    let worst = prog
        .constraints
        .iter()
        .map(|g| g.eval(&x, None, None))
        .fold(f64::NEG_INFINITY, f64::max);
    if worst < 0.0 {
        return Ok(x);
    }
    let s = n;
    x.push(worst + worst.abs().max(1.0));
    let slack = Affine::new([(s, 1.0)], 0.0);
    // A weak proximal term keeps free directions bounded.
    let prox = Quadratic {
        support: (0..n).collect(),
        q: DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            x[..n].iter().map(|v| 1e-6 / v.abs().max(1.0).powi(2)),
        )),
        c: DVector::from_iterator(n, x[..n].iter().map(|v| -1e-6 * v / v.abs().max(1.0).powi(2))),
        constant: 0.0,
    };
    let mut lower = prog.lower.clone();
    lower.push(-1.0);
    let mut upper = prog.upper.clone();
    upper.push(f64::INFINITY);
    let eq = prog.equalities.as_ref().map(|(a, b)| {
        let mut a2 = DMatrix::zeros(a.nrows(), n + 1);
        a2.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        (a2, b.clone())
    });
    let mut engine = Engine::new(
        n + 1,
        vec![&slack as &dyn Smooth, &prox],
        prog.constraints.iter().map(|c| c.as_ref()).collect(),
        Some(s),
        lower,
        upper,
        eq,
    );
    let stop = |z: &[f64]| z[s] < 0.0;
    let report = engine.run(&x, opts, Some(&stop))?;
    let found = report.x[s];
    if found < 0.0 {
        let mut out = report.x;
        out.truncate(n);
        Ok(out)
    } else {
        Err(SolveError::Infeasible(found))
    }
}

fn interior_of(v: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let pad = 1e-3 * (hi - lo);
            v.clamp(lo + pad, hi - pad)
        }
        (true, false) => v.max(lo + 1e-3 * lo.abs().max(1.0)),
        (false, true) => v.min(hi - 1e-3 * hi.abs().max(1.0)),
        (false, false) => v,
    }
}

/// Minimizes `prog` by the log-barrier method starting from `x0`.
///
/// `x0` should be strictly feasible; otherwise a phase-I problem is solved
/// first and [`SolveError::Infeasible`] returned if it cannot find an
/// interior point. Equality constraints must already hold at `x0`.
pub fn solve(prog: &ConvexProgram, x0: &[f64], opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let n = prog.n_vars;
    if x0.len() != n || prog.lower.len() != n || prog.upper.len() != n {
        return Err(SolveError::Dimension(format!(
            "x0 has {} entries, bounds {}/{}, program {n}",
            x0.len(),
            prog.lower.len(),
            prog.upper.len()
        )));
    }
    if let Some((a, b)) = &prog.equalities {
        if a.ncols() != n || a.nrows() != b.len() {
            return Err(SolveError::Dimension("equality matrix shape".into()));
        }
        let r = (a * DVector::from_column_slice(x0) - b).amax();
        if r > opts.feas_tol * b.amax().max(1.0) {
            return Err(SolveError::Infeasible(r));
        }
    }
    let start = if prog.is_strictly_feasible(x0) {
        x0.to_vec()
    } else {
        phase_one(prog, x0, opts)?
    };
    let mut engine = Engine::new(
        n,
        prog.objective.iter().map(|f| f.as_ref()).collect(),
        prog.constraints.iter().map(|c| c.as_ref()).collect(),
        None,
        prog.lower.clone(),
        prog.upper.clone(),
        prog.equalities.clone(),
    );
    let mut report = engine.run(&start, opts, None)?;
    // The barrier path may leave a start that was already within the final
    // gap of optimal; never return something worse than it.
    let f_start = prog.objective_value(&start);
    if f_start < report.objective_value {
        report.x = start;
        report.objective_value = f_start;
    }
    Ok(report)
}
