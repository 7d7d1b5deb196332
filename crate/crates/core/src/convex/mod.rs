//! Smooth convex programs and a log-barrier interior-point solver.
//!
//! ```txt
//!     min  f(x)
//!     s.t. g_i(x) <= 0        (smooth convex)
//!          A x = b
//!          lower <= x <= upper
//! ```
//!
//! `f` and every `g_i` are [`Smooth`] functions that report their value,
//! gradient and Hessian restricted to the variables they depend on, so
//! assembly cost follows the sparsity of the problem while the Newton
//! system itself is solved densely.

mod barrier;
mod check;

use nalgebra::{DMatrix, DVector};

pub use barrier::{solve, SolveOptions, SolveReport, SolveStatus};
pub use check::{check_derivatives, check_hessians};

/// A twice-differentiable function of a subset of the variables.
pub trait Smooth: Send + Sync {
    /// Indices of the variables the function depends on, without duplicates.
    fn support(&self) -> &[usize];

    /// Value at the full vector `x`. When given, `grad` (length
    /// `support().len()`) receives the gradient and `hess` (row-major,
    /// `support().len()` squared) the Hessian, both in support order.
    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64;
}

/// `c . x[support] + constant`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub support: Vec<usize>,
    pub coefs: Vec<f64>,
    pub constant: f64,
}

impl Affine {
    pub fn new(terms: impl IntoIterator<Item = (usize, f64)>, constant: f64) -> Self {
        let mut support: Vec<usize> = Vec::new();
        let mut coefs: Vec<f64> = Vec::new();
        for (i, c) in terms {
            match support.iter().position(|&j| j == i) {
                Some(k) => coefs[k] += c,
                None => {
                    support.push(i);
                    coefs.push(c);
                }
            }
        }
        Self { support, coefs, constant }
    }
}

impl Smooth for Affine {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad {
            g.copy_from_slice(&self.coefs);
        }
        if let Some(h) = hess {
            h.fill(0.0);
        }
        self.support
            .iter()
            .zip(&self.coefs)
            .map(|(&i, c)| c * x[i])
            .sum::<f64>()
            + self.constant
    }
}

/// `0.5 y^T Q y + c^T y + constant` with `y = x[support]`. `Q` must be
/// symmetric positive semidefinite for the function to be convex.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub support: Vec<usize>,
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub constant: f64,
}

impl Smooth for Quadratic {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let y = DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| x[i]));
        let qy = &self.q * &y;
        if let Some(g) = grad {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = qy[k] + self.c[k];
            }
        }
        if let Some(h) = hess {
            let m = self.support.len();
            for r in 0..m {
                for c in 0..m {
                    h[r * m + c] = self.q[(r, c)];
                }
            }
        }
        0.5 * y.dot(&qy) + self.c.dot(&y) + self.constant
    }
}

/// Sum of smooth terms, presented as one function over the union of their
/// supports.
pub struct Sum {
    support: Vec<usize>,
    terms: Vec<(Box<dyn Smooth>, Vec<usize>)>,
    max_len: usize,
}

impl Sum {
    pub fn new(terms: Vec<Box<dyn Smooth>>) -> Self {
        let mut support: Vec<usize> = Vec::new();
        let mut mapped = Vec::with_capacity(terms.len());
        let mut max_len = 0;
        for t in terms {
            let local = t
                .support()
                .iter()
                .map(|&i| match support.iter().position(|&j| j == i) {
                    Some(a) => a,
                    None => {
                        support.push(i);
                        support.len() - 1
                    }
                })
                .collect();
            max_len = max_len.max(t.support().len());
            mapped.push((t, local));
        }
        Self { support, terms: mapped, max_len }
    }
}

impl Smooth for Sum {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>, mut hess: Option<&mut [f64]>) -> f64 {
        let m = self.support.len();
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        if let Some(h) = hess.as_deref_mut() {
            h.fill(0.0);
        }
        let mut gbuf = vec![0.0; self.max_len];
        let mut hbuf = vec![0.0; self.max_len * self.max_len];
        let mut total = 0.0;
        for (f, local) in &self.terms {
            let k = local.len();
            let want_g = grad.is_some();
            let want_h = hess.is_some();
            total += f.eval(
                x,
                want_g.then_some(&mut gbuf[..k]),
                want_h.then_some(&mut hbuf[..k * k]),
            );
            if let Some(g) = grad.as_deref_mut() {
                for (a, &la) in local.iter().enumerate() {
                    g[la] += gbuf[a];
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for (a, &la) in local.iter().enumerate() {
                    for (b, &lb) in local.iter().enumerate() {
                        h[la * m + lb] += hbuf[a * k + b];
                    }
                }
            }
        }
        total
    }
}

/// A convex program in the form accepted by [`solve`].
pub struct ConvexProgram {
    pub n_vars: usize,
    /// Summed to form the objective.
    pub objective: Vec<Box<dyn Smooth>>,
    /// Each entry is a constraint `g(x) <= 0`.
    pub constraints: Vec<Box<dyn Smooth>>,
    /// Optional `A x = b`.
    pub equalities: Option<(DMatrix<f64>, DVector<f64>)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ConvexProgram {
    /// Unconstrained program with free variables.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: Vec::new(),
            constraints: Vec::new(),
            equalities: None,
            lower: vec![f64::NEG_INFINITY; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|f| f.eval(x, None, None)).sum()
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|g| g.eval(x, None, None)).collect()
    }

    /// Largest violation over inequality constraints, bounds and
    /// equalities (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = self
            .constraints
            .iter()
            .map(|g| g.eval(x, None, None))
            .fold(0.0, f64::max);
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - v).max(v - hi);
        }
        if let Some((a, b)) = &self.equalities {
            let r = a * DVector::from_column_slice(x) - b;
            worst = worst.max(r.amax());
        }
        worst
    }

    /// Whether `x` satisfies every inequality and bound strictly.
    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
            && self.constraints.iter().all(|g| g.eval(x, None, None) < 0.0)
    }
}
