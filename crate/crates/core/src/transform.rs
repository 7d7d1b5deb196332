//! Surrogates for the two kinds of nonconvex products in the round problem,
//! plus the smooth atoms the optimizers assemble their convex subproblems
//! from.
//!
//! A supply product `X(x) t` with concave `X >= 0` and `t > 0` satisfies
//!
//! ```txt
//!     X t >= 2 y sqrt(X) - y^2 / t        for every y,
//! ```
//!
//! with equality at `y = sqrt(X) t`, and the right-hand side is jointly
//! concave in `(x, t)`. A cost product `p t` is majorized by
//!
//! ```txt
//!     p t <= p^2 / (2 y) + y t^2 / 2      for every y > 0,
//! ```
//!
//! with equality at `y = p / t`.

use crate::convex::Smooth;
use crate::ratemodel::perspective_rate_derivs;

/// The concave lower bound `2 y sqrt(x) - y^2 / t` of `x t`.
pub fn supply_lower(x: f64, t: f64, y: f64) -> f64 {
    2.0 * y * x.max(0.0).sqrt() - y * y / t
}

/// The `y` at which [`supply_lower`] is tight.
pub fn supply_aux(x: f64, t: f64) -> f64 {
    x.max(0.0).sqrt() * t
}

/// The convex upper bound `p^2 / (2 y) + y t^2 / 2` of `p t`.
pub fn cost_upper(p: f64, t: f64, y: f64) -> f64 {
    p * p / (2.0 * y) + y * t * t / 2.0
}

/// The `y` at which [`cost_upper`] is tight.
pub fn cost_aux(p: f64, t: f64) -> f64 {
    p / t
}

/// Concave quantity under the square root of a supply piece.
#[derive(Debug, Clone, Copy)]
pub enum Supply {
    /// `a * x[k]`.
    Linear { k: usize, a: f64 },
    /// `scale * K W log2(1 + a p / K)` with `K = x[k]`, `p = x[p]`.
    Rate { k: usize, p: usize, a: f64, w: f64, scale: f64 },
}

impl Supply {
    /// Value and, when asked, gradient and Hessian over `(k)` or `(k, p)`.
    fn eval(&self, x: &[f64], grad: &mut [f64; 2], hess: &mut [[f64; 2]; 2]) -> f64 {
        match *self {
            Supply::Linear { k, a } => {
                *grad = [a, 0.0];
                *hess = [[0.0; 2]; 2];
                a * x[k]
            }
            Supply::Rate { k, p, a, w, scale } => {
                let (v, g, h) = perspective_rate_derivs(x[k].max(1e-300), x[p], a, w);
                *grad = [scale * g[0], scale * g[1]];
                *hess = [
                    [scale * h[0][0], scale * h[0][1]],
                    [scale * h[1][0], scale * h[1][1]],
                ];
                scale * v
            }
        }
    }

    fn vars(&self) -> ([usize; 2], usize) {
        match *self {
            Supply::Linear { k, .. } => ([k, usize::MAX], 1),
            Supply::Rate { k, p, .. } => ([k, p], 2),
        }
    }
}

/// One `coef * (y^2 / t - 2 y sqrt(X))` term of a [`SupplyConstraint`].
#[derive(Debug, Clone, Copy)]
pub struct SupplyPiece {
    pub t: usize,
    pub y: f64,
    pub coef: f64,
    pub supply: Supply,
}

/// `constant + c . x - sum_i coef_i (2 y_i sqrt(X_i) - y_i^2 / t_i)`: the
/// transformed form of `sum_i coef_i X_i t_i >= constant + c . x`. Convex
/// when every `coef_i > 0`.
#[derive(Debug, Clone)]
pub struct SupplyConstraint {
    support: Vec<usize>,
    constant: f64,
    linear: Vec<(usize, f64)>,
    pieces: Vec<(SupplyPiece, usize, [usize; 2])>,
}

impl SupplyConstraint {
    pub fn new(constant: f64, linear: Vec<(usize, f64)>, pieces: Vec<SupplyPiece>) -> Self {
        let mut support: Vec<usize> = Vec::new();
        let local = |i: usize, support: &mut Vec<usize>| match support.iter().position(|&j| j == i) {
            Some(a) => a,
            None => {
                support.push(i);
                support.len() - 1
            }
        };
        let linear: Vec<(usize, f64)> = linear.into_iter().map(|(i, c)| (local(i, &mut support), c)).collect();
        let pieces = pieces
            .into_iter()
            .map(|pc| {
                let lt = local(pc.t, &mut support);
                let (vars, nv) = pc.supply.vars();
                let mut lv = [usize::MAX; 2];
                for a in 0..nv {
                    lv[a] = local(vars[a], &mut support);
                }
                (pc, lt, lv)
            })
            .collect();
        Self { support, constant, linear, pieces }
    }
}

impl Smooth for SupplyConstraint {
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
        let mut value = self.constant;
        for &(a, c) in &self.linear {
            value += c * x[self.support[a]];
            if let Some(g) = grad.as_deref_mut() {
                g[a] += c;
            }
        }
        let mut qg = [0.0; 2];
        let mut qh = [[0.0; 2]; 2];
        for (pc, lt, lv) in &self.pieces {
            let t = x[pc.t];
            let y = pc.y;
            let q = pc.supply.eval(x, &mut qg, &mut qh).max(1e-300);
            let r = q.sqrt();
            value += pc.coef * (y * y / t - 2.0 * y * r);
            let nv = pc.supply.vars().1;
            if let Some(g) = grad.as_deref_mut() {
                g[*lt] -= pc.coef * y * y / (t * t);
                for a in 0..nv {
                    g[lv[a]] -= pc.coef * y * qg[a] / r;
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                h[lt * m + lt] += 2.0 * pc.coef * y * y / (t * t * t);
                // -2 coef y * Hess(sqrt q)
                for a in 0..nv {
                    for b in 0..nv {
                        let hs = qh[a][b] / (2.0 * r) - qg[a] * qg[b] / (4.0 * q * r);
                        h[lv[a] * m + lv[b]] -= 2.0 * pc.coef * y * hs;
                    }
                }
            }
        }
        value
    }
}

/// `weight / (c . x)^2`, convex where `c . x > 0` and `+inf` elsewhere.
#[derive(Debug, Clone)]
pub struct InverseSquare {
    pub support: Vec<usize>,
    pub coefs: Vec<f64>,
    pub weight: f64,
}

impl Smooth for InverseSquare {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let s: f64 = self.support.iter().zip(&self.coefs).map(|(&i, c)| c * x[i]).sum();
        if !(s > 0.0) {
            return f64::INFINITY;
        }
        let w = self.weight;
        if let Some(g) = grad {
            for (ga, ca) in g.iter_mut().zip(&self.coefs) {
                *ga = -2.0 * w * ca / (s * s * s);
            }
        }
        if let Some(h) = hess {
            let m = self.coefs.len();
            let f = 6.0 * w / (s * s * s * s);
            for a in 0..m {
                for b in 0..m {
                    h[a * m + b] = f * self.coefs[a] * self.coefs[b];
                }
            }
        }
        w / (s * s)
    }
}

/// `weight / x[k]`, convex for `x[k] > 0` and `+inf` elsewhere.
#[derive(Debug, Clone)]
pub struct Reciprocal {
    support: [usize; 1],
    weight: f64,
}

impl Reciprocal {
    pub fn new(k: usize, weight: f64) -> Self {
        Self { support: [k], weight }
    }
}

impl Smooth for Reciprocal {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let v = x[self.support[0]];
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        if let Some(g) = grad {
            g[0] = -self.weight / (v * v);
        }
        if let Some(h) = hess {
            h[0] = 2.0 * self.weight / (v * v * v);
        }
        self.weight / v
    }
}

/// `weight * (p^2 / (2 y) + y t^2 / 2)` over `(x[p], x[t])`.
#[derive(Debug, Clone)]
pub struct CostBound {
    support: [usize; 2],
    y: f64,
    weight: f64,
}

impl CostBound {
    pub fn new(p: usize, t: usize, y: f64, weight: f64) -> Self {
        Self { support: [p, t], y, weight }
    }
}

impl Smooth for CostBound {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let (p, t) = (x[self.support[0]], x[self.support[1]]);
        let (w, y) = (self.weight, self.y);
        if let Some(g) = grad {
            g[0] = w * p / y;
            g[1] = w * y * t;
        }
        if let Some(h) = hess {
            h.copy_from_slice(&[w / y, 0.0, 0.0, w * y]);
        }
        w * cost_upper(p, t, y)
    }
}
