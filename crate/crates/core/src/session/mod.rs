//! The session-based round problem and the iterative algorithm that solves
//! it for a fixed uplink ordering.
//!
//! Downlink session `j` ends when FL UE `j` (scenario order, strongest
//! channel first) has the whole model. After an idle gap the uplink
//! sessions follow; uplink session `l` starts when the UE of rank `l` in the
//! [`Ordering`] finishes its local training. Allocations are constant
//! within a session. All indices are 0-based.

mod algorithm;
mod evaluate;
mod init;
mod layout;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use algorithm::{enumerate_orderings, run_algorithm1, trace_csv, Algorithm1Options, Algorithm1Result, TraceRow};
pub use evaluate::evaluate;
pub use init::init_feasible;
pub use layout::{HbMode, Layout};
pub use problem::{build_subproblem, update_aux};

pub use problem::SessionProblem;

/// Rank order of uplink starts: `ordering[r]` is the index of the FL UE
/// whose uplink starts `r`-th.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ordering(Vec<usize>);

impl Ordering {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; sigma.len()];
        for &u in &sigma {
            if u >= sigma.len() || seen[u] {
                return Err(Error::InvalidArgument(format!("{sigma:?} is not a permutation")));
            }
            seen[u] = true;
        }
        Ok(Self(sigma))
    }

    pub fn identity(s: usize) -> Self {
        Self((0..s).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// UE of rank `r`.
    pub fn ue(&self, r: usize) -> usize {
        self.0[r]
    }

    /// Rank of UE `u`.
    pub fn rank_of(&self, u: usize) -> usize {
        self.0.iter().position(|&v| v == u).expect("UE outside the ordering")
    }

    /// Every ordering of `s` UEs in lexicographic order.
    pub fn all(s: usize) -> Vec<Ordering> {
        let mut cur: Vec<usize> = (0..s).collect();
        let mut out = vec![Ordering(cur.clone())];
        loop {
            let Some(i) = (1..s).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..s).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
            out.push(Ordering(cur.clone()));
        }
    }
}

impl TryFrom<Vec<usize>> for Ordering {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Ordering> for Vec<usize> {
    fn from(o: Ordering) -> Self {
        o.0
    }
}

impl std::fmt::Display for Ordering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|u| u.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Decision variables of the session problem. `k_ul[r][l]` and `p_ul[r][l]`
/// belong to the UE of rank `r` and are only meaningful for `l >= r`;
/// entries with `l < r` are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSchedule {
    pub ordering: Ordering,
    pub t_dl: Vec<f64>,
    pub t_idle: f64,
    pub t_ul: Vec<f64>,
    /// Broadcast RBs per downlink session.
    pub k_dl: Vec<f64>,
    /// `[e][j]`: RBs of HB UE `e` in downlink session `j`.
    pub k_hb_dl: Vec<Vec<f64>>,
    pub k_ul: Vec<Vec<f64>>,
    pub p_ul: Vec<Vec<f64>>,
    /// `[e][l]`: RBs of HB UE `e` in uplink session `l`.
    pub k_hb_ul: Vec<Vec<f64>>,
}

impl SessionSchedule {
    pub fn num_fl(&self) -> usize {
        self.t_dl.len()
    }

    pub fn latency(&self) -> f64 {
        self.t_dl.iter().sum::<f64>() + self.t_idle + self.t_ul.iter().sum::<f64>()
    }

    /// Compute time left to the UE of rank `r`: from the end of its downlink
    /// session to the start of uplink session `r`.
    pub fn implied_compute_time(&self, r: usize) -> f64 {
        let u = self.ordering.ue(r);
        self.t_ul[..r].iter().sum::<f64>() + self.t_dl[u + 1..].iter().sum::<f64>() + self.t_idle
    }

    /// Durations below `threshold` set to zero.
    pub fn snapped(mut self, threshold: f64) -> Self {
        for t in self.t_dl.iter_mut().chain(self.t_ul.iter_mut()).chain(std::iter::once(&mut self.t_idle)) {
            if *t < threshold {
                *t = 0.0;
            }
        }
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Transform coefficients, one per product term of the session problem.
/// HB entries are indexed by group: one group per HB UE in
/// [`HbMode::PerUe`], a single group in [`HbMode::Aggregated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxVars {
    pub y_hb_dl: Vec<Vec<f64>>,
    pub y_hb_ul: Vec<Vec<f64>>,
    pub y_fl_dl: Vec<f64>,
    /// `[r][l]`, zero for `l < r`.
    pub y_fl_ul: Vec<Vec<f64>>,
    /// `[r][l]`, zero for `l < r`.
    pub y_e: Vec<Vec<f64>>,
}
