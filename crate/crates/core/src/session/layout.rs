use serde::{Deserialize, Serialize};

/// How HB UEs enter the convex subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HbMode {
    /// One RB variable per HB UE and session, one rate constraint per UE.
    PerUe,
    /// A single pooled HB variable per session. Because every HB UE's idle
    /// credit is proportional to its reservation, splitting the pool in
    /// proportion to the reservations satisfies all per-UE constraints
    /// exactly when the pooled one holds.
    #[default]
    Aggregated,
}

/// Position of every session variable in the solver's vector.
///
/// ```txt
///  t_dl[S] | t_idle | t_ul[S] | k_dl[S] | h_dl[G][S] | k_ul[tri] | p_ul[tri] | h_ul[G][S]
/// ```
///
/// where `tri` enumerates the pairs `(r, l)` with `l >= r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub s: usize,
    pub groups: usize,
}

impl Layout {
    pub fn new(s: usize, groups: usize) -> Self {
        Self { s, groups }
    }

    fn tri_len(&self) -> usize {
        self.s * (self.s + 1) / 2
    }

    fn tri(&self, r: usize, l: usize) -> usize {
        debug_assert!(r <= l && l < self.s);
        r * self.s - r * r.saturating_sub(1) / 2 + (l - r)
    }

    pub fn t_dl(&self, j: usize) -> usize {
        j
    }

    pub fn t_idle(&self) -> usize {
        self.s
    }

    pub fn t_ul(&self, l: usize) -> usize {
        self.s + 1 + l
    }

    pub fn k_dl(&self, j: usize) -> usize {
        2 * self.s + 1 + j
    }

    pub fn h_dl(&self, g: usize, j: usize) -> usize {
        3 * self.s + 1 + g * self.s + j
    }

    fn tri_base(&self) -> usize {
        3 * self.s + 1 + self.groups * self.s
    }

    pub fn k_ul(&self, r: usize, l: usize) -> usize {
        self.tri_base() + self.tri(r, l)
    }

    pub fn p_ul(&self, r: usize, l: usize) -> usize {
        self.tri_base() + self.tri_len() + self.tri(r, l)
    }

    pub fn h_ul(&self, g: usize, l: usize) -> usize {
        self.tri_base() + 2 * self.tri_len() + g * self.s + l
    }

    pub fn n_vars(&self) -> usize {
        self.tri_base() + 2 * self.tri_len() + self.groups * self.s
    }

    pub fn is_duration(&self, i: usize) -> bool {
        i <= 2 * self.s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_a_bijection() {
        for (s, g) in [(1, 0), (2, 1), (3, 4), (10, 1), (6, 0)] {
            let lay = Layout::new(s, g);
            let mut seen = vec![false; lay.n_vars()];
            let mut mark = |i: usize| {
                assert!(!seen[i], "{s} {g} index {i} used twice");
                seen[i] = true;
            };
            for j in 0..s {
                mark(lay.t_dl(j));
                mark(lay.t_ul(j));
                mark(lay.k_dl(j));
                for gg in 0..g {
                    mark(lay.h_dl(gg, j));
                    mark(lay.h_ul(gg, j));
                }
                for l in j..s {
                    mark(lay.k_ul(j, l));
                    mark(lay.p_ul(j, l));
                }
            }
            mark(lay.t_idle());
            assert!(seen.iter().all(|&b| b));
            assert_eq!(lay.n_vars(), 2 * s + 1 + s + s * g + s * (s + 1) + s * g);
        }
    }
}
