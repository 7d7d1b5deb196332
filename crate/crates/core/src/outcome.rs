use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Latency, energies and constraint residuals of one round, however it was
/// scheduled. Per-UE vectors follow the scenario's FL UE order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub latency: f64,
    pub e_cp: Vec<f64>,
    pub e_cm: Vec<f64>,
    pub e_tot: Vec<f64>,
    /// Average rate of each HB UE over the round.
    pub hb_avg_rates: Vec<f64>,
    /// Latency plus the weighted total energy.
    pub objective: f64,
    /// Worst residual of each constraint family, normalized so that `<= 0`
    /// means satisfied and `1` means "as large as the requirement itself".
    pub residuals: BTreeMap<String, f64>,
}

impl RoundOutcome {
    pub fn total_energy(&self) -> f64 {
        self.e_tot.iter().sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Collects per-family maxima of residuals.
#[derive(Debug, Default)]
pub(crate) struct ResidualSet(BTreeMap<String, f64>);

impl ResidualSet {
    pub fn push(&mut self, family: &str, value: f64) {
        let v = self.0.entry(family.to_string()).or_insert(f64::NEG_INFINITY);
        if value > *v || value.is_nan() {
            *v = value;
        }
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.0
    }
}
