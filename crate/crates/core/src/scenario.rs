//! System instances: radio constants, UE placement, channel gains and the
//! federated-learning workload of every participating UE.
//!
//! Instances are either generated from a seed (UEs uniform over a disk
//! around the base station, free-space path loss only) or loaded from the
//! JSON schema documented in `docs/scenario-schema.md`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratemodel;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Radio constants shared by all links in the cell. SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConstants {
    pub num_rbs: u32,
    /// Subcarrier spacing in Hz.
    pub subcarrier_bw: f64,
    /// Subcarriers grouped into one resource block.
    pub subcarriers_per_rb: u32,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Base-station transmit power on each RB, in W.
    pub bs_power_per_rb: f64,
    /// Uplink power cap of every UE, in W.
    pub ue_max_power: f64,
    pub carrier_freq: f64,
    /// TTI (slot) length in seconds.
    pub tti_len: f64,
}

impl RadioConstants {
    /// Bandwidth of one resource block in Hz.
    pub fn rb_bandwidth(&self) -> f64 {
        self.subcarrier_bw * f64::from(self.subcarriers_per_rb)
    }

    pub fn k(&self) -> f64 {
        f64::from(self.num_rbs)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("subcarrier_bw", self.subcarrier_bw),
            ("noise_psd", self.noise_psd),
            ("bs_power_per_rb", self.bs_power_per_rb),
            ("ue_max_power", self.ue_max_power),
            ("carrier_freq", self.carrier_freq),
            ("tti_len", self.tti_len),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!("radio.{name} must be positive, got {v}")));
            }
        }
        if self.num_rbs == 0 {
            return Err(Error::InvalidScenario("radio.num_rbs must be at least 1".into()));
        }
        if self.subcarriers_per_rb == 0 {
            return Err(Error::InvalidScenario("radio.subcarriers_per_rb must be at least 1".into()));
        }
        Ok(())
    }
}

/// Local-training workload of one FL UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlWorkload {
    /// Model size exchanged in each direction, in bits.
    pub model_bits: f64,
    pub epochs: u32,
    pub cycles_per_sample: f64,
    pub local_samples: u64,
    /// Maximum CPU speed in cycles/s.
    pub f_max: f64,
    /// Effective switched capacitance.
    pub kappa: f64,
    /// Weight of this UE's energy (J) in the round objective.
    pub energy_weight: f64,
}

impl FlWorkload {
    /// Cycles needed per sample over all local epochs.
    pub fn alpha(&self) -> f64 {
        f64::from(self.epochs) * self.cycles_per_sample
    }

    /// Total CPU cycles of the local update.
    pub fn total_cycles(&self) -> f64 {
        self.alpha() * self.local_samples as f64
    }

    /// Compute time at `f_max`.
    pub fn min_compute_time(&self) -> f64 {
        self.total_cycles() / self.f_max
    }

    /// Coefficient `c` such that compute energy equals `c / tau^2` for a
    /// compute time `tau`.
    pub fn energy_coeff(&self) -> f64 {
        self.kappa * self.total_cycles().powi(3)
    }

    fn validate(&self, id: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidScenario(format!("fl_ues[{id}].workload: {what}")));
        if !(self.model_bits > 0.0) {
            return bad("model_bits must be positive");
        }
        if self.local_samples < 1 {
            return bad("local_samples must be at least 1");
        }
        if !(self.f_max > 0.0) {
            return bad("f_max must be positive");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.energy_weight >= 0.0) {
            return bad("energy_weight must be nonnegative");
        }
        if !(self.cycles_per_sample > 0.0) || self.epochs == 0 {
            return bad("epochs and cycles_per_sample must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UeKind {
    Fl,
    Hb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRecord {
    pub id: usize,
    pub kind: UeKind,
    /// Position in metres relative to the base station.
    pub position: [f64; 2],
    /// Large-scale power gain |h|^2.
    pub channel_gain_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<FlWorkload>,
}

impl UeRecord {
    pub fn distance(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }

    /// Workload of an FL UE. Panics on HB records, which never carry one.
    pub fn workload(&self) -> &FlWorkload {
        self.workload.as_ref().expect("FL UE without workload")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radio: RadioConstants,
    pub cell_radius: f64,
    /// FL UEs, sorted by descending channel gain.
    pub fl_ues: Vec<UeRecord>,
    pub hb_ues: Vec<UeRecord>,
    /// Average-rate floor of every HB UE, in bit/s.
    pub hb_threshold: f64,
    pub rng_seed: u64,
}

/// Result of [`Scenario::load`].
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    /// The FL UEs were not in descending-gain order and have been re-sorted.
    pub resorted: bool,
}

impl Scenario {
    pub fn num_fl(&self) -> usize {
        self.fl_ues.len()
    }

    pub fn num_hb(&self) -> usize {
        self.hb_ues.len()
    }

    /// Model size. All FL UEs train the same model.
    pub fn model_bits(&self) -> f64 {
        self.fl_ues[0].workload().model_bits
    }

    /// RBs each HB UE needs in every slot to meet its rate floor.
    pub fn hb_reservations(&self) -> Vec<f64> {
        self.hb_ues
            .iter()
            .map(|ue| ratemodel::hb_reservation(self.hb_threshold, ue.channel_gain_sq, &self.radio))
            .collect()
    }

    pub fn hb_reservation_total(&self) -> f64 {
        self.hb_reservations().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if self.fl_ues.is_empty() {
            return Err(Error::InvalidScenario("at least one FL UE is required".into()));
        }
        if !(self.cell_radius > 0.0) {
            return Err(Error::InvalidScenario("cell_radius must be positive".into()));
        }
        if !(self.hb_threshold >= 0.0 && self.hb_threshold.is_finite()) {
            return Err(Error::InvalidScenario("hb_threshold must be nonnegative".into()));
        }
        for (i, ue) in self.fl_ues.iter().chain(&self.hb_ues).enumerate() {
            if !(ue.channel_gain_sq > 0.0 && ue.channel_gain_sq.is_finite()) {
                return Err(Error::InvalidScenario(format!("UE #{i}: channel_gain_sq must be positive")));
            }
            if ue.distance() > self.cell_radius * (1.0 + 1e-12) {
                return Err(Error::InvalidScenario(format!("UE #{i}: position outside the cell")));
            }
        }
        for ue in &self.fl_ues {
            if ue.kind != UeKind::Fl {
                return Err(Error::InvalidScenario(format!("fl_ues[{}] has kind HB", ue.id)));
            }
            match &ue.workload {
                Some(w) => w.validate(ue.id)?,
                None => return Err(Error::InvalidScenario(format!("fl_ues[{}] has no workload", ue.id))),
            }
        }
        let d = self.model_bits();
        if self.fl_ues.iter().any(|u| u.workload().model_bits != d) {
            return Err(Error::InvalidScenario("all FL UEs must share one model_bits".into()));
        }
        if self.hb_ues.iter().any(|u| u.kind != UeKind::Hb) {
            return Err(Error::InvalidScenario("hb_ues must all have kind HB".into()));
        }
        Ok(())
    }

    pub fn is_sorted(&self) -> bool {
        self.fl_ues.windows(2).all(|w| w[0].channel_gain_sq >= w[1].channel_gain_sq)
    }

    /// Stable sort of the FL UEs by descending gain. Returns whether the
    /// order changed.
    pub fn sort_fl_ues(&mut self) -> bool {
        if self.is_sorted() {
            return false;
        }
        self.fl_ues
            .sort_by(|a, b| b.channel_gain_sq.total_cmp(&a.channel_gain_sq));
        true
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Loaded> {
        let mut scenario: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        scenario.validate()?;
        let resorted = scenario.sort_fl_ues();
        if resorted {
            log::warn!("FL UEs were not sorted by descending channel gain; re-sorted");
        }
        Ok(Loaded { scenario, resorted })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Loaded> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Generates a scenario from `ScenarioParams::default()` with the given
    /// overrides applied.
    pub fn generate(seed: u64, overrides: &Overrides) -> Result<Scenario> {
        let mut params = ScenarioParams::default();
        for (k, v) in overrides {
            params.set(k, *v)?;
        }
        params.generate(seed)
    }
}

/// Free-space power gain `(c / (4 pi d f))^2`.
pub fn free_space_gain(distance: f64, carrier_freq: f64) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * PI * distance * carrier_freq)).powi(2)
}

fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub type Overrides = BTreeMap<String, f64>;

/// Generation parameters. Defaults reproduce the reference configuration
/// (10 FL UEs, 20 HB UEs, 10 RBs, 600 kByte/s HB floor, 100 Mbit model).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub num_fl_ues: usize,
    pub num_hb_ues: usize,
    pub num_rbs: u32,
    pub subcarrier_bw: f64,
    pub subcarriers_per_rb: u32,
    pub noise_psd_dbm_hz: f64,
    pub bs_power_dbm: f64,
    pub ue_max_power_dbm: f64,
    pub carrier_freq: f64,
    pub tti_len: f64,
    pub cell_radius: f64,
    /// UEs closer than this are placed at this distance (path loss blows up at 0).
    pub min_distance: f64,
    pub theta_kbyte_per_s: f64,
    pub model_bits: f64,
    pub epochs: u32,
    pub cycles_per_sample: f64,
    pub total_samples: u64,
    pub f_max: f64,
    pub kappa: f64,
    pub energy_weight: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_fl_ues: 10,
            num_hb_ues: 20,
            num_rbs: 10,
            subcarrier_bw: 60e3,
            subcarriers_per_rb: 12,
            noise_psd_dbm_hz: -174.0,
            bs_power_dbm: 30.0,
            ue_max_power_dbm: 23.0,
            carrier_freq: 3.5e9,
            tti_len: 1e-3,
            cell_radius: 50.0,
            min_distance: 1.0,
            theta_kbyte_per_s: 600.0,
            model_bits: 100e6,
            epochs: 20,
            // 15 cycles/bit times one 32x32x3 image of 32-bit floats.
            cycles_per_sample: 15.0 * 32.0 * 32.0 * 3.0 * 32.0,
            total_samples: 60_000,
            f_max: 2e9,
            kappa: 1e-28,
            energy_weight: 0.05,
        }
    }
}

/// Accepted override keys, canonical name first, then aliases.
pub const PARAMETER_NAMES: &[(&str, &[&str])] = &[
    ("num_fl_ues", &["S"]),
    ("num_hb_ues", &["E", "|E|"]),
    ("num_rbs", &["K"]),
    ("subcarrier_bw", &["B"]),
    ("subcarriers_per_rb", &[]),
    ("noise_psd_dbm_hz", &["N0"]),
    ("bs_power_dbm", &["Pd"]),
    ("ue_max_power_dbm", &["Pmax"]),
    ("carrier_freq", &["freq"]),
    ("tti_len", &["delta"]),
    ("cell_radius", &["radius"]),
    ("min_distance", &[]),
    ("theta_kbyte_per_s", &["theta"]),
    ("model_bits", &["D"]),
    ("epochs", &["I"]),
    ("cycles_per_sample", &["C"]),
    ("total_samples", &[]),
    ("f_max", &[]),
    ("kappa", &[]),
    ("energy_weight", &["lambda"]),
];

fn canonical(key: &str) -> Option<&'static str> {
    PARAMETER_NAMES
        .iter()
        .find(|(name, aliases)| *name == key || aliases.contains(&key))
        .map(|(name, _)| *name)
}

fn as_count(key: &str, v: f64) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(Error::InvalidArgument(format!("{key} must be a nonnegative integer, got {v}")))
    }
}

impl ScenarioParams {
    pub fn set(&mut self, key: &str, v: f64) -> Result<()> {
        let name = canonical(key).ok_or_else(|| Error::UnknownParameter(key.to_string()))?;
        match name {
            "num_fl_ues" => self.num_fl_ues = as_count(name, v)? as usize,
            "num_hb_ues" => self.num_hb_ues = as_count(name, v)? as usize,
            "num_rbs" => self.num_rbs = as_count(name, v)? as u32,
            "subcarrier_bw" => self.subcarrier_bw = v,
            "subcarriers_per_rb" => self.subcarriers_per_rb = as_count(name, v)? as u32,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = v,
            "bs_power_dbm" => self.bs_power_dbm = v,
            "ue_max_power_dbm" => self.ue_max_power_dbm = v,
            "carrier_freq" => self.carrier_freq = v,
            "tti_len" => self.tti_len = v,
            "cell_radius" => self.cell_radius = v,
            "min_distance" => self.min_distance = v,
            "theta_kbyte_per_s" => self.theta_kbyte_per_s = v,
            "model_bits" => self.model_bits = v,
            "epochs" => self.epochs = as_count(name, v)? as u32,
            "cycles_per_sample" => self.cycles_per_sample = v,
            "total_samples" => self.total_samples = as_count(name, v)?,
            "f_max" => self.f_max = v,
            "kappa" => self.kappa = v,
            "energy_weight" => self.energy_weight = v,
            _ => unreachable!("canonical name without setter: {name}"),
        }
        Ok(())
    }

    pub fn radio(&self) -> RadioConstants {
        RadioConstants {
            num_rbs: self.num_rbs,
            subcarrier_bw: self.subcarrier_bw,
            subcarriers_per_rb: self.subcarriers_per_rb,
            noise_psd: dbm_to_watt(self.noise_psd_dbm_hz),
            bs_power_per_rb: dbm_to_watt(self.bs_power_dbm),
            ue_max_power: dbm_to_watt(self.ue_max_power_dbm),
            carrier_freq: self.carrier_freq,
            tti_len: self.tti_len,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Scenario> {
        if !(self.cell_radius > 0.0) {
            return Err(Error::InvalidScenario("cell radius must be positive".into()));
        }
        if self.num_rbs == 0 {
            return Err(Error::InvalidScenario("K must be at least 1".into()));
        }
        if self.num_fl_ues == 0 {
            return Err(Error::InvalidScenario("at least one FL UE is required".into()));
        }
        if self.total_samples < self.num_fl_ues as u64 {
            return Err(Error::InvalidScenario("fewer samples than FL UEs".into()));
        }
        let min_d = self.min_distance.clamp(f64::MIN_POSITIVE, self.cell_radius);
        let radio = self.radio();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let place = |rng: &mut ChaCha8Rng| {
            // Uniform over the disk area.
            let r = (self.cell_radius * rng.random::<f64>().sqrt()).max(min_d);
            let phi = 2.0 * PI * rng.random::<f64>();
            let position = [r * phi.cos(), r * phi.sin()];
            (position, free_space_gain(r, self.carrier_freq))
        };

        let s = self.num_fl_ues;
        let mut fl_ues = Vec::with_capacity(s);
        for id in 0..s {
            let (position, gain) = place(&mut rng);
            fl_ues.push(UeRecord {
                id,
                kind: UeKind::Fl,
                position,
                channel_gain_sq: gain,
                workload: None,
            });
        }
        let mut hb_ues = Vec::with_capacity(self.num_hb_ues);
        for id in 0..self.num_hb_ues {
            let (position, gain) = place(&mut rng);
            hb_ues.push(UeRecord {
                id,
                kind: UeKind::Hb,
                position,
                channel_gain_sq: gain,
                workload: None,
            });
        }

        let samples = split_samples(self.total_samples, s, &mut rng);
        for (ue, n) in fl_ues.iter_mut().zip(samples) {
            ue.workload = Some(FlWorkload {
                model_bits: self.model_bits,
                epochs: self.epochs,
                cycles_per_sample: self.cycles_per_sample,
                local_samples: n,
                f_max: self.f_max,
                kappa: self.kappa,
                energy_weight: self.energy_weight,
            });
        }

        let mut scenario = Scenario {
            radio,
            cell_radius: self.cell_radius,
            fl_ues,
            hb_ues,
            hb_threshold: self.theta_kbyte_per_s * 8.0 * 1000.0,
            rng_seed: seed,
        };
        scenario.sort_fl_ues();
        for (i, ue) in scenario.fl_ues.iter_mut().enumerate() {
            ue.id = i;
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Splits `total` samples by uniform random ratios. Each share is floored
/// and the remainder goes to the last UE; every UE keeps at least one
/// sample.
fn split_samples(total: u64, n: usize, rng: &mut impl Rng) -> Vec<u64> {
    let ratios: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = ratios.iter().sum();
    let mut out: Vec<u64> = ratios
        .iter()
        .map(|r| ((total as f64) * r / sum).floor() as u64)
        .collect();
    for v in out.iter_mut() {
        if *v == 0 {
            *v = 1;
        }
    }
    let assigned: u64 = out[..n - 1].iter().sum();
    if assigned >= total {
        // Degenerate draw: fall back to an even split.
        out = vec![total / n as u64; n];
        out[n - 1] += total % n as u64;
    } else {
        out[n - 1] = total - assigned;
    }
    out
}
