//! Simulation configuration, profiles and loading from JSON or TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bem::min_bem_order;
use crate::channel::DopplerProfile;
use crate::detector::{ErrorTermModel, QamConstellation};
use crate::error::{Error, Result};
use crate::transforms::DEFAULT_C2;

pub const SPEED_OF_LIGHT: f64 = 3e8;
pub const DEFAULT_CARRIER_HZ: f64 = 24e9;
pub const DEFAULT_SUBCARRIER_HZ: f64 = 15e3;

/// Normalized maximum Doppler `alpha_max = v f_c / (c delta_f)` for a speed in km/h.
pub fn speed_to_alpha(speed_kmh: f64, carrier_hz: f64, subcarrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT / subcarrier_hz
}

/// Inverse of [`speed_to_alpha`].
pub fn alpha_to_speed(alpha: f64, carrier_hz: f64, subcarrier_hz: f64) -> f64 {
    alpha * subcarrier_hz * SPEED_OF_LIGHT / carrier_hz * 3.6
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small frames and trial counts for routine runs.
    Desk,
    /// The reference scale: N = 256 and 10^4 trials.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    /// Integer Doppler design used for the first chirp rate.
    pub design_alpha_max: u32,
    pub k_nu: u32,
    pub c2: f64,
    pub carrier_hz: f64,
    pub subcarrier_hz: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 64,
            design_alpha_max: 1,
            k_nu: 1,
            c2: DEFAULT_C2,
            carrier_hz: DEFAULT_CARRIER_HZ,
            subcarrier_hz: DEFAULT_SUBCARRIER_HZ,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub delays: Vec<usize>,
    /// Per-path powers; empty means equal powers.
    pub power_profile: Vec<f64>,
    pub shared_delays: bool,
    /// Terminal speed; takes precedence over `alpha_max` when set.
    pub speed_kmh: Option<f64>,
    pub alpha_max: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { delays: vec![0, 1, 2], power_profile: vec![], shared_delays: false, speed_kmh: Some(675.0), alpha_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BemConfig {
    /// BEM order `Q`; derived from the design Doppler when absent.
    pub order: Option<usize>,
    pub oversampling: usize,
}

impl Default for BemConfig {
    fn default() -> Self {
        Self { order: Some(4), oversampling: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub l_max: usize,
    pub snr_p_db: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { l_max: 2, snr_p_db: 30.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub qam_order: usize,
    pub a_m: Option<f64>,
    pub b_m: Option<f64>,
    /// Operating data SNR for runs that do not sweep it.
    pub snr_d_db: f64,
    pub error_term: ErrorTermModel,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { qam_order: 4, a_m: None, b_m: None, snr_d_db: 20.0, error_term: ErrorTermModel::Expected }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrids {
    pub snr_p_db: Vec<f64>,
    pub snr_d_db: Vec<f64>,
    pub speed_kmh: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            snr_p_db: vec![15.0, 20.0, 25.0, 30.0, 35.0],
            snr_d_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            speed_kmh: vec![135.0, 405.0, 675.0],
        }
    }
}

/// Early stopping for BER points: run until enough bit errors are seen or
/// the bit budget is spent, never beyond `trials`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    pub min_bit_errors: u64,
    pub max_bits: u64,
    /// Trials per batch; stopping is checked between batches only.
    pub batch: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { min_bit_errors: 100, max_bits: 1_000_000, batch: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub channel: ChannelConfig,
    pub bem: BemConfig,
    pub frame: FrameConfig,
    pub detection: DetectionConfig,
    pub sweeps: SweepGrids,
    pub stop: Option<StopRule>,
    pub trials: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

impl SimConfig {
    pub fn profile(profile: Profile) -> Self {
        let (n, trials) = match profile {
            Profile::Desk => (64, 2000),
            Profile::Full => (256, 10_000),
        };
        Self {
            grid: GridConfig { n, ..GridConfig::default() },
            channel: ChannelConfig::default(),
            bem: BemConfig::default(),
            frame: FrameConfig::default(),
            detection: DetectionConfig::default(),
            sweeps: SweepGrids::default(),
            stop: None,
            trials,
            seed: 1,
        }
    }

    /// BER defaults: a larger frame and error-count stopping.
    pub fn ber_profile(profile: Profile) -> Self {
        let mut cfg = Self::profile(profile);
        if profile == Profile::Desk {
            cfg.grid.n = 128;
            cfg.trials = 20_000;
            cfg.stop = Some(StopRule::default());
        }
        cfg
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads by extension: `.toml` as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Channel `alpha_max`, from the speed when one is given.
    pub fn alpha_max(&self) -> f64 {
        match (self.channel.speed_kmh, self.channel.alpha_max) {
            (Some(v), _) => speed_to_alpha(v, self.grid.carrier_hz, self.grid.subcarrier_hz),
            (None, Some(a)) => a,
            (None, None) => self.grid.design_alpha_max as f64,
        }
    }

    pub fn bem_order(&self) -> Result<usize> {
        match self.bem.order {
            Some(q) => Ok(q),
            None => min_bem_order(self.grid.design_alpha_max as f64, self.bem.oversampling),
        }
    }

    pub fn doppler_profile(&self) -> Result<DopplerProfile> {
        let delays = self.channel.delays.clone();
        if self.channel.power_profile.is_empty() {
            DopplerProfile::uniform(self.alpha_max(), delays, self.channel.shared_delays)
        } else {
            DopplerProfile::new(self.alpha_max(), delays, self.channel.power_profile.clone(), self.channel.shared_delays)
        }
    }

    pub fn constellation(&self) -> Result<QamConstellation> {
        let q = QamConstellation::new(self.detection.qam_order)?;
        match (self.detection.a_m, self.detection.b_m) {
            (None, None) => Ok(q),
            (a, b) => {
                let (a, b) = (a.unwrap_or(q.a_m()), b.unwrap_or(q.b_m()));
                q.with_ber_constants(a, b)
            }
        }
    }

    /// Noise variance `sigma^2 = eps / 10^(SNR_d / 10)` for unit-energy data.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(-self.detection.snr_d_db / 10.0)
    }

    /// Pilot power `|x_p|^2 = sigma^2 10^(SNR_p / 10)`.
    pub fn pilot_power(&self) -> f64 {
        self.noise_var() * 10f64.powf(self.frame.snr_p_db / 10.0)
    }

    /// Cross-module consistency: builds the full setup once and discards it.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.channel.delays.iter().any(|&d| d > self.frame.l_max) {
            return Err(Error::Config(format!("a path delay exceeds l_max = {}", self.frame.l_max)));
        }
        if let Some(stop) = &self.stop {
            if stop.batch == 0 {
                return Err(Error::Config("stop.batch must be positive".into()));
            }
        }
        for v in [self.frame.snr_p_db, self.detection.snr_d_db] {
            if !v.is_finite() {
                return Err(Error::Config("SNR values must be finite".into()));
            }
        }
        super::trial::TrialSetup::new(self).map(|_| ())
    }
}
