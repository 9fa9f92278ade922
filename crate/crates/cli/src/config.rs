use std::path::{Path, PathBuf};

use clockspin::cavity::CavityModel;
use clockspin::hamiltonian::{AnticrossingOptions, Direction, SpinSystem};
use clockspin::spectro::{
    BroadeningModel, CouplingDensity, DipolarDistribution, DipolarMode, LatticeSpec, SpectroSettings,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The configuration shipped with the tool; every key is listed with its default.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for every Monte Carlo draw. Required whenever dipolar sampling is on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub system: SpinSystem,
    pub field: FieldSweep,
    pub frequency: FreqGrid,
    pub spectro: SpectroSettings,
    pub coupling: CouplingDensity,
    pub broadening: BroadeningConfig,
    pub normalization: Normalization,
    pub clock: AnticrossingOptions,
    pub cavity: CavityModel,
    pub cavity_window: FreqGrid,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            system: SpinSystem::how10(),
            field: FieldSweep::default(),
            frequency: FreqGrid::default(),
            spectro: SpectroSettings::default(),
            coupling: CouplingDensity::default(),
            broadening: BroadeningConfig::default(),
            normalization: Normalization::default(),
            clock: AnticrossingOptions::default(),
            cavity: CavityModel::default(),
            cavity_window: FreqGrid {
                freq_min_ghz: 11.2,
                freq_max_ghz: 12.2,
                freq_points: 201,
            },
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSweep {
    #[serde(rename = "field_min_T")]
    pub field_min_t: f64,
    #[serde(rename = "field_max_T")]
    pub field_max_t: f64,
    pub field_points: usize,
    /// Polar angle of the field from the anisotropy axis.
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Default for FieldSweep {
    fn default() -> Self {
        Self {
            field_min_t: 0.0,
            field_max_t: 0.25,
            field_points: 200,
            theta_deg: 0.0,
            phi_deg: 0.0,
        }
    }
}

impl FieldSweep {
    pub fn direction(&self) -> Direction {
        Direction::new(self.theta_deg.to_radians(), self.phi_deg.to_radians())
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !(self.field_min_t >= 0.0) {
            return Err(CliError::Config("field.field_min_T must be non-negative".into()));
        }
        linspace(self.field_min_t, self.field_max_t, self.field_points, "field")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqGrid {
    #[serde(rename = "freq_min_GHz")]
    pub freq_min_ghz: f64,
    #[serde(rename = "freq_max_GHz")]
    pub freq_max_ghz: f64,
    pub freq_points: usize,
}

impl Default for FreqGrid {
    fn default() -> Self {
        Self {
            freq_min_ghz: 0.01,
            freq_max_ghz: 14.0,
            freq_points: 500,
        }
    }
}

impl FreqGrid {
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        if !(self.freq_min_ghz > 0.0) {
            return Err(CliError::Config("freq_min_GHz must be positive".into()));
        }
        linspace(self.freq_min_ghz, self.freq_max_ghz, self.freq_points, "frequency")
    }
}

fn linspace(lo: f64, hi: f64, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    if n == 0 {
        return Err(CliError::Config(format!("{what} grid has zero points")));
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::Config(format!("{what} grid bounds must be finite")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if !(hi > lo) {
        return Err(CliError::Config(format!("{what} grid needs max > min")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|k| if k == n - 1 { hi } else { lo + k as f64 * step })
        .collect())
}

/// Broadening as configured; the dipolar seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BroadeningConfig {
    pub t1_s: f64,
    pub t2_clock_s: f64,
    #[serde(rename = "omega_clock_GHz")]
    pub omega_clock_ghz: f64,
    /// Dipolar samples averaged per field point; 0 turns averaging off.
    pub average_samples: usize,
    pub dipolar: DipolarConfig,
}

impl Default for BroadeningConfig {
    fn default() -> Self {
        let b = BroadeningModel::default();
        Self {
            t1_s: b.t1_s,
            t2_clock_s: b.t2_clock_s,
            omega_clock_ghz: b.omega_clock_ghz,
            average_samples: b.average_samples,
            dipolar: DipolarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipolarConfig {
    pub mode: DipolarMode,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub histogram_samples: usize,
    pub histogram_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
}

impl Default for DipolarConfig {
    fn default() -> Self {
        let d = DipolarDistribution::default();
        Self {
            mode: d.mode,
            sigma_t: d.sigma_t,
            histogram_samples: d.histogram_samples,
            histogram_bins: 100,
            lattice: None,
        }
    }
}

impl DipolarConfig {
    pub fn distribution(&self, seed: u64) -> DipolarDistribution {
        DipolarDistribution {
            mode: self.mode,
            sigma_t: self.sigma_t,
            lattice: self.lattice.clone(),
            histogram_samples: self.histogram_samples,
            seed,
        }
    }

    pub fn is_random(&self) -> bool {
        self.distribution(0).is_random()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Normalization {
    /// H₂ − H₁ for the difference normalization.
    #[serde(rename = "delta_field_T")]
    pub delta_field_t: f64,
    /// Field where the empty-line trace is taken.
    #[serde(rename = "reference_field_T")]
    pub reference_field_t: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            delta_field_t: 0.0025,
            reference_field_t: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

impl RunConfig {
    /// Parse TOML; errors carry the line of the offending key.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            CliError::ConfigParse {
                origin: origin.into(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Self::from_toml(DEFAULT_CONFIG, "<default>"),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text, &p.display().to_string())
            }
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn monte_carlo_enabled(&self) -> bool {
        self.broadening.average_samples > 0 && self.broadening.dipolar.is_random()
    }

    /// The seed, or a config error when Monte Carlo sampling needs one.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("dipolar Monte Carlo is enabled but no seed is set (use seed = N or --seed N)".into()))
    }

    pub fn broadening_model(&self, needs_samples: bool) -> Result<BroadeningModel, CliError> {
        let seed = if needs_samples && self.monte_carlo_enabled() {
            self.require_seed()?
        } else {
            self.seed.unwrap_or(0)
        };
        let b = &self.broadening;
        let model = BroadeningModel {
            t1_s: b.t1_s,
            t2_clock_s: b.t2_clock_s,
            omega_clock_ghz: b.omega_clock_ghz,
            average_samples: if needs_samples { b.average_samples } else { 0 },
            dipolar: b.dipolar.distribution(seed),
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate()?;
        self.field.grid()?;
        self.frequency.grid()?;
        self.cavity_window.grid()?;
        self.coupling.validate()?;
        self.cavity.validate()?;
        if !(self.spectro.temperature_k > 0.0) {
            return Err(CliError::Config("spectro.temperature_K must be positive".into()));
        }
        if self.broadening.dipolar.histogram_bins == 0 {
            return Err(CliError::Config("broadening.dipolar.histogram_bins must be positive".into()));
        }
        self.broadening_model(false)?;
        Ok(())
    }
}
