use serde::{Deserialize, Serialize};

use super::DipolarDistribution;
use crate::{Error, Result};

/// Homogeneous (T₁, field-dependent T₂) and inhomogeneous (dipolar) broadening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BroadeningModel {
    #[serde(rename = "t1_s")]
    pub t1_s: f64,
    /// T₂ at the clock transition.
    #[serde(rename = "t2_clock_s")]
    pub t2_clock_s: f64,
    /// Transition frequency at the clock transition.
    #[serde(rename = "omega_clock_GHz")]
    pub omega_clock_ghz: f64,
    /// Number of dipolar bias samples averaged per field point; 0 disables averaging.
    pub average_samples: usize,
    pub dipolar: DipolarDistribution,
}

impl Default for BroadeningModel {
    fn default() -> Self {
        Self {
            t1_s: 20e-6,
            t2_clock_s: 8e-9,
            omega_clock_ghz: 9.1,
            average_samples: 200,
            dipolar: DipolarDistribution::default(),
        }
    }
}

impl BroadeningModel {
    pub fn without_dipolar(mut self) -> Self {
        self.average_samples = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_s > 0.0) || !(self.t2_clock_s > 0.0) || !(self.omega_clock_ghz > 0.0) {
            return Err(Error::InvalidParameter(
                "broadening needs t1 > 0, t2_clock > 0 and omega_clock > 0".into(),
            ));
        }
        self.dipolar.validate()
    }
}

/// T₂(ω) = T₂,clock · ω_clock²/ω², seconds.
pub fn t2_of_field(b: &BroadeningModel, omega12_ghz: f64) -> Result<f64> {
    if !(omega12_ghz > 0.0) {
        return Err(Error::ZeroFrequency(omega12_ghz));
    }
    let r = b.omega_clock_ghz / omega12_ghz;
    Ok(b.t2_clock_s * r * r)
}

/// γ = 1/T₁ + 1/T₂(ω) expressed in GHz.
pub fn homogeneous_width(b: &BroadeningModel, omega12_ghz: f64) -> Result<f64> {
    let t2 = t2_of_field(b, omega12_ghz)?;
    Ok((1.0 / b.t1_s + 1.0 / t2) * 1e-9)
}
