//! From eigen-solutions to microwave absorption: allowed transitions, thermal
//! populations, photon-induced rates, linewidths, dipolar bias fields and the
//! complex transmission of a waveguide loaded with the spin ensemble.

mod broadening;
mod dipolar;
mod map;
mod transmission;

pub use broadening::{homogeneous_width, t2_of_field, BroadeningModel};
pub use dipolar::{
    dipolar_bias_samples, energy_broadening_bound, histogram, DipolarDistribution, DipolarMode, Histogram,
    LatticeSpec,
};
pub use map::{map_residual, normalize_map, MapKind, MapMetadata, ReferenceTrace, TransmissionMap};
pub use transmission::{
    transmission, transmission_from_lines, Line, LineStats, SpectroSettings, TransmissionModel,
};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::thermal_ghz;
use crate::hamiltonian::{EigenSolution, HamiltonianBuilder};
use crate::spinops::OperatorMatrix;
use crate::{Error, Result};

/// Spin operator coupling to the microwave field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveOperator {
    /// J_z only.
    #[default]
    Longitudinal,
    /// cos α·J_z + sin α·J_x.
    Tilted { alpha_deg: f64 },
}

/// Sparse form of the drive operator in the product basis.
#[derive(Debug, Clone)]
pub struct DriveMatrix {
    entries: Vec<(usize, usize, Complex64)>,
}

impl DriveMatrix {
    pub fn new(builder: &HamiltonianBuilder, drive: DriveOperator) -> Self {
        let op = match drive {
            DriveOperator::Longitudinal => builder.jz().clone(),
            DriveOperator::Tilted { alpha_deg } => {
                let (s, c) = alpha_deg.to_radians().sin_cos();
                let mut op = builder.jz().scale(c);
                op.add_scaled(builder.jx(), Complex64::new(s, 0.0));
                op
            }
        };
        Self::from_operator(&op)
    }

    pub fn from_operator(op: &OperatorMatrix) -> Self {
        Self { entries: op.nonzeros() }
    }

    /// |⟨a|O|b⟩| for eigenvector columns a, b.
    pub fn element(&self, eig: &EigenSolution, a: usize, b: usize) -> f64 {
        let va = eig.vectors.column(a);
        let vb = eig.vectors.column(b);
        let mut acc = Complex64::new(0.0, 0.0);
        for &(r, c, v) in &self.entries {
            acc += va[r].conj() * v * vb[c];
        }
        acc.norm()
    }
}

/// A pair of levels connected by the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Sorted index of the lower level.
    pub lower: usize,
    pub upper: usize,
    /// Resonance frequency, GHz.
    pub omega12: f64,
    /// |⟨ψ₁|O|ψ₂⟩|, dimensionless.
    pub matrix_element: f64,
    /// Thermal population difference of the two levels.
    pub delta_p: f64,
    /// Rounded ⟨I_z⟩ of the lower level.
    pub nuclear_label: f64,
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {t} K")));
    }
    Ok(())
}

/// Boltzmann populations, referenced to the lowest level so nothing overflows.
pub fn boltzmann_populations(energies: &[f64], temperature_k: f64) -> Result<Vec<f64>> {
    check_temperature(temperature_k)?;
    let kt = thermal_ghz(temperature_k);
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// (exp(−E₁/k_BT) − exp(−E₂/k_BT))/Z over all levels in `all_energies`.
pub fn population_difference(e1: f64, e2: f64, all_energies: &[f64], temperature_k: f64) -> Result<f64> {
    check_temperature(temperature_k)?;
    let kt = thermal_ghz(temperature_k);
    let e0 = all_energies.iter().copied().chain([e1, e2]).fold(f64::INFINITY, f64::min);
    let z: f64 = all_energies.iter().map(|e| (-(e - e0) / kt).exp()).sum();
    // P₁(1 − e^{−ω/kT}) keeps full relative precision for near-degenerate pairs
    Ok((-(e1 - e0) / kt).exp() * -(-(e2 - e1) / kt).exp_m1() / z)
}

/// Bose occupation 1/(exp(hω/k_BT) − 1); zero at T = 0.
pub fn occupation_number(omega_ghz: f64, temperature_k: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    1.0 / (omega_ghz / thermal_ghz(temperature_k)).exp_m1()
}

/// Drive-connected pairs with the same nuclear projection below `max_freq_ghz`.
#[allow(clippy::needless_range_loop)]
pub fn enumerate_transitions(
    eig: &EigenSolution,
    drive: &DriveMatrix,
    temperature_k: f64,
    max_freq_ghz: f64,
    settings: &SpectroSettings,
) -> Result<Vec<Transition>> {
    let pops = boltzmann_populations(&eig.energies, temperature_k)?;
    let kt = thermal_ghz(temperature_k);
    let n = eig.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let omega = eig.energies[b] - eig.energies[a];
            if omega > max_freq_ghz {
                break;
            }
            if omega < settings.min_freq_ghz {
                continue;
            }
            if (eig.iz_expect[a] - eig.iz_expect[b]).abs() >= settings.nuclear_tolerance {
                continue;
            }
            let m = drive.element(eig, a, b);
            if m < settings.matrix_element_floor {
                continue;
            }
            out.push(Transition {
                lower: a,
                upper: b,
                omega12: omega,
                matrix_element: m,
                delta_p: (pops[a] * -(-omega / kt).exp_m1()).clamp(0.0, 1.0),
                nuclear_label: eig.nuclear_label(a),
            });
        }
    }
    Ok(out)
}

/// Spin-photon coupling density g(ω) = g0·(ω/ω_ref)^(p/2), in √GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingDensity {
    #[serde(rename = "g0_sqrtGHz")]
    pub g0: f64,
    pub exponent: f64,
    #[serde(rename = "omega_ref_GHz")]
    pub omega_ref_ghz: f64,
}

impl Default for CouplingDensity {
    fn default() -> Self {
        Self {
            g0: 0.02,
            exponent: 0.0,
            omega_ref_ghz: 9.1,
        }
    }
}

impl CouplingDensity {
    pub fn constant(g0: f64) -> Self {
        Self { g0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g0 >= 0.0) || !(self.omega_ref_ghz > 0.0) || !self.exponent.is_finite() {
            return Err(Error::InvalidParameter(
                "coupling density needs g0 ≥ 0, finite exponent, omega_ref > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn at(&self, omega_ghz: f64) -> f64 {
        if self.exponent == 0.0 {
            self.g0
        } else {
            self.g0 * (omega_ghz / self.omega_ref_ghz).powf(self.exponent / 2.0)
        }
    }
}

/// Γ = 2π g(ω)² |M|² (n(ω) + 1), GHz.
pub fn transition_rate(t: &Transition, g: &CouplingDensity, temperature_k: f64) -> Result<f64> {
    if !(t.omega12 > 0.0) {
        return Err(Error::ZeroFrequency(t.omega12));
    }
    let gw = g.at(t.omega12);
    let n = occupation_number(t.omega12, temperature_k);
    Ok(2.0 * PI * gw * gw * t.matrix_element * t.matrix_element * (n + 1.0))
}
