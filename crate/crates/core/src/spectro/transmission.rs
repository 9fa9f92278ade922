use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::{MapKind, MapMetadata, ReferenceTrace, TransmissionMap};
use super::{
    dipolar_bias_samples, enumerate_transitions, homogeneous_width, transition_rate, BroadeningModel,
    CouplingDensity, DriveMatrix, DriveOperator, Transition,
};
use crate::hamiltonian::{Direction, EigenSolution, FieldVector, HamiltonianBuilder, SpinSystem};
use crate::{Error, Result};

/// Thermal and selection settings shared by every transmission evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectroSettings {
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    /// Transitions above this frequency are dropped.
    #[serde(rename = "max_freq_GHz")]
    pub max_freq_ghz: f64,
    /// Transitions below this frequency are dropped (degenerate pairs have no rate).
    #[serde(rename = "min_freq_GHz")]
    pub min_freq_ghz: f64,
    pub matrix_element_floor: f64,
    /// Largest |⟨I_z⟩₁ − ⟨I_z⟩₂| for an allowed transition.
    pub nuclear_tolerance: f64,
    pub drive: DriveOperator,
}

impl Default for SpectroSettings {
    fn default() -> Self {
        Self {
            temperature_k: 4.2,
            max_freq_ghz: 14.0,
            min_freq_ghz: 1e-6,
            matrix_element_floor: 1e-4,
            nuclear_tolerance: 0.5,
            drive: DriveOperator::Longitudinal,
        }
    }
}

/// A transition with its rate Γ and homogeneous width γ resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub transition: Transition,
    /// Γ, GHz.
    pub rate: f64,
    /// γ, GHz.
    pub gamma: f64,
}

impl Line {
    pub fn omega(&self) -> f64 {
        self.transition.omega12
    }

    /// Γ·ΔP, GHz.
    pub fn strength(&self) -> f64 {
        self.rate * self.transition.delta_p
    }
}

/// 1/(1 + Σ_k Γ_k ΔP_k/(γ_k + i(ω_k − ω))).
pub fn transmission_from_lines(lines: &[Line], omega_ghz: f64) -> Complex64 {
    let mut chi = Complex64::new(0.0, 0.0);
    for l in lines {
        chi += l.strength() / Complex64::new(l.gamma, l.omega() - omega_ghz);
    }
    1.0 / (1.0 + chi)
}

/// Clock-line summary over the dipolar ensemble at one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineStats {
    /// Frequency without bias field, GHz.
    pub omega: f64,
    /// Ensemble mean frequency, GHz.
    pub omega_mean: f64,
    /// Ensemble standard deviation of the frequency (inhomogeneous width), GHz.
    pub omega_spread: f64,
    /// Mean homogeneous width, GHz.
    pub gamma_homogeneous: f64,
    /// Matrix element without bias field.
    pub matrix_element: f64,
    /// Γ without bias field, GHz.
    pub rate: f64,
}

impl LineStats {
    /// Homogeneous plus inhomogeneous width, GHz.
    pub fn total_width(&self) -> f64 {
        self.gamma_homogeneous + self.omega_spread
    }
}

/// Spin system plus everything needed to turn eigen-solutions into transmission.
#[derive(Debug, Clone)]
pub struct TransmissionModel {
    builder: HamiltonianBuilder,
    drive: DriveMatrix,
    pub coupling: CouplingDensity,
    pub broadening: BroadeningModel,
    pub settings: SpectroSettings,
    bias: Vec<f64>,
}

impl TransmissionModel {
    pub fn new(
        system: &SpinSystem,
        coupling: CouplingDensity,
        broadening: BroadeningModel,
        settings: SpectroSettings,
    ) -> Result<Self> {
        coupling.validate()?;
        broadening.validate()?;
        if !(settings.temperature_k > 0.0) {
            return Err(Error::InvalidParameter("temperature must be positive".into()));
        }
        let builder = HamiltonianBuilder::new(system)?;
        let drive = DriveMatrix::new(&builder, settings.drive);
        let bias = if broadening.average_samples > 0 && broadening.dipolar.is_random() {
            dipolar_bias_samples(&broadening.dipolar, broadening.average_samples)?
        } else {
            Vec::new()
        };
        Ok(Self {
            builder,
            drive,
            coupling,
            broadening,
            settings,
            bias,
        })
    }

    pub fn builder(&self) -> &HamiltonianBuilder {
        &self.builder
    }

    pub fn drive(&self) -> &DriveMatrix {
        &self.drive
    }

    pub fn bias_samples(&self) -> &[f64] {
        &self.bias
    }

    pub fn transitions(&self, eig: &EigenSolution) -> Result<Vec<Transition>> {
        enumerate_transitions(
            eig,
            &self.drive,
            self.settings.temperature_k,
            self.settings.max_freq_ghz,
            &self.settings,
        )
    }

    pub fn resolve(&self, t: Transition) -> Result<Line> {
        Ok(Line {
            rate: transition_rate(&t, &self.coupling, self.settings.temperature_k)?,
            gamma: homogeneous_width(&self.broadening, t.omega12)?,
            transition: t,
        })
    }

    pub fn lines_from(&self, eig: &EigenSolution) -> Result<Vec<Line>> {
        self.transitions(eig)?.into_iter().map(|t| self.resolve(t)).collect()
    }

    /// Lines at a Cartesian field with no bias applied.
    pub fn lines_at(&self, field_t: [f64; 3]) -> Result<Vec<Line>> {
        self.lines_from(&self.builder.solve_cartesian(field_t)?)
    }

    /// One line set per dipolar sample (bias added to H_z), or the bare set without averaging.
    pub fn ensemble_lines(&self, field_t: [f64; 3]) -> Result<Vec<Vec<Line>>> {
        if self.bias.is_empty() {
            return Ok(vec![self.lines_at(field_t)?]);
        }
        self.bias
            .iter()
            .map(|b| self.lines_at([field_t[0], field_t[1], field_t[2] + b]))
            .collect()
    }

    /// Ensemble-averaged S21/S21⁽⁰⁾ at each frequency.
    pub fn column(&self, field_t: [f64; 3], freqs: &[f64]) -> Result<Vec<Complex64>> {
        let ensemble = self.ensemble_lines(field_t)?;
        let w = 1.0 / ensemble.len() as f64;
        Ok(freqs
            .iter()
            .map(|&f| ensemble.iter().map(|ls| transmission_from_lines(ls, f)).sum::<Complex64>() * w)
            .collect())
    }

    pub fn transmission(&self, field: &FieldVector, omega_ghz: f64) -> Result<Complex64> {
        Ok(self.column(field.cartesian(), &[omega_ghz])?[0])
    }

    /// Raw transmission map over a field grid along `direction`, parallel over fields.
    ///
    /// With `reference_field_t`, the empty-line trace at that field is stored for normalization.
    pub fn simulate_map(
        &self,
        direction: Direction,
        fields_t: &[f64],
        freqs_ghz: &[f64],
        reference_field_t: Option<f64>,
    ) -> Result<TransmissionMap> {
        crate::hamiltonian::validate_field_grid(fields_t)?;
        if freqs_ghz.is_empty() {
            return Err(Error::InvalidGrid("frequency grid is empty".into()));
        }
        let columns = fields_t
            .par_iter()
            .map(|&b| self.column(direction.at(b), freqs_ghz))
            .collect::<Result<Vec<_>>>()?;
        let reference = match reference_field_t {
            Some(r) => Some(ReferenceTrace {
                field_t: r,
                values: self.column(direction.at(r), freqs_ghz)?,
            }),
            None => None,
        };
        let metadata = MapMetadata {
            kind: MapKind::Raw,
            temperature_k: Some(self.settings.temperature_k),
            g0: Some(self.coupling.g0),
            reference_field_t: None,
            delta_field_t: None,
            parameters: serde_json::json!({
                "system": self.builder.system(),
                "direction": direction,
                "coupling": self.coupling,
                "broadening": self.broadening,
                "settings": self.settings,
            }),
        };
        TransmissionMap::new(fields_t.to_vec(), freqs_ghz.to_vec(), columns.concat(), metadata, reference)
    }

    /// Statistics of the best-populated transition carrying `nuclear_label` (the
    /// ground-doublet line of that nuclear state), or `None` if no such line is present.
    pub fn clock_line_stats(&self, field_t: [f64; 3], nuclear_label: f64) -> Result<Option<LineStats>> {
        let pick = |lines: &[Line]| {
            lines
                .iter()
                .filter(|l| (l.transition.nuclear_label - nuclear_label).abs() < 0.25)
                .max_by(|a, b| a.transition.delta_p.total_cmp(&b.transition.delta_p))
                .copied()
        };
        let Some(bare) = pick(&self.lines_at(field_t)?) else {
            return Ok(None);
        };
        let ensemble: Vec<Line> = if self.bias.is_empty() {
            vec![bare]
        } else {
            let mut v = Vec::with_capacity(self.bias.len());
            for b in &self.bias {
                if let Some(l) = pick(&self.lines_at([field_t[0], field_t[1], field_t[2] + b])?) {
                    v.push(l);
                }
            }
            v
        };
        let n = ensemble.len() as f64;
        let mean = ensemble.iter().map(|l| l.omega()).sum::<f64>() / n;
        let var = ensemble.iter().map(|l| (l.omega() - mean).powi(2)).sum::<f64>() / n;
        Ok(Some(LineStats {
            omega: bare.omega(),
            omega_mean: mean,
            omega_spread: var.sqrt(),
            gamma_homogeneous: ensemble.iter().map(|l| l.gamma).sum::<f64>() / n,
            matrix_element: bare.transition.matrix_element,
            rate: bare.rate,
        }))
    }
}

/// Ensemble-averaged transmission at a single field and frequency.
pub fn transmission(
    system: &SpinSystem,
    coupling: &CouplingDensity,
    broadening: &BroadeningModel,
    field: &FieldVector,
    omega_ghz: f64,
    temperature_k: f64,
) -> Result<Complex64> {
    let settings = SpectroSettings {
        temperature_k,
        ..SpectroSettings::default()
    };
    TransmissionModel::new(system, *coupling, broadening.clone(), settings)?.transmission(field, omega_ghz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::DipolarDistribution;

    fn line(omega: f64, gamma: f64, rate: f64, dp: f64) -> Line {
        Line {
            transition: Transition {
                lower: 0,
                upper: 1,
                omega12: omega,
                matrix_element: 1.0,
                delta_p: dp,
                nuclear_label: 0.0,
            },
            rate,
            gamma,
        }
    }

    fn model(samples: usize) -> TransmissionModel {
        let broadening = BroadeningModel {
            average_samples: samples,
            dipolar: DipolarDistribution::gaussian(6e-3, 11),
            ..BroadeningModel::default()
        };
        TransmissionModel::new(
            &SpinSystem::how10(),
            CouplingDensity::constant(0.02),
            broadening,
            SpectroSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_line_is_exact_lineshape() {
        let l = line(9.3, 0.12, 0.05, 0.05);
        for w in [8.0, 9.25, 9.3, 9.41, 11.0] {
            let direct = 1.0 / (1.0 + 0.05 * 0.05 / Complex64::new(0.12, 9.3 - w));
            let got = transmission_from_lines(&[l], w);
            assert!((got - direct).norm() < 1e-14);
        }
        let on = transmission_from_lines(&[l], 9.3);
        assert!((on.re - 1.0 / (1.0 + 0.0025 / 0.12)).abs() < 1e-15);
        assert!(on.im.abs() < 1e-15);
    }

    #[test]
    fn far_from_resonance_is_unity() {
        let l = line(9.3, 0.12, 0.05, 0.05);
        assert!((transmission_from_lines(&[l], 1e6) - 1.0).norm() < 1e-8);
    }

    #[test]
    fn dip_minimum_on_resonance() {
        // dense scan oracle
        let l = line(9.3, 0.12, 0.5, 0.2);
        let step = 1e-3;
        let (best, _) = (0..4001)
            .map(|k| 7.3 + k as f64 * step)
            .map(|w| (w, transmission_from_lines(&[l], w).norm()))
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        assert!((best - 9.3).abs() <= step);
    }

    #[test]
    fn passive_everywhere_and_transparent_without_coupling() {
        let m = model(0);
        for b in [0.0, 0.05, 0.168, 0.23] {
            let col = m.column([0.0, 0.0, b], &[1.0, 9.0, 9.2, 10.5, 13.9]).unwrap();
            assert!(col.iter().all(|z| z.norm() <= 1.0 + 1e-12));
        }
        let silent = TransmissionModel::new(
            &SpinSystem::how10(),
            CouplingDensity::constant(0.0),
            BroadeningModel::default().without_dipolar(),
            SpectroSettings::default(),
        )
        .unwrap();
        let col = silent.column([0.0, 0.0, 0.168], &[9.18, 10.0]).unwrap();
        assert!(col.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn ensemble_deterministic() {
        let a = model(20).column([0.0, 0.0, 0.15], &[9.5, 10.0]).unwrap();
        let b = model(20).column([0.0, 0.0, 0.15], &[9.5, 10.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clock_line_narrowest_at_anticrossing() {
        let m = model(100);
        let center = SpinSystem::how10().ising_crossing_field(-3.5);
        let at = m.clock_line_stats([0.0, 0.0, center], -3.5).unwrap().unwrap();
        let off = m.clock_line_stats([0.0, 0.0, center + 0.02], -3.5).unwrap().unwrap();
        // the populated ground-doublet line, not an empty excited pair
        assert!((at.omega - 9.18).abs() < 0.02, "{}", at.omega);
        assert!(at.matrix_element > off.matrix_element);
        assert!(at.total_width() < off.total_width());
        assert!(at.rate > off.rate);
    }

    #[test]
    fn free_function_matches_model() {
        let s = SpinSystem::how10();
        let b = BroadeningModel::default().without_dipolar();
        let f = FieldVector::along_z(0.1);
        let a = transmission(&s, &CouplingDensity::constant(0.02), &b, &f, 9.7, 4.2).unwrap();
        let m = TransmissionModel::new(&s, CouplingDensity::constant(0.02), b, SpectroSettings::default()).unwrap();
        assert_eq!(a, m.transmission(&f, 9.7).unwrap());
    }
}
