//! Effective linewidth of a lossy cavity mode dressed by the spin ensemble.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{EigenSolution, HamiltonianBuilder, LevelDiagram};
use crate::spectro::{
    enumerate_transitions, homogeneous_width, BroadeningModel, DriveMatrix, MapKind, MapMetadata, SpectroSettings,
    TransmissionMap,
};
use crate::{Error, Result};

/// How each transition's share of G_N² is weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// ΔP relative to the largest ΔP among allowed transitions at the same field, so
    /// the best-polarized line carries the full (measured) G_N² and thermally empty
    /// excited pairs drop out.
    #[default]
    Population,
    /// Bare ΔP; only a fully polarized transition carries the full G_N².
    Absolute,
    /// Every allowed transition carries the full G_N², populated or not.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityModel {
    #[serde(rename = "omega_r_GHz")]
    pub omega_r_ghz: f64,
    /// Intrinsic linewidth κ, GHz.
    #[serde(rename = "kappa_GHz")]
    pub kappa_ghz: f64,
    /// G_N at x = 1, GHz.
    #[serde(rename = "g_n_full_GHz")]
    pub g_n_full_ghz: f64,
    pub concentration: f64,
    /// Share of κ that leaks into the measurement line; sets the notch depth.
    pub coupling_fraction: f64,
    pub weighting: Weighting,
    /// Transitions farther than this from ω_r are ignored.
    #[serde(rename = "detuning_window_GHz")]
    pub detuning_window_ghz: f64,
}

impl Default for CavityModel {
    fn default() -> Self {
        // Q = 100; κ written out so the default is exactly 0.117
        Self {
            kappa_ghz: 0.117,
            ..Self::with_quality(11.7, 100.0)
        }
    }
}

impl CavityModel {
    /// κ = ω_r/Q.
    pub fn with_quality(omega_r_ghz: f64, q: f64) -> Self {
        Self {
            omega_r_ghz,
            kappa_ghz: omega_r_ghz / q,
            g_n_full_ghz: 0.1,
            concentration: 1.0,
            coupling_fraction: 0.5,
            weighting: Weighting::Population,
            detuning_window_ghz: 2.0,
        }
    }

    pub fn quality(&self) -> f64 {
        self.omega_r_ghz / self.kappa_ghz
    }

    pub fn g_n(&self) -> f64 {
        self.g_n_full_ghz * self.concentration.sqrt()
    }

    pub fn at_concentration(mut self, x: f64) -> Self {
        self.concentration = x;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r_ghz > 0.0) || !(self.kappa_ghz > 0.0) {
            return Err(Error::InvalidParameter("cavity needs omega_r > 0 and kappa > 0".into()));
        }
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "concentration must lie in (0, 1], got {}",
                self.concentration
            )));
        }
        if !(self.g_n_full_ghz >= 0.0) {
            return Err(Error::InvalidParameter("g_n_full must be non-negative".into()));
        }
        if !(self.coupling_fraction > 0.0 && self.coupling_fraction <= 1.0) {
            return Err(Error::InvalidParameter("coupling_fraction must lie in (0, 1]".into()));
        }
        if !(self.detuning_window_ghz > 0.0) {
            return Err(Error::InvalidParameter("detuning window must be positive".into()));
        }
        Ok(())
    }
}

/// Spin contribution γG²/(δ² + γ²) of one transition.
pub fn kappa_excess(g_n: f64, detuning_ghz: f64, gamma_ghz: f64) -> f64 {
    gamma_ghz * g_n * g_n / (detuning_ghz * detuning_ghz + gamma_ghz * gamma_ghz)
}

/// κ̃ = κ + γG_N²/((ω₁₂ − ω_r)² + γ²).
pub fn effective_kappa(c: &CavityModel, omega12_ghz: f64, gamma_ghz: f64) -> f64 {
    c.kappa_ghz + kappa_excess(c.g_n(), omega12_ghz - c.omega_r_ghz, gamma_ghz)
}

/// Notch response 1 − κ_c/(κ̃ + 2i(ω − ω_r)) of the mode seen through the line.
pub fn cavity_transmission(c: &CavityModel, kappa_eff_ghz: f64, omega_ghz: f64) -> Complex64 {
    let kc = c.coupling_fraction * c.kappa_ghz;
    1.0 - kc / Complex64::new(kappa_eff_ghz, 2.0 * (omega_ghz - c.omega_r_ghz))
}

/// C = G_N²/(κγ).
pub fn cooperativity(c: &CavityModel, gamma_ghz: f64) -> f64 {
    let g = c.g_n();
    g * g / (c.kappa_ghz * gamma_ghz)
}

/// G_N exceeds both the cavity and the spin loss rate.
pub fn strong_coupling(c: &CavityModel, gamma_ghz: f64) -> bool {
    c.g_n() > c.kappa_ghz.max(gamma_ghz)
}

/// Smallest concentration in `xs` (scanned in order) that reaches strong coupling,
/// with γ(x) from the caller. `None` if none does.
pub fn strong_coupling_boundary(c: &CavityModel, xs: &[f64], gamma_of_x: impl Fn(f64) -> f64) -> Option<f64> {
    xs.iter()
        .copied()
        .find(|&x| strong_coupling(&c.at_concentration(x), gamma_of_x(x)))
}

/// κ̃ at one field point, summing every allowed transition within the detuning window.
pub fn kappa_at(
    c: &CavityModel,
    eig: &EigenSolution,
    drive: &DriveMatrix,
    broadening: &BroadeningModel,
    settings: &SpectroSettings,
) -> Result<f64> {
    let g = c.g_n();
    let top = c.omega_r_ghz + c.detuning_window_ghz;
    let mut kappa = c.kappa_ghz;
    let transitions = enumerate_transitions(eig, drive, settings.temperature_k, settings.max_freq_ghz.max(top), settings)?;
    let dp_max = transitions.iter().map(|t| t.delta_p).fold(0.0, f64::max);
    for t in transitions {
        let delta = t.omega12 - c.omega_r_ghz;
        if delta.abs() > c.detuning_window_ghz {
            continue;
        }
        let gamma = homogeneous_width(broadening, t.omega12)?;
        let w = match c.weighting {
            Weighting::Population if dp_max > 0.0 => t.delta_p / dp_max,
            Weighting::Population => 0.0,
            Weighting::Absolute => t.delta_p,
            Weighting::Unit => 1.0,
        };
        kappa += w * kappa_excess(g, delta, gamma);
    }
    Ok(kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    #[serde(rename = "field_T")]
    pub field_t: f64,
    #[serde(rename = "kappa_eff_GHz")]
    pub kappa_eff_ghz: f64,
}

#[derive(Debug, Clone)]
pub struct CavitySimulation {
    pub map: TransmissionMap,
    pub kappa_curve: Vec<KappaPoint>,
}

impl CavitySimulation {
    pub fn write_kappa_csv<W: Write>(&self, w: W) -> Result<()> {
        write_kappa_csv(&self.kappa_curve, w)
    }
}

pub fn write_kappa_csv<W: Write>(curve: &[KappaPoint], mut w: W) -> Result<()> {
    writeln!(w, "field_T,kappa_eff_GHz")?;
    for p in curve {
        writeln!(w, "{},{}", p.field_t, p.kappa_eff_ghz)?;
    }
    Ok(())
}

/// Cavity-window map: a Lorentzian notch of width κ̃(H) at ω_r for every field of the diagram.
pub fn cavity_map(
    c: &CavityModel,
    diagram: &LevelDiagram,
    broadening: &BroadeningModel,
    settings: &SpectroSettings,
    freqs_ghz: &[f64],
) -> Result<CavitySimulation> {
    c.validate()?;
    broadening.validate()?;
    if diagram.is_empty() {
        return Err(Error::InvalidGrid("level diagram has no points".into()));
    }
    let lo = freqs_ghz.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = freqs_ghz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= c.omega_r_ghz && hi >= c.omega_r_ghz) {
        return Err(Error::InvalidGrid(format!(
            "frequency grid [{lo}, {hi}] GHz does not contain omega_r = {} GHz",
            c.omega_r_ghz
        )));
    }
    let builder = HamiltonianBuilder::new(&diagram.system)?;
    let drive = DriveMatrix::new(&builder, settings.drive);
    let kappas = diagram
        .points
        .par_iter()
        .map(|eig| kappa_at(c, eig, &drive, broadening, settings))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Complex64> = kappas
        .iter()
        .flat_map(|&k| freqs_ghz.iter().map(move |&f| cavity_transmission(c, k, f)))
        .collect();
    let metadata = MapMetadata {
        kind: MapKind::Cavity,
        temperature_k: Some(settings.temperature_k),
        g0: None,
        reference_field_t: None,
        delta_field_t: None,
        parameters: serde_json::json!({
            "system": diagram.system,
            "direction": diagram.direction,
            "cavity": c,
            "broadening": broadening,
            "settings": settings,
        }),
    };
    let map = TransmissionMap::new(diagram.magnitudes.clone(), freqs_ghz.to_vec(), values, metadata, None)?;
    let kappa_curve = diagram
        .magnitudes
        .iter()
        .zip(kappas)
        .map(|(&field_t, kappa_eff_ghz)| KappaPoint { field_t, kappa_eff_ghz })
        .collect();
    Ok(CavitySimulation { map, kappa_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{sweep, Direction, SpinSystem};

    fn model(g: f64) -> CavityModel {
        CavityModel {
            g_n_full_ghz: g,
            ..CavityModel::default()
        }
    }

    #[test]
    fn kappa_from_quality() {
        let c = CavityModel::default();
        assert!((c.kappa_ghz - 0.117).abs() < 1e-15);
        assert!((c.quality() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn zero_detuning_excess() {
        let c = model(0.1);
        let k = effective_kappa(&c, c.omega_r_ghz, 0.6);
        assert!(((k - c.kappa_ghz) - 0.01 / 0.6).abs() < 1e-15);
        assert!(((k - c.kappa_ghz) - 0.0167).abs() < 1e-4);
    }

    #[test]
    fn far_detuning_and_no_coupling() {
        let c = model(0.1);
        assert!((effective_kappa(&c, 1e6, 0.3) - c.kappa_ghz).abs() < 1e-12);
        assert_eq!(effective_kappa(&model(0.0), 11.7, 0.3), model(0.0).kappa_ghz);
    }

    #[test]
    fn symmetric_and_unimodal() {
        let c = model(0.1);
        let gamma = 0.25;
        let k = |d: f64| effective_kappa(&c, c.omega_r_ghz + d, gamma);
        let mut prev = k(0.0);
        for i in 1..200 {
            let d = i as f64 * 0.01;
            assert!((k(d) - k(-d)).abs() < 1e-15);
            assert!(k(d) < prev);
            assert!(k(d) >= c.kappa_ghz);
            prev = k(d);
        }
    }

    #[test]
    fn lorentzian_area() {
        let (g, gamma) = (0.1, 0.4);
        // trapezoid over ±2000 γ; the tails outside contribute 2γG²/L
        let half = 2000.0 * gamma;
        let n = 400_000;
        let h = 2.0 * half / n as f64;
        let area: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * kappa_excess(g, -half + i as f64 * h, gamma)
            })
            .sum::<f64>()
            * h;
        let exact = std::f64::consts::PI * g * g;
        assert!((area - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn sqrt_concentration() {
        let c = model(0.1);
        assert!((c.at_concentration(0.25).g_n() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cooperativity_unity() {
        let c = model(0.1);
        let gamma = 0.01 / c.kappa_ghz;
        assert!((cooperativity(&c, gamma) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_coupling_flag() {
        let c = CavityModel {
            kappa_ghz: 0.012,
            ..model(0.1)
        };
        assert!(strong_coupling(&c, 0.001));
        assert!(!strong_coupling(&c, 0.2));
        // G_N(x) = 0.1√x > 0.012 needs x > 0.0144
        let xs: Vec<f64> = (1..=100).map(|k| k as f64 * 0.005).collect();
        let x = strong_coupling_boundary(&c, &xs, |_| 1e-3).unwrap();
        assert!((x - 0.015).abs() < 1e-12);
        // Q = 100 at 11.7 GHz is too lossy for G_N ≤ 0.1 GHz
        assert_eq!(strong_coupling_boundary(&model(0.1), &xs, |_| 1e-3), None);
    }

    #[test]
    fn notch_depth_and_width() {
        let c = model(0.1);
        let k = 0.2;
        let on = cavity_transmission(&c, k, c.omega_r_ghz);
        assert!((on.re - (1.0 - 0.5 * c.kappa_ghz / k)).abs() < 1e-15);
        // |1 − t|² halves at ω − ω_r = κ̃/2
        let edge = cavity_transmission(&c, k, c.omega_r_ghz + k / 2.0);
        assert!(((1.0 - edge).norm_sqr() / (1.0 - on).norm_sqr() - 0.5).abs() < 1e-12);
    }

    fn diagram(fields: &[f64]) -> LevelDiagram {
        sweep(&SpinSystem::how10(), Direction::Z, fields).unwrap()
    }

    #[test]
    fn no_transitions_near_cavity_gives_flat_map() {
        // nearest lines here sit ≥ 0.5 GHz from ω_r
        let c = CavityModel {
            detuning_window_ghz: 0.4,
            ..model(0.1)
        };
        let d = diagram(&[0.164, 0.1642, 0.1644]);
        let freqs = [11.5, 11.7, 11.9];
        let sim = cavity_map(&c, &d, &BroadeningModel::default(), &SpectroSettings::default(), &freqs).unwrap();
        for p in &sim.kappa_curve {
            assert_eq!(p.kappa_eff_ghz, c.kappa_ghz);
        }
        for i in 1..3 {
            assert_eq!(sim.map.row(i), sim.map.row(0));
        }
    }

    #[test]
    fn grid_must_contain_resonance() {
        let d = diagram(&[0.1]);
        let r = cavity_map(&model(0.1), &d, &BroadeningModel::default(), &SpectroSettings::default(), &[5.0, 6.0]);
        assert!(r.is_err());
    }

    /// Independent evaluation: every populated ground-doublet line in the window, by hand.
    fn kappa_oracle(c: &CavityModel, field: f64) -> f64 {
        let b = BroadeningModel::default();
        let builder = HamiltonianBuilder::new(&SpinSystem::how10()).unwrap();
        let eig = builder.solve_cartesian([0.0, 0.0, field]).unwrap();
        let drive = DriveMatrix::new(&builder, crate::spectro::DriveOperator::Longitudinal);
        let ts = enumerate_transitions(&eig, &drive, 4.2, 14.0, &SpectroSettings::default()).unwrap();
        let dp_max = ts.iter().map(|t| t.delta_p).fold(0.0, f64::max);
        c.kappa_ghz
            + ts.iter()
                .filter(|t| (t.omega12 - c.omega_r_ghz).abs() <= c.detuning_window_ghz)
                .map(|t| {
                    let gamma = homogeneous_width(&b, t.omega12).unwrap();
                    t.delta_p / dp_max * gamma * c.g_n() * c.g_n()
                        / ((t.omega12 - c.omega_r_ghz).powi(2) + gamma * gamma)
                })
                .sum::<f64>()
    }

    #[test]
    fn crossing_raises_kappa() {
        // the m_I = -5/2 branch climbs through ω_r a little above the fourth clock field
        let c = model(0.1);
        let fields: Vec<f64> = (0..201).map(|k| 0.15 + k as f64 * 2e-4).collect();
        let d = diagram(&fields);
        let b = BroadeningModel::default();
        let sim = cavity_map(&c, &d, &b, &SpectroSettings::default(), &[11.7]).unwrap();
        let (imax, peak) = sim
            .kappa_curve
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, p)| if p.kappa_eff_ghz > acc.1 { (i, p.kappa_eff_ghz) } else { acc });
        assert!(imax > 0 && imax < fields.len() - 1);
        let full = 0.01 / homogeneous_width(&b, c.omega_r_ghz).unwrap();
        let excess = peak - c.kappa_ghz;
        // a crossing branch carries most of the polarization, and the maximum cannot exceed the single-line value by much
        assert!(excess > 0.5 * full && excess < 1.2 * full, "{excess} vs {full}");
        for k in [0, 50, imax, 150, 200] {
            let p = sim.kappa_curve[k];
            assert!((p.kappa_eff_ghz - kappa_oracle(&c, p.field_t)).abs() < 1e-12);
        }
        assert!(sim.kappa_curve.iter().all(|p| p.kappa_eff_ghz >= c.kappa_ghz));
    }

    #[test]
    fn unit_weighting_hits_full_excess() {
        let c = CavityModel {
            weighting: Weighting::Unit,
            detuning_window_ghz: 0.5,
            ..model(0.1)
        };
        let b = BroadeningModel::default();
        let s = SpectroSettings::default();
        let builder = HamiltonianBuilder::new(&SpinSystem::how10()).unwrap();
        let drive = DriveMatrix::new(&builder, s.drive);
        // bisect the field where the lower/upper pair 6-9 sits exactly at ω_r
        let omega = |h: f64| {
            let e = builder.solve_cartesian([0.0, 0.0, h]).unwrap();
            e.energies[9] - e.energies[6]
        };
        let (mut lo, mut hi) = (0.164, 0.18);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if omega(mid) < c.omega_r_ghz { lo = mid } else { hi = mid }
        }
        let eig = builder.solve_cartesian([0.0, 0.0, lo]).unwrap();
        let k = kappa_at(&c, &eig, &drive, &b, &s).unwrap();
        let full = 0.01 / homogeneous_width(&b, c.omega_r_ghz).unwrap();
        assert!(k - c.kappa_ghz >= full * (1.0 - 1e-9));
    }

    #[test]
    fn absolute_weighting_scales_down() {
        let d = diagram(&[0.172]);
        let b = BroadeningModel::default();
        let s = SpectroSettings::default();
        let rel = cavity_map(&model(0.1), &d, &b, &s, &[11.7]).unwrap();
        let abs = CavityModel {
            weighting: Weighting::Absolute,
            ..model(0.1)
        };
        let weighted = cavity_map(&abs, &d, &b, &s, &[11.7]).unwrap();
        let k0 = model(0.1).kappa_ghz;
        let (er, ea) = (rel.kappa_curve[0].kappa_eff_ghz - k0, weighted.kappa_curve[0].kappa_eff_ghz - k0);
        assert!(er > 0.0 && ea > 0.0 && ea < 0.05 * er);
    }

    #[test]
    fn kappa_csv() {
        let mut buf = Vec::new();
        write_kappa_csv(&[KappaPoint { field_t: 0.1, kappa_eff_ghz: 0.2 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "field_T,kappa_eff_GHz\n0.1,0.2\n");
    }
}
