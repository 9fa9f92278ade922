use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{half_crossing, FitParameter, FitResult, Trace};
use crate::{Error, Result};

/// κ̃(H) parameters, all in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityWidthParams {
    pub kappa: f64,
    pub gamma: f64,
    pub g_n: f64,
}

/// κ + γG²/(δ² + γ²) at detuning δ = ω₁₂(H) − ω_r.
pub fn cavity_width_model(p: &CavityWidthParams, detuning: f64) -> f64 {
    p.kappa + p.gamma * p.g_n * p.g_n / (detuning * detuning + p.gamma * p.gamma)
}

const NAMES: [(&str, &str); 3] = [("kappa", "GHz"), ("gamma", "GHz"), ("G_N", "GHz")];

/// Fit (κ, γ, G_N) to a width-vs-field curve; `omega12_of_field` maps field (T) to the
/// frequency (GHz) of the transition that crosses the cavity.
pub fn fit_cavity_width(
    curve: &Trace,
    omega_r: f64,
    omega12_of_field: &dyn Fn(f64) -> f64,
    init: Option<CavityWidthParams>,
) -> Result<FitResult> {
    curve.validate()?;
    let detuning: Vec<f64> = curve.x.iter().map(|&h| omega12_of_field(h) - omega_r).collect();
    if detuning.iter().any(|d| !d.is_finite()) {
        return Err(Error::FitRejected("transition frequency map returned a non-finite value".into()));
    }
    let init = match init {
        Some(p) => p,
        None => initial_guess(curve, &detuning)?,
    };
    let w = curve.weights();
    let y = &curve.y;
    let problem = |p: &[f64]| {
        let (kappa, gamma, g) = (p[0], p[1], p[2]);
        if !(gamma > 0.0 && g > 0.0) {
            return None;
        }
        let n = y.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for i in 0..n {
            let d2 = detuning[i] * detuning[i];
            let den = d2 + gamma * gamma;
            r[i] = w[i] * (kappa + gamma * g * g / den - y[i]);
            j[(i, 0)] = w[i];
            j[(i, 1)] = w[i] * g * g * (d2 - gamma * gamma) / (den * den);
            j[(i, 2)] = w[i] * 2.0 * gamma * g / den;
        }
        Some((r, j))
    };
    let rep = levenberg_marquardt(&problem, &[init.kappa, init.gamma, init.g_n], &LmOptions::default())?;
    let fixed = vec![FitParameter {
        name: "omega_r".into(),
        unit: "GHz".into(),
        value: omega_r,
        std_error: 0.0,
    }];
    Ok(FitResult::from_report("cavity_width", &NAMES, fixed, rep))
}

/// κ from the baseline, γ from the half-maximum detuning, G from peak excess·γ.
fn initial_guess(curve: &Trace, detuning: &[f64]) -> Result<CavityWidthParams> {
    let y = &curve.y;
    let (imax, peak) = y
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let base = y.iter().copied().fold(f64::INFINITY, f64::min);
    let excess_max = peak - base;
    if !(excess_max > 1e-12 * peak.abs().max(1e-300)) {
        return Err(Error::FitRejected("width curve has no peak".into()));
    }
    if imax == 0 || imax == y.len() - 1 {
        return Err(Error::FitRejected("width maximum lies at the curve edge".into()));
    }
    let excess: Vec<f64> = y.iter().map(|v| v - base).collect();
    let half = 0.5 * excess_max;
    let d0 = detuning[imax];
    let sides = [
        half_crossing(detuning, &excess, imax, half, true),
        half_crossing(detuning, &excess, imax, half, false),
    ];
    let widths: Vec<f64> = sides.iter().flatten().map(|d| (d - d0).abs()).filter(|w| *w > 0.0).collect();
    let gamma = if widths.is_empty() {
        detuning.iter().map(|d| (d - d0).abs()).fold(0.0, f64::max) / 4.0
    } else {
        widths.iter().sum::<f64>() / widths.len() as f64
    };
    if !(gamma > 0.0) {
        return Err(Error::FitRejected("cannot estimate the crossing width".into()));
    }
    Ok(CavityWidthParams {
        kappa: base,
        gamma,
        g_n: (excess_max * gamma).sqrt(),
    })
}
