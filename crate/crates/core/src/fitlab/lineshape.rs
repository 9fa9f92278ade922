use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use super::{half_crossing, FitParameter, FitResult, Trace};
use crate::{Error, Result};

/// Single-resonance parameters, all in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeParams {
    /// Spin-photon rate Γ.
    pub rate: f64,
    /// Homogeneous width γ.
    pub width: f64,
    pub omega12: f64,
}

impl LineshapeParams {
    fn to_vec(self) -> Vec<f64> {
        vec![self.rate, self.width, self.omega12]
    }
}

/// t − 1 for one line: t = 1/(1 + ΓΔP/(γ + i(ω₁₂ − ω))).
pub fn lineshape_model(p: &LineshapeParams, delta_p: f64, omega: f64) -> Complex64 {
    let u = Complex64::new(p.width + p.rate * delta_p, p.omega12 - omega);
    -(p.rate * delta_p) / u
}

const NAMES: [(&str, &str); 3] = [("Gamma", "GHz"), ("gamma", "GHz"), ("omega12", "GHz")];

/// Fit (Γ, γ, ω₁₂) to a trace of t − 1 with ΔP held fixed.
///
/// Only the product Γ·ΔP is set by the data; scaling ΔP by s returns Γ/s. Magnitude data
/// (|t| − 1) is fitted unless the trace carries an imaginary part.
pub fn fit_lineshape(trace: &Trace, delta_p: f64, init: Option<LineshapeParams>) -> Result<FitResult> {
    trace.validate()?;
    if !(delta_p > 0.0) {
        return Err(Error::InvalidParameter("delta_p must be positive".into()));
    }
    let init = match init {
        Some(p) => p,
        None => initial_guess(trace, delta_p)?,
    };
    let w = trace.weights();
    let x = &trace.x;
    let rep = match &trace.y_imag {
        None => {
            let y = &trace.y;
            let problem = |p: &[f64]| {
                let (rate, gamma, w12) = (p[0], p[1], p[2]);
                if !(rate > 0.0 && gamma > 0.0) {
                    return None;
                }
                let a = rate * delta_p;
                let n = x.len();
                let mut r = DVector::zeros(n);
                let mut j = DMatrix::zeros(n, 3);
                for i in 0..n {
                    let d = w12 - x[i];
                    let num = gamma * gamma + d * d;
                    let den = (gamma + a) * (gamma + a) + d * d;
                    let m = (num / den).sqrt();
                    r[i] = w[i] * (m - 1.0 - y[i]);
                    let dm_da = -m * (gamma + a) / den;
                    j[(i, 0)] = w[i] * dm_da * delta_p;
                    j[(i, 1)] = w[i] * m * (gamma / num - (gamma + a) / den);
                    j[(i, 2)] = w[i] * m * (d / num - d / den);
                }
                Some((r, j))
            };
            levenberg_marquardt(&problem, &init.to_vec(), &LmOptions::default())?
        }
        Some(yi) => {
            let y = &trace.y;
            let problem = |p: &[f64]| {
                let (rate, gamma, w12) = (p[0], p[1], p[2]);
                if !(rate > 0.0 && gamma > 0.0) {
                    return None;
                }
                let a = rate * delta_p;
                let n = x.len();
                let mut r = DVector::zeros(2 * n);
                let mut j = DMatrix::zeros(2 * n, 3);
                for i in 0..n {
                    let u = Complex64::new(gamma + a, w12 - x[i]);
                    let u2 = u * u;
                    let g = -a / u;
                    let dg_da = -Complex64::new(gamma, w12 - x[i]) / u2;
                    let dg_dgamma = a / u2;
                    let dg_dw = Complex64::i() * a / u2;
                    r[2 * i] = w[i] * (g.re - y[i]);
                    r[2 * i + 1] = w[i] * (g.im - yi[i]);
                    for (k, d) in [dg_da * delta_p, dg_dgamma, dg_dw].into_iter().enumerate() {
                        j[(2 * i, k)] = w[i] * d.re;
                        j[(2 * i + 1, k)] = w[i] * d.im;
                    }
                }
                Some((r, j))
            };
            levenberg_marquardt(&problem, &init.to_vec(), &LmOptions::default())?
        }
    };
    let model = if trace.y_imag.is_some() {
        "lineshape_complex"
    } else {
        "lineshape_magnitude"
    };
    let fixed = vec![FitParameter {
        name: "delta_p".into(),
        unit: "1".into(),
        value: delta_p,
        std_error: 0.0,
    }];
    Ok(FitResult::from_report(model, &NAMES, fixed, rep))
}

/// ω₁₂ at the deepest point, γ from the half-depth width, Γ ≈ depth·γ/ΔP.
fn initial_guess(trace: &Trace, delta_p: f64) -> Result<LineshapeParams> {
    let depth_curve: Vec<f64> = match &trace.y_imag {
        None => trace.y.iter().map(|y| -y).collect(),
        Some(yi) => trace
            .y
            .iter()
            .zip(yi)
            .map(|(re, im)| 1.0 - Complex64::new(1.0 + re, *im).norm())
            .collect(),
    };
    let (imax, depth) = depth_curve
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = depth_curve.iter().copied().fold(f64::INFINITY, f64::min);
    if !(depth > 0.0) || depth - lo <= 1e-12 {
        return Err(Error::FitRejected("trace shows no absorption dip".into()));
    }
    if imax == 0 || imax == trace.len() - 1 {
        return Err(Error::FitRejected("absorption extremum lies at the window edge".into()));
    }
    let x = &trace.x;
    let half = 0.5 * depth;
    let right = half_crossing(x, &depth_curve, imax, half, true);
    let left = half_crossing(x, &depth_curve, imax, half, false);
    let hwhm = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (r - l).abs(),
        (Some(e), None) | (None, Some(e)) => (e - x[imax]).abs(),
        (None, None) => 0.25 * (x[x.len() - 1] - x[0]).abs(),
    };
    Ok(LineshapeParams {
        rate: depth * hwhm / delta_p,
        width: hwhm,
        omega12: x[imax],
    })
}
