//! Damped least-squares inversion of transmission traces and cavity-width curves.

mod cavity_width;
mod lineshape;
pub mod lm;

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cavity_width::{cavity_width_model, fit_cavity_width, CavityWidthParams};
pub use lineshape::{fit_lineshape, lineshape_model, LineshapeParams};
pub use lm::{levenberg_marquardt, LmOptions, LmReport};

/// Sampled curve: x in GHz (frequency traces) or T (width curves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Imaginary part of the ordinate, when phase was recorded.
    pub y_imag: Option<Vec<f64>>,
    /// Per-point one-sigma uncertainty.
    pub sigma: Option<Vec<f64>>,
}

impl Trace {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let t = Self {
            x,
            y,
            y_imag: None,
            sigma: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_imag(mut self, y_imag: Vec<f64>) -> Result<Self> {
        self.y_imag = Some(y_imag);
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if n < 4 {
            return Err(Error::FitRejected(format!("trace has {n} points, need at least 4")));
        }
        if self.y.len() != n
            || self.y_imag.as_ref().is_some_and(|v| v.len() != n)
            || self.sigma.as_ref().is_some_and(|v| v.len() != n)
        {
            return Err(Error::FitRejected("trace columns differ in length".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.x) || !finite(&self.y) || !self.y_imag.as_deref().is_none_or(finite) {
            return Err(Error::FitRejected("trace contains non-finite values".into()));
        }
        if let Some(s) = &self.sigma {
            if s.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::FitRejected("sigma must be positive".into()));
            }
        }
        let up = self.x.windows(2).all(|w| w[1] > w[0]);
        let down = self.x.windows(2).all(|w| w[1] < w[0]);
        if !up && !down {
            return Err(Error::FitRejected("abscissa must be strictly monotone".into()));
        }
        Ok(())
    }

    /// 1/σᵢ, or ones.
    pub(crate) fn weights(&self) -> Vec<f64> {
        match &self.sigma {
            Some(s) => s.iter().map(|s| 1.0 / s).collect(),
            None => vec![1.0; self.len()],
        }
    }

    /// CSV with columns `x,y[,sigma]`, or any order of `x,y,y_imag,sigma` given a header row.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut order: Option<Vec<usize>> = None;
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut width = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split(',').map(str::trim).collect();
            if width.is_none() && fields[0].parse::<f64>().is_err() {
                let mut o = Vec::new();
                for name in &fields {
                    let k = match *name {
                        "x" | "freq_GHz" | "field_T" => 0,
                        "y" | "re_t" | "kappa_eff_GHz" => 1,
                        "y_imag" | "im_t" => 2,
                        "sigma" => 3,
                        other => {
                            return Err(Error::Parse {
                                line: lineno,
                                message: format!("unknown column '{other}'"),
                            })
                        }
                    };
                    if o.contains(&k) {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("duplicate column '{name}'"),
                        });
                    }
                    o.push(k);
                }
                if !o.contains(&0) || !o.contains(&1) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header must name x and y columns".into(),
                    });
                }
                width = Some(o.len());
                order = Some(o);
                continue;
            }
            let w = *width.get_or_insert(fields.len());
            if fields.len() != w || !(2..=4).contains(&w) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} columns, got {}", fields.len()),
                });
            }
            let o = order.get_or_insert_with(|| match w {
                2 => vec![0, 1],
                3 => vec![0, 1, 3],
                _ => vec![0, 1, 2, 3],
            });
            for (f, &k) in fields.iter().zip(o.iter()) {
                let v = f.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("'{f}': {e}"),
                })?;
                cols[k].push(v);
            }
        }
        let [x, y, yi, s] = cols;
        if x.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no data rows".into(),
            });
        }
        let t = Self {
            x,
            y,
            y_imag: (!yi.is_empty()).then_some(yi),
            sigma: (!s.is_empty()).then_some(s),
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    /// Inputs held fixed during the fit (e.g. ΔP).
    pub fixed: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.std_error)
    }

    pub fn values(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub(crate) fn from_report(model: &str, names: &[(&str, &str)], fixed: Vec<FitParameter>, rep: LmReport) -> Self {
        let errs = rep.std_errors();
        Self {
            model: model.into(),
            parameters: names
                .iter()
                .zip(rep.params.iter().zip(errs))
                .map(|((n, u), (&v, e))| FitParameter {
                    name: (*n).into(),
                    unit: (*u).into(),
                    value: v,
                    std_error: e,
                })
                .collect(),
            fixed,
            residual_norm: rep.residual_norm,
            converged: true,
            iterations: rep.iterations,
            cost_history: rep.cost_history,
        }
    }
}

/// Linear crossing of `level` between samples `i` and `i ± 1`, walking away from `start`.
pub(crate) fn half_crossing(x: &[f64], excess: &[f64], start: usize, level: f64, forward: bool) -> Option<f64> {
    let n = x.len();
    let mut i = start;
    loop {
        let next = if forward {
            (i + 1 < n).then_some(i + 1)?
        } else {
            i.checked_sub(1)?
        };
        if excess[next] <= level {
            let (a, b) = (excess[i], excess[next]);
            let w = if a == b { 0.0 } else { (a - level) / (a - b) };
            return Some(x[i] + w * (x[next] - x[i]));
        }
        i = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_positional() {
        let t = Trace::read_csv("1,0.1\n2,0.2\n3,0.3\n4,0.1\n".as_bytes()).unwrap();
        assert_eq!(t.x, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(t.sigma.is_none());
        let t = Trace::read_csv("# comment\n1,0.1,0.01\n2,0.2,0.01\n3,0.3,0.01\n4,0.1,0.01\n".as_bytes()).unwrap();
        assert_eq!(t.sigma.unwrap()[3], 0.01);
    }

    #[test]
    fn csv_header_with_imag() {
        let text = "x,y,y_imag\n1,0,0.5\n2,0,0.4\n3,0,0.3\n4,0,0.2\n";
        let t = Trace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.y_imag.unwrap()[1], 0.4);
    }

    #[test]
    fn csv_errors() {
        match Trace::read_csv("1,0.1\n2,zz\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match Trace::read_csv("x,q\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(Trace::read_csv("1,0\n1,0\n2,0\n3,0\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(Trace::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).is_err());
        assert!(Trace::new(vec![4.0, 3.0, 2.0, 1.0], vec![0.0; 4]).is_ok());
        assert!(Trace::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 3]).is_err());
        let t = Trace::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]).unwrap();
        assert!(t.with_sigma(vec![1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn crossing_interpolation() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let e = [0.0, 0.5, 1.0, 0.5, 0.0];
        assert_eq!(half_crossing(&x, &e, 2, 0.5, true), Some(3.0));
        assert_eq!(half_crossing(&x, &e, 2, 0.75, false), Some(1.5));
        assert_eq!(half_crossing(&x, &e, 2, -1.0, true), None);
    }
}
