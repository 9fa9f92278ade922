use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// S21/S21⁽⁰⁾ as modelled.
    Raw,
    /// Field-difference normalized.
    Normalized,
    /// Cavity-window transmission.
    Cavity,
    /// Imported measurement.
    Measured,
}

/// Model parameters stored alongside a map (the JSON header).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub kind: MapKind,
    #[serde(rename = "temperature_K")]
    pub temperature_k: Option<f64>,
    #[serde(rename = "g0_sqrtGHz")]
    pub g0: Option<f64>,
    #[serde(rename = "reference_field_T")]
    pub reference_field_t: Option<f64>,
    #[serde(rename = "delta_field_T")]
    pub delta_field_t: Option<f64>,
    pub parameters: serde_json::Value,
}

impl MapMetadata {
    pub fn bare(kind: MapKind) -> Self {
        Self {
            kind,
            temperature_k: None,
            g0: None,
            reference_field_t: None,
            delta_field_t: None,
            parameters: serde_json::Value::Null,
        }
    }
}

/// Transmission at one field outside every resonance, used as S21⁽⁰⁾.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrace {
    #[serde(rename = "field_T")]
    pub field_t: f64,
    pub values: Vec<Complex64>,
}

/// Complex transmission on a field × frequency grid, stored field-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    pub fields_t: Vec<f64>,
    pub freqs_ghz: Vec<f64>,
    values: Vec<Complex64>,
    pub metadata: MapMetadata,
    pub reference: Option<ReferenceTrace>,
}

#[derive(Serialize)]
struct Header<'a> {
    field_points: usize,
    freq_points: usize,
    #[serde(rename = "field_range_T")]
    field_range: [f64; 2],
    #[serde(rename = "freq_range_GHz")]
    freq_range: [f64; 2],
    #[serde(flatten)]
    metadata: &'a MapMetadata,
}

impl TransmissionMap {
    pub fn new(
        fields_t: Vec<f64>,
        freqs_ghz: Vec<f64>,
        values: Vec<Complex64>,
        metadata: MapMetadata,
        reference: Option<ReferenceTrace>,
    ) -> Result<Self> {
        if values.len() != fields_t.len() * freqs_ghz.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {}x{} grid",
                values.len(),
                fields_t.len(),
                freqs_ghz.len()
            )));
        }
        if let Some(r) = &reference {
            if r.values.len() != freqs_ghz.len() {
                return Err(Error::InvalidGrid("reference trace length differs from frequency grid".into()));
            }
        }
        Ok(Self {
            fields_t,
            freqs_ghz,
            values,
            metadata,
            reference,
        })
    }

    pub fn get(&self, field_idx: usize, freq_idx: usize) -> Complex64 {
        self.values[field_idx * self.freqs_ghz.len() + freq_idx]
    }

    pub fn row(&self, field_idx: usize) -> &[Complex64] {
        let n = self.freqs_ghz.len();
        &self.values[field_idx * n..(field_idx + 1) * n]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Row at an arbitrary field by linear interpolation between grid rows.
    pub fn interpolate_row(&self, field_t: f64) -> Result<Vec<Complex64>> {
        let f = &self.fields_t;
        let (first, last) = (f[0], f[f.len() - 1]);
        let eps = 1e-12 * (1.0 + last.abs());
        if field_t < first - eps || field_t > last + eps {
            return Err(Error::InvalidGrid(format!("field {field_t} T outside map range")));
        }
        let hi = f.partition_point(|&x| x < field_t).min(f.len() - 1);
        if (f[hi] - field_t).abs() <= eps || hi == 0 {
            return Ok(self.row(hi).to_vec());
        }
        let lo = hi - 1;
        let w = (field_t - f[lo]) / (f[hi] - f[lo]);
        Ok(self
            .row(lo)
            .iter()
            .zip(self.row(hi))
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "field_T,freq_GHz,re_t,im_t,abs_t")?;
        for (i, b) in self.fields_t.iter().enumerate() {
            for (j, f) in self.freqs_ghz.iter().enumerate() {
                let z = self.get(i, j);
                writeln!(w, "{},{},{},{},{}", b, f, z.re, z.im, z.norm())?;
            }
        }
        Ok(())
    }

    pub fn write_header_json<W: Write>(&self, w: W) -> Result<()> {
        let header = Header {
            field_points: self.fields_t.len(),
            freq_points: self.freqs_ghz.len(),
            field_range: [self.fields_t[0], *self.fields_t.last().unwrap()],
            freq_range: [self.freqs_ghz[0], *self.freqs_ghz.last().unwrap()],
            metadata: &self.metadata,
        };
        serde_json::to_writer_pretty(w, &header)?;
        Ok(())
    }

    /// Read a map written by [`write_csv`](Self::write_csv) (or a measured map in the same schema).
    /// Rows must cover a full rectangular grid, field-major.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut fields: Vec<f64> = Vec::new();
        let mut freqs: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if lineno == 1 && t.starts_with("field_T") {
                continue;
            }
            let cols: Vec<&str> = t.split(',').map(str::trim).collect();
            if cols.len() < 4 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected field_T,freq_GHz,re_t,im_t[,abs_t], got {} columns", cols.len()),
                });
            }
            let num = |k: usize| {
                cols[k].parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("column {}: {e}", k + 1),
                })
            };
            let (b, f, re, im) = (num(0)?, num(1)?, num(2)?, num(3)?);
            if fields.last() != Some(&b) {
                if fields.contains(&b) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "rows must be grouped by field".into(),
                    });
                }
                fields.push(b);
            }
            if fields.len() == 1 {
                freqs.push(f);
            } else {
                let j = values.len() % freqs.len();
                if freqs[j] != f {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("frequency {f} does not match grid value {}", freqs[j]),
                    });
                }
            }
            values.push(Complex64::new(re, im));
        }
        if values.is_empty() {
            return Err(Error::Parse { line: 0, message: "no data rows".into() });
        }
        Self::new(fields, freqs, values, MapMetadata::bare(MapKind::Measured), None)
    }
}

/// Difference normalization: t(H₁, ω) = (S(H₁, ω) − S(H₁ + δ, ω))/S⁽⁰⁾(ω).
///
/// Rows whose partner field H₁ + δ lies beyond the grid are dropped. The empty-line
/// trace S⁽⁰⁾ is interpolated from the map when `reference_field_t` is inside the
/// grid, otherwise taken from the map's stored reference trace.
pub fn normalize_map(raw: &TransmissionMap, delta_field_t: f64, reference_field_t: f64) -> Result<TransmissionMap> {
    let f = &raw.fields_t;
    let span = f[f.len() - 1] - f[0];
    if !(delta_field_t > 0.0) {
        return Err(Error::InvalidParameter("delta_field must be positive".into()));
    }
    if delta_field_t > span {
        return Err(Error::InvalidGrid(format!(
            "delta_field {delta_field_t} T exceeds grid span {span} T"
        )));
    }
    let reference = if reference_field_t >= f[0] && reference_field_t <= f[f.len() - 1] {
        raw.interpolate_row(reference_field_t)?
    } else {
        match &raw.reference {
            Some(r) if (r.field_t - reference_field_t).abs() <= 1e-12 * (1.0 + r.field_t.abs()) => r.values.clone(),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "reference field {reference_field_t} T is outside the map and no stored reference matches"
                )))
            }
        }
    };
    let last = f[f.len() - 1];
    let eps = 1e-12 * (1.0 + last.abs());
    let mut fields = Vec::new();
    let mut values = Vec::new();
    for (i, &b) in f.iter().enumerate() {
        let partner = b + delta_field_t;
        if partner > last + eps {
            break;
        }
        let other = raw.interpolate_row(partner.min(last))?;
        fields.push(b);
        values.extend(
            raw.row(i)
                .iter()
                .zip(&other)
                .zip(&reference)
                .map(|((s1, s2), s0)| (s1 - s2) / s0),
        );
    }
    let mut metadata = raw.metadata.clone();
    metadata.kind = MapKind::Normalized;
    metadata.delta_field_t = Some(delta_field_t);
    metadata.reference_field_t = Some(reference_field_t);
    TransmissionMap::new(fields, raw.freqs_ghz.clone(), values, metadata, raw.reference.clone())
}

/// RMS of |a − b| over a shared grid.
pub fn map_residual(a: &TransmissionMap, b: &TransmissionMap) -> Result<f64> {
    let same = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + p.abs()))
    };
    if !same(&a.fields_t, &b.fields_t) || !same(&a.freqs_ghz, &b.freqs_ghz) {
        return Err(Error::InvalidGrid("maps are on different grids".into()));
    }
    let n = a.values.len() as f64;
    Ok((a.values.iter().zip(&b.values).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(fields: &[f64], freqs: &[f64], f: impl Fn(f64, f64) -> Complex64) -> TransmissionMap {
        let v = fields
            .iter()
            .flat_map(|&b| freqs.iter().map(move |&w| (b, w)))
            .map(|(b, w)| f(b, w))
            .collect();
        TransmissionMap::new(fields.to_vec(), freqs.to_vec(), v, MapMetadata::bare(MapKind::Raw), None).unwrap()
    }

    fn lorentz(b: f64, w: f64) -> Complex64 {
        // line at ω = 9 + 100 b
        1.0 / (1.0 + 0.05 / Complex64::new(0.1, 9.0 + 100.0 * b - w))
    }

    #[test]
    fn field_independent_map_normalizes_to_zero() {
        let fields: Vec<f64> = (0..11).map(|k| k as f64 * 0.01).collect();
        let freqs = [8.0, 9.0, 10.0];
        let raw = map_from(&fields, &freqs, |_, w| Complex64::new(0.9, 0.01 * w));
        let t = normalize_map(&raw, 0.01, 0.0).unwrap();
        assert_eq!(t.fields_t.len(), 10);
        assert!(t.values().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn wide_delta_recovers_profile() {
        let fields: Vec<f64> = (0..41).map(|k| k as f64 * 0.001).collect();
        let freqs: Vec<f64> = (0..50).map(|k| 8.5 + k as f64 * 0.02).collect();
        let raw = map_from(&fields, &freqs, lorentz);
        // partner 30 mT away is 3 GHz off resonance; reference at the same far field
        let t = normalize_map(&raw, 0.03, 0.04).unwrap();
        for (j, &w) in freqs.iter().enumerate() {
            let s0 = lorentz(0.04, w);
            let expected = (lorentz(0.0, w) - lorentz(0.03, w)) / s0;
            assert!((t.get(0, j) - expected).norm() < 1e-14);
            // away from the shifted lines this is the bare profile minus one
            let approx = lorentz(0.0, w) - 1.0;
            assert!((t.get(0, j) - approx).norm() < 0.05);
        }
    }

    #[test]
    fn delta_beyond_span_rejected() {
        let raw = map_from(&[0.0, 0.1], &[9.0], lorentz);
        assert!(normalize_map(&raw, 0.2, 0.0).is_err());
        assert!(normalize_map(&raw, 0.0, 0.0).is_err());
    }

    #[test]
    fn stored_reference_used_outside_grid() {
        let mut raw = map_from(&[0.0, 0.01, 0.02], &[9.0, 9.5], lorentz);
        assert!(normalize_map(&raw, 0.01, 1.0).is_err());
        raw.reference = Some(ReferenceTrace {
            field_t: 1.0,
            values: vec![Complex64::new(2.0, 0.0); 2],
        });
        let t = normalize_map(&raw, 0.01, 1.0).unwrap();
        let expected = (lorentz(0.0, 9.0) - lorentz(0.01, 9.0)) / 2.0;
        assert!((t.get(0, 0) - expected).norm() < 1e-15);
    }

    #[test]
    fn interpolation_between_rows() {
        let raw = map_from(&[0.0, 1.0], &[1.0], |b, _| Complex64::new(b, -b));
        let r = raw.interpolate_row(0.25).unwrap();
        assert!((r[0] - Complex64::new(0.25, -0.25)).norm() < 1e-15);
        assert!(raw.interpolate_row(1.5).is_err());
    }

    #[test]
    fn csv_roundtrip_and_residual() {
        let raw = map_from(&[0.0, 0.005, 0.01], &[8.9, 9.0, 9.1], lorentz);
        let mut buf = Vec::new();
        raw.write_csv(&mut buf).unwrap();
        let back = TransmissionMap::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), raw.values());
        assert_eq!(map_residual(&raw, &back).unwrap(), 0.0);
        let shifted = map_from(&[0.0, 0.005, 0.01], &[8.9, 9.0, 9.1], |b, w| lorentz(b, w) + 0.1);
        assert!((map_residual(&raw, &shifted).unwrap() - 0.1).abs() < 1e-12);
        let other = map_from(&[0.0, 0.01], &[8.9], lorentz);
        assert!(map_residual(&raw, &other).is_err());
    }

    #[test]
    fn csv_errors_are_line_anchored() {
        let text = "field_T,freq_GHz,re_t,im_t,abs_t\n0,9,1,0,1\n0,9.5,x,0,1\n";
        match TransmissionMap::read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_json_has_grid() {
        let raw = map_from(&[0.0, 0.01], &[9.0, 10.0, 11.0], lorentz);
        let mut buf = Vec::new();
        raw.write_header_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["freq_points"], 3);
        assert_eq!(v["kind"], "raw");
    }
}
