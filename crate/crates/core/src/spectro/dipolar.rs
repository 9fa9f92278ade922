//! Static dipolar bias fields along the anisotropy axis.
//!
//! Two sources: a Gaussian of given standard deviation, or a Monte Carlo lattice
//! sum over randomly oriented Ising moments around a probe site.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON_J_PER_T, MU0_OVER_4PI, MU_B_GHZ_PER_T};
use crate::{Error, Result};

const ANGSTROM: f64 = 1e-10;
const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DipolarMode {
    #[default]
    Gaussian,
    LatticeMc,
}

/// Crystal lattice for the Monte Carlo lattice sum. The probe sits on the first site of cell (0,0,0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Cell vectors a, b, c in Å, Cartesian with z along the anisotropy axis.
    pub cell_vectors_angstrom: [[f64; 3]; 3],
    /// Fractional coordinates of the magnetic sites in one cell.
    pub sites_fractional: Vec<[f64; 3]>,
    /// Ising moment g_J·|m_J| in Bohr magnetons.
    #[serde(default = "default_moment")]
    pub moment_bohr: f64,
    pub cutoff_angstrom: f64,
}

fn default_moment() -> f64 {
    5.0
}

/// Distribution of dipolar bias fields (T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipolarDistribution {
    pub mode: DipolarMode,
    /// Standard deviation for the Gaussian mode.
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub lattice: Option<LatticeSpec>,
    /// Number of samples for histograms of the distribution itself.
    pub histogram_samples: usize,
    pub seed: u64,
}

impl Default for DipolarDistribution {
    fn default() -> Self {
        Self {
            mode: DipolarMode::Gaussian,
            sigma_t: 6e-3,
            lattice: None,
            histogram_samples: 100_000,
            seed: 0,
        }
    }
}

impl DipolarDistribution {
    pub fn gaussian(sigma_t: f64, seed: u64) -> Self {
        Self { sigma_t, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t >= 0.0) {
            return Err(Error::InvalidParameter("dipolar sigma must be non-negative".into()));
        }
        if self.histogram_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "dipolar sample count must be at least {MIN_MC_SAMPLES}"
            )));
        }
        if self.mode == DipolarMode::LatticeMc {
            let l = self
                .lattice
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("lattice_mc mode needs a lattice".into()))?;
            if l.sites_fractional.is_empty() {
                return Err(Error::InvalidParameter("lattice has no sites".into()));
            }
            if !(l.cutoff_angstrom > 0.0) || !(l.moment_bohr >= 0.0) {
                return Err(Error::InvalidParameter("lattice needs cutoff > 0 and moment ≥ 0".into()));
            }
        }
        Ok(())
    }

    /// True when samples vary, i.e. averaging over them is meaningful.
    pub fn is_random(&self) -> bool {
        match self.mode {
            DipolarMode::Gaussian => self.sigma_t > 0.0,
            DipolarMode::LatticeMc => true,
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-neighbour z-field (T) of a unit Ising spin at each site inside the cutoff sphere.
fn lattice_factors(l: &LatticeSpec) -> Result<Vec<f64>> {
    let [a, b, c] = l.cell_vectors_angstrom;
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    };
    let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let volume = dot(a, cross(b, c)).abs();
    if !(volume > 0.0) {
        return Err(Error::InvalidParameter("degenerate lattice cell".into()));
    }
    // interplanar spacings bound how many cells the cutoff sphere can reach
    let reach = |u, v| {
        let n = cross(u, v);
        let d = volume / dot(n, n).sqrt();
        (l.cutoff_angstrom / d).ceil() as i64 + 1
    };
    let (na, nb, nc) = (reach(b, c), reach(c, a), reach(a, b));
    let cart = |f: [f64; 3]| {
        [0, 1, 2].map(|k| f[0] * a[k] + f[1] * b[k] + f[2] * c[k])
    };
    let origin = cart(l.sites_fractional[0]);
    let prefactor = MU0_OVER_4PI * l.moment_bohr * BOHR_MAGNETON_J_PER_T / ANGSTROM.powi(3);

    let mut out = Vec::new();
    for i in -na..=na {
        for j in -nb..=nb {
            for k in -nc..=nc {
                for s in &l.sites_fractional {
                    let p = cart([s[0] + i as f64, s[1] + j as f64, s[2] + k as f64]);
                    let r = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
                    let r2 = dot(r, r);
                    let rn = r2.sqrt();
                    if rn < 1e-9 || rn > l.cutoff_angstrom {
                        continue;
                    }
                    let cos2 = r[2] * r[2] / r2;
                    out.push(prefactor * (3.0 * cos2 - 1.0) / (r2 * rn));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCutoff(l.cutoff_angstrom));
    }
    Ok(out)
}

/// `n` bias-field samples (T), drawn as antithetic pairs: sample 2k comes from RNG
/// stream k of the master seed and sample 2k + 1 is its negation. Both distributions
/// are symmetric, so every even-sized ensemble has zero mean. Results do not depend
/// on evaluation order.
pub fn dipolar_bias_samples(d: &DipolarDistribution, n: usize) -> Result<Vec<f64>> {
    d.validate()?;
    match d.mode {
        DipolarMode::Gaussian => {
            if d.sigma_t == 0.0 {
                return Ok(vec![0.0; n]);
            }
            let normal = Normal::new(0.0, d.sigma_t)
                .map_err(|e| Error::InvalidParameter(format!("gaussian width: {e}")))?;
            Ok((0..n)
                .into_par_iter()
                .map(|k| antithetic(k, normal.sample(&mut stream_rng(d.seed, (k / 2) as u64))))
                .collect())
        }
        DipolarMode::LatticeMc => {
            let l = d.lattice.as_ref().expect("validated");
            let factors = lattice_factors(l)?;
            Ok((0..n)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream_rng(d.seed, (k / 2) as u64);
                    let b: f64 = factors
                        .iter()
                        .map(|f| if rng.random::<bool>() { *f } else { -*f })
                        .sum();
                    antithetic(k, b)
                })
                .collect())
        }
    }
}

fn antithetic(k: usize, x: f64) -> f64 {
    if k.is_multiple_of(2) {
        x
    } else {
        -x
    }
}

/// Largest frequency spread of a ±m_J transition under a bias-field width:
/// 2·|m_J|·g_J·μ_B/h·width, GHz.
pub fn energy_broadening_bound(g_j: f64, m_j: f64, width_t: f64) -> f64 {
    2.0 * m_j.abs() * g_j * MU_B_GHZ_PER_T * width_t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub bin_width: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl Histogram {
    pub fn density(&self) -> Vec<f64> {
        let total: usize = self.counts.iter().sum();
        self.counts
            .iter()
            .map(|&c| c as f64 / (total as f64 * self.bin_width))
            .collect()
    }
}

/// Equal-width histogram over the sample range.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram> {
    if samples.is_empty() || bins == 0 {
        return Err(Error::InvalidParameter("histogram needs samples and at least one bin".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1e-12 };
    let width = span / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram {
        bin_centers: (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect(),
        counts,
        bin_width: width,
        mean,
        std_dev: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(a: f64, cutoff: f64) -> LatticeSpec {
        LatticeSpec {
            cell_vectors_angstrom: [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]],
            sites_fractional: vec![[0.0, 0.0, 0.0]],
            moment_bohr: 5.0,
            cutoff_angstrom: cutoff,
        }
    }

    #[test]
    fn zero_width_gives_zeros() {
        let s = dipolar_bias_samples(&DipolarDistribution::gaussian(0.0, 1), 50).unwrap();
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gaussian_width() {
        let s = dipolar_bias_samples(&DipolarDistribution::gaussian(6e-3, 42), 100_000).unwrap();
        let h = histogram(&s, 50).unwrap();
        assert!((h.std_dev - 6e-3).abs() < 0.02 * 6e-3, "{}", h.std_dev);
        assert!(h.mean.abs() < 1e-4);
    }

    #[test]
    fn antithetic_pairs() {
        let s = dipolar_bias_samples(&DipolarDistribution::gaussian(6e-3, 3), 200).unwrap();
        assert!(s.chunks(2).all(|p| p[0] == -p[1] && p[0] != 0.0));
        assert_eq!(s.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let d = DipolarDistribution::gaussian(6e-3, 7);
        assert_eq!(dipolar_bias_samples(&d, 300).unwrap(), dipolar_bias_samples(&d, 300).unwrap());
        let other = DipolarDistribution::gaussian(6e-3, 8);
        assert_ne!(dipolar_bias_samples(&d, 10).unwrap(), dipolar_bias_samples(&other, 10).unwrap());
        // prefix stability: sample k does not depend on n
        let short = dipolar_bias_samples(&d, 10).unwrap();
        assert_eq!(&dipolar_bias_samples(&d, 300).unwrap()[..10], &short[..]);
    }

    #[test]
    fn broadening_bound_for_mj4() {
        let b = energy_broadening_bound(1.25, 4.0, 6e-3);
        assert!((b - 8.0 * 17.49530 * 0.006).abs() < 1e-6);
        assert!((b - 0.84).abs() < 0.02);
    }

    #[test]
    fn empty_cutoff_rejected() {
        let d = DipolarDistribution {
            mode: DipolarMode::LatticeMc,
            lattice: Some(cubic(10.0, 5.0)),
            seed: 1,
            ..DipolarDistribution::default()
        };
        assert!(matches!(dipolar_bias_samples(&d, 10), Err(Error::EmptyCutoff(_))));
    }

    #[test]
    fn cubic_nearest_neighbours_single_config() {
        // 6 neighbours at distance a: two on z (3cos²−1 = 2), four in-plane (−1)
        let l = cubic(10.0, 10.5);
        let f = lattice_factors(&l).unwrap();
        assert_eq!(f.len(), 6);
        let unit = 1e-7 * 5.0 * 9.2740100783e-24 / 1e-27;
        let mut sorted = f.clone();
        sorted.sort_by(f64::total_cmp);
        for (got, want) in sorted.iter().zip([-1.0, -1.0, -1.0, -1.0, 2.0, 2.0]) {
            assert!((got - want * unit).abs() < 1e-12 * unit);
        }
    }

    #[test]
    fn lattice_samples_symmetric_and_bounded() {
        let d = DipolarDistribution {
            mode: DipolarMode::LatticeMc,
            lattice: Some(cubic(12.0, 40.0)),
            seed: 3,
            ..DipolarDistribution::default()
        };
        let f = lattice_factors(d.lattice.as_ref().unwrap()).unwrap();
        let bound: f64 = f.iter().map(|x| x.abs()).sum();
        let s = dipolar_bias_samples(&d, 4000).unwrap();
        let h = histogram(&s, 40).unwrap();
        assert!(s.iter().all(|x| x.abs() <= bound + 1e-15));
        // random-sign sum: variance = Σ f²
        let sigma = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((h.std_dev - sigma).abs() < 0.05 * sigma);
        assert!(h.mean.abs() < 4.0 * sigma / (4000f64).sqrt());
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[0.0, 0.1, 0.2, 0.3, 1.0], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(*h.counts.last().unwrap(), 1);
        let integral: f64 = h.density().iter().map(|d| d * h.bin_width).sum();
        assert!((integral - 1.0).abs() < 1e-12);
    }
}
