use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::spinops::OperatorMatrix;
use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 10_000;

/// Eigenvalues (ascending, GHz) and the matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Eigensystem {
    /// max_k ‖H v_k − E_k v_k‖
    pub fn max_residual(&self, h: &OperatorMatrix) -> f64 {
        let hv = h.matrix() * &self.vectors;
        let mut worst = 0.0_f64;
        for (k, &e) in self.energies.iter().enumerate() {
            let r = hv.column(k) - self.vectors.column(k) * Complex64::new(e, 0.0);
            worst = worst.max(r.norm());
        }
        worst
    }

    /// max |V†V − 1|
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.adjoint() * &self.vectors;
        let n = g.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }
}

/// Diagonalize a Hermitian matrix.
///
/// The matrix is first split into the connected components of its sparsity
/// graph; each block is solved independently (real symmetric path when the block
/// is real) and the results merged in ascending energy order. Exact ties keep the
/// block order. Every eigenvector is phased so its largest component is real
/// and positive.
pub fn diagonalize(h: &OperatorMatrix) -> Result<Eigensystem> {
    let defect = h.hermitian_defect();
    if defect > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let n = h.dim();
    let m = h.matrix();

    let blocks = connected_blocks(m);
    let mut levels: Vec<(f64, DVector<Complex64>)> = Vec::with_capacity(n);
    for idx in &blocks {
        let size = idx.len();
        let is_real = idx
            .iter()
            .all(|&r| idx.iter().all(|&c| m[(r, c)].im == 0.0));
        if is_real {
            let sub = DMatrix::from_fn(size, size, |a, b| {
                0.5 * (m[(idx[a], idx[b])].re + m[(idx[b], idx[a])].re)
            });
            let eig = SymmetricEigen::try_new(sub, f64::EPSILON, MAX_SWEEPS).ok_or(Error::EigenFailure)?;
            for k in 0..size {
                let mut v = DVector::from_element(n, Complex64::new(0.0, 0.0));
                for (a, &row) in idx.iter().enumerate() {
                    v[row] = Complex64::new(eig.eigenvectors[(a, k)], 0.0);
                }
                levels.push((eig.eigenvalues[k], v));
            }
        } else {
            let sub = DMatrix::from_fn(size, size, |a, b| {
                (m[(idx[a], idx[b])] + m[(idx[b], idx[a])].conj()) * 0.5
            });
            let eig = SymmetricEigen::try_new(sub, f64::EPSILON, MAX_SWEEPS).ok_or(Error::EigenFailure)?;
            for k in 0..size {
                let mut v = DVector::from_element(n, Complex64::new(0.0, 0.0));
                for (a, &row) in idx.iter().enumerate() {
                    v[row] = eig.eigenvectors[(a, k)];
                }
                levels.push((eig.eigenvalues[k], v));
            }
        }
    }

    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut energies = Vec::with_capacity(n);
    for (k, (e, mut v)) in levels.into_iter().enumerate() {
        fix_phase(&mut v);
        vectors.set_column(k, &v);
        energies.push(e);
    }
    Ok(Eigensystem { energies, vectors })
}

fn fix_phase(v: &mut DVector<Complex64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        // 1e-12 slack so near-equal components resolve to the first index
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best_abs = z.norm();
            best = i;
        }
    }
    if best_abs > 0.0 {
        let phase = v[best].conj() / best_abs;
        v.apply(|z| *z *= phase);
        v[best] = Complex64::new(v[best].re, 0.0);
    }
}

/// Index sets of the connected components of the graph with an edge wherever m[(r, c)] ≠ 0.
fn connected_blocks(m: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in 0..n {
        for r in (c + 1)..n {
            if m[(r, c)] != Complex64::new(0.0, 0.0) || m[(c, r)] != Complex64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut order: Vec<Option<usize>> = vec![None; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match order[root] {
            Some(b) => blocks[b].push(i),
            None => {
                order[root] = Some(blocks.len());
                blocks.push(vec![i]);
            }
        }
    }
    blocks
}

/// Eigen-decomposition at one applied field with ⟨J_z⟩ and ⟨I_z⟩ attached per level.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Cartesian applied field (T) in the molecular frame.
    pub field_t: [f64; 3],
    pub energies: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    pub jz_expect: Vec<f64>,
    pub iz_expect: Vec<f64>,
}

impl EigenSolution {
    /// `jz` and `iz` must be diagonal in the product basis.
    pub(crate) fn from_eigensystem(
        eig: Eigensystem,
        field_t: [f64; 3],
        jz: &OperatorMatrix,
        iz: &OperatorMatrix,
    ) -> Self {
        let n = eig.energies.len();
        let mut jz_expect = vec![0.0; n];
        let mut iz_expect = vec![0.0; n];
        for k in 0..n {
            let col = eig.vectors.column(k);
            let (mut a, mut b) = (0.0, 0.0);
            for (r, z) in col.iter().enumerate() {
                let w = z.norm_sqr();
                if w != 0.0 {
                    a += w * jz.get(r, r).re;
                    b += w * iz.get(r, r).re;
                }
            }
            jz_expect[k] = a;
            iz_expect[k] = b;
        }
        Self {
            field_t,
            energies: eig.energies,
            vectors: eig.vectors,
            jz_expect,
            iz_expect,
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn field_magnitude(&self) -> f64 {
        self.field_t.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Nearest half-integer to ⟨I_z⟩; exact ties go toward smaller |m_I|.
    pub fn nuclear_label(&self, level: usize) -> f64 {
        round_half_integer(self.iz_expect[level])
    }

    pub fn as_eigensystem(&self) -> Eigensystem {
        Eigensystem {
            energies: self.energies.clone(),
            vectors: self.vectors.clone(),
        }
    }
}

pub(crate) fn round_half_integer(x: f64) -> f64 {
    let twice = 2.0 * x;
    let lo = twice.floor();
    let frac = twice - lo;
    let r = if (frac - 0.5).abs() < 1e-9 {
        // tie: pick the one closer to zero
        if lo.abs() < (lo + 1.0).abs() {
            lo
        } else {
            lo + 1.0
        }
    } else {
        twice.round()
    };
    r / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(n: usize, seed: u64) -> OperatorMatrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for i in 0..n {
            m[(i, i)] = Complex64::new(next(), 0.0);
            for j in (i + 1)..n {
                let z = Complex64::new(next(), next());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        OperatorMatrix::new(m).unwrap()
    }

    #[test]
    fn diagonal_input() {
        let h = OperatorMatrix::from_real_diagonal(&[3.0, -1.0, 2.0, 0.5]);
        let e = diagonalize(&h).unwrap();
        assert_eq!(e.energies, vec![-1.0, 0.5, 2.0, 3.0]);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        let err = diagonalize(&OperatorMatrix::new(m).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NotHermitian(_)));
    }

    #[test]
    fn residuals_and_orthonormality() {
        for seed in 0..5 {
            let h = herm(12, seed);
            let e = diagonalize(&h).unwrap();
            assert!(e.max_residual(&h) <= 1e-10 * h.norm());
            assert!(e.orthonormality_defect() < 1e-10);
            assert!(e.energies.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn blocks_found() {
        let mut m = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        m[(0, 2)] = Complex64::new(1.0, 0.0);
        m[(2, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(5.0, 0.0);
        let b = connected_blocks(&m);
        assert_eq!(b, vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn half_integer_rounding() {
        assert_eq!(round_half_integer(3.49), 3.5);
        assert_eq!(round_half_integer(-3.4), -3.5);
        assert_eq!(round_half_integer(0.26), 0.5);
        // ties toward smaller magnitude
        assert_eq!(round_half_integer(0.25), 0.0);
        assert_eq!(round_half_integer(-0.75), -0.5);
    }
}
