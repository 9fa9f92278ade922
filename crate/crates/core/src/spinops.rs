//! Angular momentum operator algebra within a fixed multiplet.
//!
//! Basis states are ordered m = +j, j−1, …, −j. Product spaces put the first
//! factor's index slowest, so |m_J, m_I⟩ sits at `row(m_J)·dim_I + row(m_I)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A (2j+1)-dimensional angular momentum multiplet.
///
/// Stored as twice the quantum number so half-integers stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AngularMomentumBasis {
    twice_j: u32,
}

impl AngularMomentumBasis {
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 0.0 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Self::from_twice(twice.round() as u32))
    }

    pub const fn from_twice(twice_j: u32) -> Self {
        Self { twice_j }
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    pub fn dimension(&self) -> usize {
        self.twice_j as usize + 1
    }

    /// Projection m of the basis state at `row`.
    pub fn m(&self, row: usize) -> f64 {
        (self.twice_j as f64 - 2.0 * row as f64) / 2.0
    }

    pub fn m_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dimension()).map(|r| self.m(r))
    }

    /// j(j+1).
    pub fn casimir(&self) -> f64 {
        let j = self.j();
        j * (j + 1.0)
    }
}

/// Square complex matrix representing an operator (dimensionless, or GHz for Hamiltonians).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix(DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::from_element(dim, dim, ZERO))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest |A_ij − conj(A_ji)|.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Hermitian to within `rel_tol` of the largest entry magnitude.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_defect() <= rel_tol * self.max_abs().max(1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// self += s·other
    pub fn add_scaled(&mut self, other: &Self, s: Complex64) {
        self.0.zip_apply(&other.0, |a, b| *a += b * s);
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.dim());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Non-zero entries as (row, col, value) triplets, for cheap repeated matrix elements.
    pub fn nonzeros(&self) -> Vec<(usize, usize, Complex64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for c in 0..n {
            for r in 0..n {
                let v = self.0[(r, c)];
                if v != ZERO {
                    out.push((r, c, v));
                }
            }
        }
        out
    }
}

/// J₊, J₋ and J_z for one multiplet.
#[derive(Debug, Clone)]
pub struct LadderSet {
    pub plus: OperatorMatrix,
    pub minus: OperatorMatrix,
    pub z: OperatorMatrix,
}

impl LadderSet {
    /// J_x = (J₊ + J₋)/2
    pub fn x(&self) -> OperatorMatrix {
        self.plus.add(&self.minus).scale(0.5)
    }

    /// J_y = (J₊ − J₋)/(2i)
    pub fn y(&self) -> OperatorMatrix {
        let mut d = self.plus.sub(&self.minus).into_matrix();
        d.apply(|z| *z *= Complex64::new(0.0, -0.5));
        OperatorMatrix(d)
    }
}

pub fn ladder_matrices(basis: AngularMomentumBasis) -> LadderSet {
    let n = basis.dimension();
    let jj = basis.casimir();
    let mut plus = DMatrix::from_element(n, n, ZERO);
    let mut z = DMatrix::from_element(n, n, ZERO);
    for col in 0..n {
        let m = basis.m(col);
        z[(col, col)] = Complex64::new(m, 0.0);
        // J+|m⟩ lands on the row above (m+1).
        if col > 0 {
            plus[(col - 1, col)] = Complex64::new((jj - m * (m + 1.0)).max(0.0).sqrt(), 0.0);
        }
    }
    let plus = OperatorMatrix(plus);
    LadderSet {
        minus: plus.adjoint(),
        plus,
        z: OperatorMatrix(z),
    }
}

/// Extended Stevens operator O_k^q for the supported (k, q) pairs.
pub fn stevens_operator(basis: AngularMomentumBasis, k: i32, q: i32) -> Result<OperatorMatrix> {
    let x = basis.casimir();
    let diag = |f: &dyn Fn(f64) -> f64| {
        let d: Vec<f64> = basis.m_values().map(f).collect();
        OperatorMatrix::from_real_diagonal(&d)
    };
    match (k, q) {
        (2, 0) => Ok(diag(&|m| 3.0 * m * m - x)),
        (4, 0) => Ok(diag(&|m| {
            let m2 = m * m;
            35.0 * m2 * m2 - (30.0 * x - 25.0) * m2 + 3.0 * x * x - 6.0 * x
        })),
        (6, 0) => Ok(diag(&|m| {
            let m2 = m * m;
            231.0 * m2 * m2 * m2 - (315.0 * x - 735.0) * m2 * m2
                + (105.0 * x * x - 525.0 * x + 294.0) * m2
                - 5.0 * x * x * x
                + 40.0 * x * x
                - 60.0 * x
        })),
        (4, 4) => {
            let l = ladder_matrices(basis);
            Ok(l.plus.pow(4).add(&l.minus.pow(4)).scale(0.5))
        }
        _ => Err(Error::UnsupportedStevens { k, q }),
    }
}

/// Kronecker product a ⊗ b; a's index varies slowest.
pub fn tensor_product(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix(a.0.kronecker(&b.0))
}
