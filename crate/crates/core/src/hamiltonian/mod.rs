//! Electro-nuclear spin Hamiltonian: crystal field, Zeeman and Ising hyperfine terms.

mod anticrossing;
mod eigen;
mod sweep;

pub use anticrossing::{find_anticrossings, Anticrossing, AnticrossingOptions, CrossingKind, PairSelector};
pub use eigen::{diagonalize, EigenSolution, Eigensystem};
pub use sweep::{sweep, track_levels, LevelDiagram};
pub(crate) use sweep::validate_grid as validate_field_grid;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{CM1_TO_GHZ, MU_B_GHZ_PER_T};
use crate::spinops::{ladder_matrices, stevens_operator, tensor_product, AngularMomentumBasis, OperatorMatrix};
use crate::{Error, Result};

/// Spin quantum numbers and Hamiltonian coefficients.
///
/// Defaults are the HoW10 parameters: J = 8, I = 7/2, g_J = 5/4 and the crystal
/// field / hyperfine constants in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSystem {
    pub j: f64,
    pub i: f64,
    pub g_j: f64,
    pub b20_cm1: f64,
    pub b40_cm1: f64,
    pub b60_cm1: f64,
    pub b44_cm1: f64,
    pub a_cm1: f64,
}

impl Default for SpinSystem {
    fn default() -> Self {
        Self::how10()
    }
}

impl SpinSystem {
    pub const fn how10() -> Self {
        Self {
            j: 8.0,
            i: 3.5,
            g_j: 1.25,
            b20_cm1: 0.601,
            b40_cm1: 6.93e-3,
            b60_cm1: -5.1e-5,
            b44_cm1: 3.14e-3,
            a_cm1: 2.77e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        AngularMomentumBasis::new(self.j)?;
        AngularMomentumBasis::new(self.i)?;
        let coeffs = [
            ("g_j", self.g_j),
            ("b20_cm1", self.b20_cm1),
            ("b40_cm1", self.b40_cm1),
            ("b60_cm1", self.b60_cm1),
            ("b44_cm1", self.b44_cm1),
            ("a_cm1", self.a_cm1),
        ];
        for (name, v) in coeffs {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn electronic_basis(&self) -> Result<AngularMomentumBasis> {
        AngularMomentumBasis::new(self.j)
    }

    pub fn nuclear_basis(&self) -> Result<AngularMomentumBasis> {
        AngularMomentumBasis::new(self.i)
    }

    pub fn dimension(&self) -> Result<usize> {
        Ok(self.electronic_basis()?.dimension() * self.nuclear_basis()?.dimension())
    }

    /// g_J·μ_B/h in GHz/T.
    pub fn zeeman_ghz_per_t(&self) -> f64 {
        self.g_j * MU_B_GHZ_PER_T
    }

    pub fn hyperfine_ghz(&self) -> f64 {
        self.a_cm1 * CM1_TO_GHZ
    }

    /// Field along the anisotropy axis at which the levels with electronic
    /// projections ±m_J and nuclear projection `m_i` cross in the Ising limit.
    pub fn ising_crossing_field(&self, m_i: f64) -> f64 {
        -self.hyperfine_ghz() * m_i / self.zeeman_ghz_per_t()
    }

    /// Zero-field splitting of the two lowest crystal-field levels, hyperfine term removed.
    pub fn tunneling_gap(&self) -> Result<f64> {
        let electronic = Self { i: 0.0, a_cm1: 0.0, ..*self };
        let builder = HamiltonianBuilder::new(&electronic)?;
        let eig = diagonalize(&builder.build_cartesian([0.0; 3]))?;
        if eig.energies.len() < 2 {
            return Err(Error::InvalidParameter("tunneling gap needs j > 0".into()));
        }
        Ok(eig.energies[1] - eig.energies[0])
    }

    /// sqrt⟨J_z²⟩ of the zero-field electronic ground state: |m_J| of the ground doublet
    /// when it is a ±m_J tunneling pair.
    pub fn ground_projection(&self) -> Result<f64> {
        let electronic = Self { i: 0.0, a_cm1: 0.0, ..*self };
        let basis = electronic.electronic_basis()?;
        let builder = HamiltonianBuilder::new(&electronic)?;
        let eig = diagonalize(&builder.build_cartesian([0.0; 3]))?;
        let jz2: f64 = eig
            .vectors
            .column(0)
            .iter()
            .enumerate()
            .map(|(r, z)| z.norm_sqr() * basis.m(r).powi(2))
            .sum();
        Ok(jz2.sqrt())
    }
}

/// Direction of the applied field relative to the anisotropy axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Direction {
    /// Polar angle from z, radians.
    pub theta: f64,
    /// Azimuth, radians.
    pub phi: f64,
}

impl Direction {
    pub const Z: Direction = Direction { theta: 0.0, phi: 0.0 };

    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn unit(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Cartesian field for a signed amplitude along this direction.
    pub fn at(&self, amplitude_t: f64) -> [f64; 3] {
        self.unit().map(|u| u * amplitude_t)
    }
}

/// Applied field in spherical form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub magnitude_t: f64,
    pub theta: f64,
    pub phi: f64,
}

impl FieldVector {
    pub fn new(magnitude_t: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(magnitude_t >= 0.0) || !magnitude_t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "field magnitude must be finite and non-negative, got {magnitude_t}"
            )));
        }
        Ok(Self { magnitude_t, theta, phi })
    }

    pub fn along_z(magnitude_t: f64) -> Self {
        Self { magnitude_t, theta: 0.0, phi: 0.0 }
    }

    pub fn direction(&self) -> Direction {
        Direction::new(self.theta, self.phi)
    }

    pub fn cartesian(&self) -> [f64; 3] {
        self.direction().at(self.magnitude_t)
    }
}

/// Precomputed operator pieces so repeated field evaluations only do three axpys.
#[derive(Debug, Clone)]
pub struct HamiltonianBuilder {
    system: SpinSystem,
    electronic: AngularMomentumBasis,
    nuclear: AngularMomentumBasis,
    field_free: OperatorMatrix,
    zeeman: [OperatorMatrix; 3],
    jz: OperatorMatrix,
    iz: OperatorMatrix,
    jx: OperatorMatrix,
}

impl HamiltonianBuilder {
    pub fn new(system: &SpinSystem) -> Result<Self> {
        system.validate()?;
        let electronic = system.electronic_basis()?;
        let nuclear = system.nuclear_basis()?;
        let nid = OperatorMatrix::identity(nuclear.dimension());
        let lj = ladder_matrices(electronic);
        let li = ladder_matrices(nuclear);

        let mut cf = OperatorMatrix::zeros(electronic.dimension());
        for (k, q, b) in [
            (2, 0, system.b20_cm1),
            (4, 0, system.b40_cm1),
            (6, 0, system.b60_cm1),
            (4, 4, system.b44_cm1),
        ] {
            if b != 0.0 {
                let o = stevens_operator(electronic, k, q)?;
                cf.add_scaled(&o, Complex64::new(b * CM1_TO_GHZ, 0.0));
            }
        }
        let mut field_free = tensor_product(&cf, &nid);
        let jz = tensor_product(&lj.z, &nid);
        let iz = tensor_product(&OperatorMatrix::identity(electronic.dimension()), &li.z);
        let hf = tensor_product(&lj.z, &li.z);
        field_free.add_scaled(&hf, Complex64::new(system.hyperfine_ghz(), 0.0));

        let gz = system.zeeman_ghz_per_t();
        let jx = tensor_product(&lj.x(), &nid);
        let zeeman = [
            jx.scale(gz),
            tensor_product(&lj.y(), &nid).scale(gz),
            jz.scale(gz),
        ];
        Ok(Self {
            system: *system,
            electronic,
            nuclear,
            field_free,
            zeeman,
            jz,
            iz,
            jx,
        })
    }

    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn dimension(&self) -> usize {
        self.field_free.dim()
    }

    pub fn electronic_basis(&self) -> AngularMomentumBasis {
        self.electronic
    }

    pub fn nuclear_basis(&self) -> AngularMomentumBasis {
        self.nuclear
    }

    /// J_z ⊗ 1
    pub fn jz(&self) -> &OperatorMatrix {
        &self.jz
    }

    /// 1 ⊗ I_z
    pub fn iz(&self) -> &OperatorMatrix {
        &self.iz
    }

    /// J_x ⊗ 1
    pub fn jx(&self) -> &OperatorMatrix {
        &self.jx
    }

    pub fn build(&self, field: &FieldVector) -> OperatorMatrix {
        self.build_cartesian(field.cartesian())
    }

    pub fn build_cartesian(&self, h: [f64; 3]) -> OperatorMatrix {
        let mut out = self.field_free.clone();
        for (op, &hc) in self.zeeman.iter().zip(h.iter()) {
            if hc != 0.0 {
                out.add_scaled(op, Complex64::new(hc, 0.0));
            }
        }
        out
    }

    /// Diagonalize at a Cartesian field and attach ⟨J_z⟩/⟨I_z⟩ labels.
    pub fn solve_cartesian(&self, h: [f64; 3]) -> Result<EigenSolution> {
        let eig = diagonalize(&self.build_cartesian(h))?;
        Ok(EigenSolution::from_eigensystem(eig, h, &self.jz, &self.iz))
    }

    pub fn solve(&self, field: &FieldVector) -> Result<EigenSolution> {
        self.solve_cartesian(field.cartesian())
    }
}

/// Full Hamiltonian (GHz) at one applied field.
pub fn build_hamiltonian(system: &SpinSystem, field: &FieldVector) -> Result<OperatorMatrix> {
    Ok(HamiltonianBuilder::new(system)?.build(field))
}
