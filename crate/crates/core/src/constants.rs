//! Unit conversions. Energies are expressed as frequencies (E/h) in GHz.

/// Physical constants used for unit conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// GHz per cm⁻¹ (c in cm/ns).
    pub cm1_to_ghz: f64,
    /// μ_B/h in GHz/T.
    pub bohr_magneton_over_h: f64,
    /// k_B/h in GHz/K.
    pub boltzmann_over_h: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    cm1_to_ghz: 29.979_245_8,
    bohr_magneton_over_h: 13.996_24,
    boltzmann_over_h: 20.836_619_12,
};

pub const CM1_TO_GHZ: f64 = CONSTANTS.cm1_to_ghz;
pub const MU_B_GHZ_PER_T: f64 = CONSTANTS.bohr_magneton_over_h;
pub const K_B_GHZ_PER_K: f64 = CONSTANTS.boltzmann_over_h;

/// μ0/4π in T·m/A.
pub const MU0_OVER_4PI: f64 = 1.0e-7;
/// Bohr magneton in J/T.
pub const BOHR_MAGNETON_J_PER_T: f64 = 9.274_010_078_3e-24;

/// Thermal energy k_B·T in GHz.
#[inline]
pub fn thermal_ghz(temperature_k: f64) -> f64 {
    K_B_GHZ_PER_K * temperature_k
}
