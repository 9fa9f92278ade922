//! Spin-Hamiltonian spectroscopy toolkit for molecular clock-transition qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`spinops`]: angular momentum matrices, Stevens operators, tensor products.
//! - [`hamiltonian`]: crystal-field + Zeeman + hyperfine Hamiltonian, diagonalization,
//!   field sweeps and anticrossing (clock transition) search.
//! - [`spectro`]: transitions, thermal populations, rates, linewidths, dipolar
//!   bias fields and waveguide transmission maps.
//! - [`cavity`]: effective cavity linewidth and collective-coupling estimates.
//! - [`fitlab`]: damped least-squares fits of lineshapes and cavity widths.
//!
//! Energies and frequencies are in GHz throughout (energy divided by Planck's
//! constant), fields in tesla, temperatures in kelvin.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod constants;
pub mod error;
pub mod fitlab;
pub mod hamiltonian;
pub mod spectro;
pub mod spinops;

pub use error::{Error, Result};
pub use num_complex::Complex64;
