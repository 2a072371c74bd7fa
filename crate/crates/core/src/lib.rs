//! Numerical laboratory for Weyl-law remainders of Schrödinger operators
//! `-Δ + V` with singular radial potentials on flat tori.

pub mod analysis;
pub mod bessel;
pub mod bump;
pub mod diagnostics;
pub mod error;
pub mod lattice;
pub mod potential;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
