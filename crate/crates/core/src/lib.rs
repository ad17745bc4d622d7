//! Spectral toolkit for the fractional Schrödinger operator
//! `(−Δ)^{σ/2} + V` with a honeycomb potential.

// Index loops mirror the tensor notation; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod dirac;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod potential;

pub use error::{Error, Result};
pub use lattice::{LatticeBasis, PlaneWaveBasis, Vec2};
pub use potential::{FourierPotential, Modulation};
