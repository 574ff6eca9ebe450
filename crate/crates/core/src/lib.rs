//! Macroscopic QED numerics for lossy, dispersive, inhomogeneous dielectrics.
//!
//! The crate computes retarded dyadic Green tensors of voxelized scenes
//! (optionally embedded in a concentric absorbing shell), the noise-current
//! and photon-mode spectral densities built from them, and the observables
//! that follow: local density of states, spontaneous emission rates and the
//! thermal Casimir force on a body.
//!
//! Conventions: `D = E + P`, all constants (`hbar`, `c`, `k_B`) default to 1
//! and are carried in [`units::Units`]. Material tensors store `eps - 1`
//! directly; no `2*pi` susceptibility factors appear anywhere.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod fluctuations;
pub mod greens;
pub mod linalg;
pub mod material;
pub mod modes;
pub mod observables;
pub mod oracle;
pub mod polariton;
pub mod scene;
pub mod special;
pub mod units;

pub use error::{Error, Result};
pub use linalg::{CVec3, Dyad, Vec3, C64};
