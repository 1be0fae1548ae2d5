//! Kernels subordinated to the heat semigroup on ℝⁿ (n ≤ 3) and on
//! hyperbolic 3-space, with the tooling to test their large-time behaviour.
//!
//! The crate is `no_std` and only needs `alloc`. IO, the command line and
//! file formats live in the `subfrac` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod convergence;
pub mod error;
pub mod hyperbolic;
pub mod manifolds;
pub mod quad;
pub mod special_fn;
pub mod subordination;

pub use error::{Error, Flagged, Result};
pub use quad::QuadratureSpec;
