//! Constrained molecular dynamics with a quadratic latent energy, and its
//! extended-Lagrangian (XLMD) relaxation.
//!
//! The physical system couples atomic coordinates `r` to a latent vector `x`
//! through the interaction energy `Q(r, x) = ½ xᵀA(r)x − b(r)ᵀx` with `A(r)`
//! symmetric positive definite. Exact dynamics keeps `x` on the constraint
//! manifold `A(r)x = b(r)` (one linear solve per force evaluation); the XLMD
//! relaxation instead gives `x` a small fictitious mass `eps` and propagates
//! `eps·ẍ = b(r) − A(r)x` alongside the atoms, trading the solve for fast
//! latent oscillations that shadow the constrained solution as `eps → 0`.
//!
//! Module map:
//! - [`linalg`]: dense Cholesky, symmetric eigendecomposition, SPD square root;
//! - [`model`]: the coupled-system interface plus the built-in test systems;
//! - [`dynamics`]: velocity-Verlet propagation of both formulations;
//! - [`analysis`]: convergence studies in `eps`, latent-residual diagnostics,
//!   energy drift, and the oscillatory homogeneous flow map.

// Negated comparisons like `!(x > 0.0)` are deliberate throughout: they
// treat NaN as out-of-domain alongside the sign violation. Index loops are
// kept in the dense matrix kernels where the indices carry meaning.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod fmt;
pub mod linalg;
pub mod model;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
