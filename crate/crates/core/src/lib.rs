//! Topology of two-band Bloch Hamiltonians `H(k) = h(k)·σ`.
//!
//! The velocity field of the upper band is a vector field on the Brillouin
//! zone manifold. Its zero modes carry Poincaré-Hopf indices that sum to the
//! Euler characteristic, while the Berry curvature integrates to the Chern
//! number.

// `!(x > tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chern;
pub mod cli;
pub mod dos;
pub mod error;
pub mod field;
pub mod mesh;
pub mod models;
pub mod zeros;

pub use error::{Error, Result};
pub use field::{Band, Part};
pub use models::{BrillouinPoint, BzDomain, ModelSpec, ParamSet};
