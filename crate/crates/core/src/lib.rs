//! Asymmetric size-structured branching process.
//!
//! Cells carry a size `x > 0` and a binary status `p`. Between divisions a
//! cell of status `p` grows exponentially at rate `alpha_p`; it divides at the
//! size-dependent rate `B(x)` into a status-0 daughter of size `theta * x` and
//! a status-1 daughter of size `(1 - theta) * x`.
//!
//! The crate computes the Malthusian growth rate of this population and its
//! associated eigenfunction and stable trait distribution three ways:
//!
//! * [`simulator`]: exact path-wise simulation and Monte-Carlo estimates,
//! * [`spectral`]: an upwind discretization of the generator and a
//!   nonnegative power iteration for the Perron eigentriple,
//! * [`closedform`]: explicit formulas available when `B(x) = x` and the two
//!   elongation rates coincide.
//!
//! [`sensitivity`] derives the partial derivatives of the growth rate from the
//! eigentriple and cross-checks them with finite differences.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closedform;
pub mod error;
pub mod fmt;
pub mod model;
pub mod quad;
pub mod rate;
pub mod sensitivity;
pub mod simulator;
pub mod special;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use model::{CellTrait, ModelParams, Status};
pub use rate::{DivisionRate, Linear, NoDivision, PowerLaw, RateFlags, RateSpec, Tabulated};
