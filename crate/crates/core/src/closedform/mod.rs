//! Explicit results for the symmetric point `epsilon = 0` with `B(x) = x`:
//! moment recursions, the random-product series for the eigenmeasure, its
//! split by status and the derivative of the eigenvalue in `epsilon`.

mod dlambda;
mod moments;
mod series;
mod transform;

pub use dlambda::{dlambda_deps_integral, dlambda_deps_series, g_general, g_monotonicity_probe, MonotonicityProbe};
pub use moments::{log_moments, moments, published_log_moments, published_log_step, MomentTable};
pub use series::{path_sum, series_u, PathMode, SeriesConfig, SeriesU, MAX_ENUMERATE_DEPTH, MC_EXACT_DEPTH};
pub use transform::{transform_u_to_gamma, transform_with};
pub use crate::special::{g as g_eval, g_prime};
