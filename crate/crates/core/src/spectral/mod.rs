//! Discretized generator, Perron eigentriple and semigroup evolution.
//!
//! Sizes live on a log-uniform grid; the transport term is an upwind
//! difference and the division terms interpolate the values at the daughter
//! sizes. The resulting matrix has nonnegative off-diagonal entries, so
//! `I + tau A` is nonnegative for small `tau` and plain power iteration
//! converges to the Perron root.

mod eigen;
mod evolve;
mod export;
mod grid;
mod operator;

pub use eigen::{
    density_to_masses, masses_to_density, principal_left_eigen, principal_left_masses, principal_right_eigen,
    shift, solve, EigenDiagnostics, EigenOptions, EigenTriple,
};
pub use evolve::{
    evolve_observable, evolve_semigroup, max_time_step, normalized_l1, ObservableTable, Trajectory, CFL,
};
pub use export::{write_eigen_csv, EigenMetadata, GridSummary};
pub use grid::{default_domain, Grid, GridSpec, MIN_NODES};
pub use operator::{assemble_operator, Csr, DiscreteOperator, Interpolation, Transport};

use crate::model::ModelParams;
use crate::rate::DivisionRate;
use crate::Result;

/// Assembles the default operator (linear interpolation, upwind in `x`) on
/// `grid` and solves for the eigentriple.
pub fn eigentriple<R: DivisionRate + ?Sized>(
    grid: &Grid,
    params: &ModelParams,
    rate: &R,
    opts: &EigenOptions,
) -> Result<EigenTriple> {
    let op = assemble_operator(grid, params, rate, Interpolation::Linear, Transport::UpwindX)?;
    solve(&op, opts)
}

/// Principal eigenvalue only.
pub fn lambda<R: DivisionRate + ?Sized>(grid: &Grid, params: &ModelParams, rate: &R, opts: &EigenOptions) -> Result<f64> {
    let op = assemble_operator(grid, params, rate, Interpolation::Linear, Transport::UpwindX)?;
    Ok(principal_right_eigen(&op, opts)?.0)
}
