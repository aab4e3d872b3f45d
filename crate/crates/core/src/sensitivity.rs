//! Derivatives of the Perron eigenvalue in `(alpha, epsilon, theta)`.
//!
//! With the eigentriple normalized by `gamma(h) = 1`:
//!
//! ```text
//! dlambda/dalpha = int x d_x h dgamma
//! dlambda/deps   = int (2p - 1) x d_x h dgamma
//! dlambda/dtheta = int B(x) x [d_x h(theta x, 0) - d_x h((1 - theta) x, 1)] dgamma
//! ```
//!
//! Each is checked against a central difference of the spectral eigenvalue
//! on a fixed grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, Status};
use crate::rate::DivisionRate;
use crate::spectral::{self, EigenOptions, EigenTriple, Grid};
use crate::{Error, Result};

/// Nodes excluded at each end of the grid when integrating against `gamma`.
const MARGIN: usize = 2;

/// A coordinate of the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Alpha,
    #[serde(rename = "eps")]
    Epsilon,
    Theta,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Alpha, Direction::Epsilon, Direction::Theta];

    /// Scale that multiplies the relative finite-difference step.
    pub fn scale(self, at: &ModelParams) -> f64 {
        match self {
            Direction::Alpha | Direction::Epsilon => at.alpha(),
            Direction::Theta => 1.0,
        }
    }

    fn perturb(self, at: &ModelParams, delta: f64) -> Result<ModelParams> {
        match self {
            Direction::Alpha => at.with_alpha(at.alpha() + delta),
            Direction::Epsilon => at.with_epsilon(at.epsilon() + delta),
            Direction::Theta => at.with_theta(at.theta() + delta),
        }
    }
}

/// The three partial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub dl_dalpha: f64,
    pub dl_deps: f64,
    pub dl_dtheta: f64,
}

impl Gradient {
    pub fn get(&self, d: Direction) -> f64 {
        match d {
            Direction::Alpha => self.dl_dalpha,
            Direction::Epsilon => self.dl_deps,
            Direction::Theta => self.dl_dtheta,
        }
    }
}

/// `d v / d ln x` on a log-uniform grid: fourth-order central in the
/// interior, second-order at the two outermost nodes on each side.
pub fn log_derivative(v: &[f64], dy: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    if n < 5 {
        return d;
    }
    for i in 2..n - 2 {
        d[i] = (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * dy);
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dy);
    d[1] = (v[2] - v[0]) / (2.0 * dy);
    d[n - 2] = (v[n - 1] - v[n - 3]) / (2.0 * dy);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dy);
    d
}

/// Evaluates the three derivative formulas on a solved eigentriple.
pub fn dlambda_formulas<R: DivisionRate + ?Sized>(eig: &EigenTriple, params: &ModelParams, rate: &R) -> Result<Gradient> {
    let grid = &eig.grid;
    let n = grid.len();
    if n < 2 * MARGIN + 5 {
        return Err(Error::InvalidEigendata(format!("grid of {n} nodes is too small")));
    }
    for p in Status::ALL {
        if let Some(i) = eig.h_status(p)[MARGIN..n - MARGIN].iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidEigendata(format!("h is not positive at node ({}, {})", i + MARGIN, p.index())));
        }
    }
    let dy = grid.log_step();
    // x d_x h = d h / d ln x
    let xdh = [log_derivative(eig.h_status(Status::Old), dy), log_derivative(eig.h_status(Status::New), dy)];
    // d_x h at an arbitrary size, held constant outside the grid.
    let dh_at = |p: Status, x: f64| {
        let xc = x.clamp(grid.x_min(), grid.x_max());
        grid.interpolate(&xdh[p.index()], xc) / xc
    };
    let (t0, t1) = (params.fraction(Status::Old), params.fraction(Status::New));
    let w = grid.weights();
    let mut out = Gradient::default();
    for p in Status::ALL {
        let g = eig.gamma_status(p);
        let xdh_p = &xdh[p.index()];
        for i in MARGIN..n - MARGIN {
            let x = grid.x(i);
            let mass = g[i] * w[i];
            out.dl_dalpha += xdh_p[i] * mass;
            out.dl_deps += p.sign() * xdh_p[i] * mass;
            out.dl_dtheta += rate.rate(x) * x * (dh_at(Status::Old, t0 * x) - dh_at(Status::New, t1 * x)) * mass;
        }
    }
    Ok(out)
}

/// Central difference `(lambda(u + s e) - lambda(u - s e)) / (2 s)` on a
/// fixed grid.
pub fn dlambda_finite_diff<R: DivisionRate + ?Sized>(
    params: &ModelParams,
    rate: &R,
    grid: &Grid,
    direction: Direction,
    step: f64,
    opts: &EigenOptions,
) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {step}")));
    }
    let plus = direction.perturb(params, step)?;
    let minus = direction.perturb(params, -step)?;
    let (lp, lm) = rayon::join(
        || spectral::lambda(grid, &plus, rate, opts),
        || spectral::lambda(grid, &minus, rate, opts),
    );
    Ok((lp? - lm?) / (2.0 * step))
}

/// Discrepancy between a formula value and its finite-difference check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub absolute: f64,
    /// `absolute / max(|formula|, |fd|)`, zero when both vanish.
    pub relative: f64,
}

impl Agreement {
    pub fn new(formula: f64, fd: f64) -> Self {
        let absolute = (formula - fd).abs();
        let scale = formula.abs().max(fd.abs());
        let relative = if scale > 0.0 { absolute / scale } else { 0.0 };
        Agreement { absolute, relative }
    }

    /// Passes if within `rel` relative or `abs` absolute.
    pub fn within(&self, rel: f64, abs: f64) -> bool {
        self.relative <= rel || self.absolute <= abs
    }
}

/// Formula and finite-difference derivatives at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub at: ModelParams,
    pub lambda: f64,
    pub dl_dalpha: f64,
    pub dl_deps: f64,
    pub dl_dtheta: f64,
    pub fd_dalpha: f64,
    pub fd_deps: f64,
    pub fd_dtheta: f64,
    /// Relative step; the absolute step is this times [`Direction::scale`].
    pub fd_step: f64,
    pub agreement: [Agreement; 3],
}

/// Relative finite-difference step used when none is given.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

impl SensitivityReport {
    pub fn formulas(&self) -> Gradient {
        Gradient { dl_dalpha: self.dl_dalpha, dl_deps: self.dl_deps, dl_dtheta: self.dl_dtheta }
    }

    pub fn finite_differences(&self) -> Gradient {
        Gradient { dl_dalpha: self.fd_dalpha, dl_deps: self.fd_deps, dl_dtheta: self.fd_dtheta }
    }

    /// True if every direction agrees within `rel` relative or `abs` absolute.
    pub fn agrees(&self, rel: f64, abs: f64) -> bool {
        self.agreement.iter().all(|a| a.within(rel, abs))
    }
}

/// Solves the eigenproblem at `params`, evaluates the formulas and the
/// three finite differences (in parallel) with relative step `fd_step`.
pub fn sensitivity_report<R: DivisionRate + ?Sized>(
    params: &ModelParams,
    rate: &R,
    grid: &Grid,
    fd_step: f64,
    opts: &EigenOptions,
) -> Result<SensitivityReport> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::Parameter(format!("fd_step must be positive, got {fd_step}")));
    }
    let (eig, fd) = rayon::join(
        || spectral::eigentriple(grid, params, rate, opts),
        || {
            Direction::ALL
                .par_iter()
                .map(|&d| dlambda_finite_diff(params, rate, grid, d, fd_step * d.scale(params), opts))
                .collect::<Result<Vec<f64>>>()
        },
    );
    let eig = eig?;
    let fd = fd?;
    let f = dlambda_formulas(&eig, params, rate)?;
    let agreement = [
        Agreement::new(f.dl_dalpha, fd[0]),
        Agreement::new(f.dl_deps, fd[1]),
        Agreement::new(f.dl_dtheta, fd[2]),
    ];
    Ok(SensitivityReport {
        at: *params,
        lambda: eig.lambda,
        dl_dalpha: f.dl_dalpha,
        dl_deps: f.dl_deps,
        dl_dtheta: f.dl_dtheta,
        fd_dalpha: fd[0],
        fd_deps: fd[1],
        fd_dtheta: fd[2],
        fd_step,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_derivative_is_exact_on_quadratics_in_log() {
        let dy = 0.1;
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * dy).powi(2)).collect();
        let d = log_derivative(&v, dy);
        for (i, di) in d.iter().enumerate() {
            assert!((di - 2.0 * i as f64 * dy).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn agreement_of_zeros_is_zero() {
        assert_eq!(Agreement::new(0.0, 0.0).relative, 0.0);
        assert!(Agreement::new(1e-5, -1e-5).within(0.05, 1e-3));
    }
}
