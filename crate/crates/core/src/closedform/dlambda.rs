//! Derivative of the eigenvalue in `epsilon` at a symmetric point.
//!
//! With `U` the symmetric eigenmeasure, `m_1 = int x U` and
//! `G_B(u) = u int_u^inf exp(-(Psi(x) - Psi(u))) / x dx`,
//!
//! ```text
//! dlambda/deps = 1/(alpha m_1) int (G_B((1 - theta) z) - G_B(theta z)) B(z) U(z) dz.
//! ```
//!
//! For `B(x) = x`, `G_B` is [`crate::special::g`] and `m_1 = alpha`.

use super::series::SeriesU;
use super::transform::psi_diff;
use crate::model::{ModelParams, Status};
use crate::quad;
use crate::rate::{DivisionRate, Linear};
use crate::spectral::Grid;
use crate::special;
use crate::{Error, Result};

/// `G_B(u)` for an arbitrary rate.
pub fn g_general<R: DivisionRate + ?Sized>(u: f64, alpha: f64, rate: &R) -> Result<f64> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Domain(format!("G requires u > 0, got {u}")));
    }
    if rate.flags().identically_zero {
        return Err(Error::Parameter("G is undefined for a zero division rate".into()));
    }
    // x = u e^s
    let est = quad::semi_infinite(|s| (-psi_diff(rate, alpha, u, u * s.exp())).exp(), 0.0, 1.0, 1e-10, 1e-14)
        .map_err(|e| Error::Iteration { iterations: e.evaluations, residual: e.error })?;
    Ok(u * est.value)
}

fn g_for<R: DivisionRate + ?Sized>(u: f64, alpha: f64, rate: &R, linear: bool) -> Result<f64> {
    if linear {
        special::g(u, alpha)
    } else {
        g_general(u, alpha, rate)
    }
}

fn is_linear<R: DivisionRate + ?Sized>(rate: &R) -> bool {
    rate.describe() == Linear.describe()
}

/// Outcome of checking whether `G_B` increases on a log grid.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MonotonicityProbe {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub increasing: bool,
    /// Smallest relative increment between consecutive points.
    pub min_increment: f64,
}

/// Evaluates `G_B` at `points` log-spaced sizes in `[1e-3 alpha, 1e3 alpha]`.
pub fn g_monotonicity_probe<R: DivisionRate + ?Sized>(alpha: f64, rate: &R, points: usize) -> Result<MonotonicityProbe> {
    if points < 2 {
        return Err(Error::Parameter("the probe needs at least two points".into()));
    }
    let (lo, hi) = ((1e-3 * alpha).ln(), (1e3 * alpha).ln());
    let xs: Vec<f64> = (0..points).map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()).collect();
    let values = xs.iter().map(|&u| g_general(u, alpha, rate)).collect::<Result<Vec<_>>>()?;
    let min_increment = values
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[1].abs().max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    Ok(MonotonicityProbe { points: xs, values, increasing: min_increment > 0.0, min_increment })
}

/// `dlambda/deps` at `(alpha, 0, theta)` from nodal values of `U`, by the
/// trapezoidal rule on the grid.
pub fn dlambda_deps_integral<R: DivisionRate + ?Sized>(
    alpha: f64,
    theta: f64,
    u: &[f64],
    rate: &R,
    grid: &Grid,
) -> Result<f64> {
    let params = ModelParams::new(alpha, 0.0, theta)?;
    if u.len() != grid.len() {
        return Err(Error::Parameter(format!("U has {} values for {} nodes", u.len(), grid.len())));
    }
    let (t0, t1) = (params.fraction(Status::Old), params.fraction(Status::New));
    if t0 == t1 {
        return Ok(0.0);
    }
    let linear = is_linear(rate);
    let w = grid.weights();
    let mut num = 0.0;
    let mut m1 = 0.0;
    for ((&z, &uz), &wz) in grid.nodes().iter().zip(u).zip(w) {
        m1 += wz * z * uz;
        if uz == 0.0 {
            continue;
        }
        let diff = g_for(t1 * z, alpha, rate, linear)? - g_for(t0 * z, alpha, rate, linear)?;
        num += wz * diff * rate.rate(z) * uz;
    }
    if !(m1 > 0.0) {
        return Err(Error::Domain("U has no positive first moment".into()));
    }
    Ok(num / (alpha * m1))
}

/// `dlambda/deps` for `B(x) = x` by adaptive quadrature against the series
/// eigenmeasure.
pub fn dlambda_deps_series(series: &SeriesU) -> Result<f64> {
    let (alpha, theta) = (series.alpha(), series.theta());
    if theta == 0.5 {
        return Ok(0.0);
    }
    let integrand = |z: f64| {
        let a = special::g((1.0 - theta) * z, alpha).unwrap_or(0.0);
        let b = special::g(theta * z, alpha).unwrap_or(0.0);
        (a - b) * z
    };
    Ok(series.integrate(integrand)? / (alpha * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::PowerLaw;

    #[test]
    fn general_g_reduces_to_exponential_integral() {
        struct Opaque;
        impl DivisionRate for Opaque {
            fn rate(&self, x: f64) -> f64 {
                x
            }
        }
        for &u in &[0.01, 0.3, 1.0, 4.0, 20.0] {
            let exact = special::g(u, 1.3).unwrap();
            assert!((g_general(u, 1.3, &Linear).unwrap() - exact).abs() < 1e-8 * exact);
            assert!((g_general(u, 1.3, &Opaque).unwrap() - exact).abs() < 1e-7 * exact);
        }
    }

    #[test]
    fn sublinear_power_is_increasing() {
        let probe = g_monotonicity_probe(1.0, &PowerLaw::new(1.0, 0.5).unwrap(), 40).unwrap();
        assert!(probe.increasing);
    }

    #[test]
    fn symmetric_fraction_gives_zero() {
        let g = Grid::log_uniform(64, 1e-3, 50.0).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|x| x * (-x).exp()).collect();
        assert_eq!(dlambda_deps_integral(1.0, 0.5, &u, &Linear, &g).unwrap(), 0.0);
    }
}
