//! Status-resolved eigenmeasure from the symmetric one.
//!
//! At `epsilon = 0` each status density solves the linear ODE
//!
//! ```text
//! alpha x g' + (2 alpha + B(x)) g = (1/theta_q) B(x/theta_q) U(x/theta_q),
//! ```
//!
//! so that, with `Phi(x) = int_1^x (B(r) + 2 alpha) / (alpha r) dr`,
//! `g(x) = e^{-Phi(x)} int_0^{x/theta_q} e^{Phi(theta_q y)} B(y) U(y) / (alpha theta_q y) dy`.

use crate::model::{ModelParams, Status};
use crate::quad;
use crate::rate::DivisionRate;
use crate::spectral::Grid;
use crate::{Error, Result};

/// `(1/alpha) int_a^b B(r)/r dr`.
pub(crate) fn psi_diff<R: DivisionRate + ?Sized>(rate: &R, alpha: f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if let (Some(la), Some(lb)) = (rate.log_integral(a), rate.log_integral(b)) {
        return (lb - la) / alpha;
    }
    // Smooth in ln r: int_{ln a}^{ln b} B(e^s) ds.
    quad::adaptive(|s| rate.rate(s.exp()), a.ln(), b.ln(), 1e-12, 1e-300).unwrap_or_else(|e| e).value / alpha
}

/// Gauss-Legendre points per grid panel.
const PANEL_POINTS: usize = 8;

/// Computes `(gamma^0, gamma^1)` on the grid from nodal values of `U`.
///
/// `U` is interpolated linearly in `x` between nodes and taken as zero
/// beyond the last node. Each density is propagated node to node with the
/// exact integrating factor, so no exponentials of large arguments are formed.
pub fn transform_u_to_gamma<R: DivisionRate + ?Sized>(
    u: &[f64],
    alpha: f64,
    theta: f64,
    rate: &R,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if u.len() != grid.len() {
        return Err(Error::Parameter(format!("U has {} values for {} nodes", u.len(), grid.len())));
    }
    if let Some(i) = u.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Domain(format!("U must be nonnegative, got {} at node {i}", u[i])));
    }
    let x_max = grid.x_max();
    let u_at = |y: f64| if y > x_max { 0.0 } else { grid.interpolate(u, y) };
    transform_with(u_at, alpha, theta, rate, grid)
}

/// As [`transform_u_to_gamma`] with `U` given as a function.
pub fn transform_with<R: DivisionRate + ?Sized, U: Fn(f64) -> f64>(
    u: U,
    alpha: f64,
    theta: f64,
    rate: &R,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let params = ModelParams::new(alpha, 0.0, theta)?;
    let (gx, gw) = quad::gauss_legendre(PANEL_POINTS);
    let x = grid.nodes();
    let n = x.len();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for q in Status::ALL {
        let tq = params.fraction(q);
        let source = |s: f64| rate.rate(s / tq) * u(s / tq) / tq;
        let g = &mut out[q.index()];
        // Below x_0 the source is taken constant and Phi ~ 2 ln x + const,
        // for which the integral from 0 evaluates to source / (2 alpha).
        g[0] = source(x[0]) / (2.0 * alpha);
        for i in 1..n {
            let (a, b) = (x[i - 1], x[i]);
            // Phi(s) - Phi(b) = -psi(s, b) + 2 ln(s / b)
            let decay = (-psi_diff(rate, alpha, a, b)).exp() * (a / b).powi(2);
            let mut panel = 0.0;
            for (t, w) in gx.iter().zip(&gw) {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let factor = (-psi_diff(rate, alpha, s, b)).exp() * (s / b).powi(2);
                panel += w * factor * source(s) / (alpha * s);
            }
            g[i] = decay * g[i - 1] + 0.5 * (b - a) * panel;
        }
    }
    let [g0, g1] = out;
    Ok((g0, g1))
}
