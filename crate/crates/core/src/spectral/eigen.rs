//! Perron eigentriple by nonnegative power iteration.

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::{Csr, DiscreteOperator};
use crate::model::Status;
use crate::{Error, Result};

/// Iteration controls for the eigensolver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    /// Target for both `|lambda_k - lambda_{k-1}|` and the scaled residual
    /// `|A v - lambda v|_1 / |v|_1`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-11
}

fn default_max_iter() -> usize {
    500_000
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: default_tol(), max_iter: default_max_iter() }
    }
}

/// Shift `tau` making `I + tau A` entrywise nonnegative.
pub fn shift(op: &DiscreteOperator) -> f64 {
    0.9 / op.max_abs_diagonal()
}

/// How often the residual is evaluated.
const CHECK_EVERY: usize = 16;

struct PowerResult {
    lambda: f64,
    vector: Vec<f64>,
    iterations: usize,
    residual: f64,
}

/// Power iteration for the dominant eigenpair of `m` through `I + tau m`,
/// keeping `sum(v) = 1`.
fn power_iterate(m: &Csr, tau: f64, start: Vec<f64>, opts: &EigenOptions) -> Result<PowerResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let dim = m.dim();
    let mut v = start;
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    let mut av = vec![0.0; dim];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        m.mul_into(&v, &mut av);
        // sum(v) = 1, so sum(A v) is the Rayleigh-type estimate.
        let est: f64 = av.iter().sum();
        let change = (est - lambda).abs();
        lambda = est;
        if it % CHECK_EVERY == 0 || it == opts.max_iter {
            residual = av.iter().zip(&v).map(|(a, x)| (a - lambda * x).abs()).sum();
            if residual < opts.tol && change < opts.tol {
                return Ok(PowerResult { lambda, vector: v, iterations: it, residual });
            }
        }
        let mut total = 0.0;
        for (x, a) in v.iter_mut().zip(&av) {
            *x += tau * a;
            total += *x;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Iteration { iterations: it, residual: f64::NAN });
        }
        v.iter_mut().for_each(|x| *x /= total);
    }
    Err(Error::Iteration { iterations: opts.max_iter, residual })
}

/// Dominant eigenvalue and right eigenvector `h` (normalized to unit sum).
pub fn principal_right_eigen(op: &DiscreteOperator, opts: &EigenOptions) -> Result<(f64, Vec<f64>, usize, f64)> {
    let start = op.sample(|x, _| x);
    let r = power_iterate(op.matrix(), shift(op), start, opts)?;
    Ok((r.lambda, r.vector, r.iterations, r.residual))
}

/// Left eigenvector as node masses `nu` with unit sum, together with its
/// eigenvalue estimate.
pub fn principal_left_masses(op: &DiscreteOperator, opts: &EigenOptions) -> Result<(f64, Vec<f64>, usize, f64)> {
    let start = op.sample(|x, _| x * (-x).exp()).iter().zip(weights2(op.grid())).map(|(a, w)| a * w).collect();
    let r = power_iterate(op.transpose(), shift(op), start, opts)?;
    Ok((r.lambda, r.vector, r.iterations, r.residual))
}

/// Left eigenvector as a density `gamma` with respect to the trapezoidal
/// weights, normalized so that `sum(gamma * w) = 1`.
///
/// Fails if the left eigenvalue disagrees with `lambda` by more than
/// `100 * tol`.
pub fn principal_left_eigen(op: &DiscreteOperator, lambda: f64, opts: &EigenOptions) -> Result<Vec<f64>> {
    let (mu, nu, it, res) = principal_left_masses(op, opts)?;
    if (mu - lambda).abs() > 100.0 * opts.tol.max(1e-12) * lambda.abs().max(1.0) {
        return Err(Error::InvalidEigendata(format!(
            "left eigenvalue {mu} does not match right eigenvalue {lambda} (after {it} iterations, residual {res:e})"
        )));
    }
    Ok(masses_to_density(op.grid(), &nu))
}

fn weights2(grid: &Grid) -> Vec<f64> {
    grid.weights().iter().chain(grid.weights()).copied().collect()
}

/// Node masses to densities.
pub fn masses_to_density(grid: &Grid, nu: &[f64]) -> Vec<f64> {
    nu.iter().zip(weights2(grid)).map(|(m, w)| m / w).collect()
}

/// Densities to node masses.
pub fn density_to_masses(grid: &Grid, gamma: &[f64]) -> Vec<f64> {
    gamma.iter().zip(weights2(grid)).map(|(g, w)| g * w).collect()
}

/// Convergence and boundary diagnostics of an eigen-solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenDiagnostics {
    pub right_iterations: usize,
    pub left_iterations: usize,
    pub right_residual: f64,
    pub left_residual: f64,
    pub lambda_left: f64,
    pub shift: f64,
    /// Share of the jump mass falling below `x_min` under `gamma`.
    pub leakage: f64,
    /// `gamma` mass in the top `boundary_margin` nodes.
    pub upper_tail_mass: f64,
    pub warnings: Vec<String>,
}

/// `(lambda, h, gamma)` on `grid x {0, 1}` with `gamma(1) = gamma(h) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenTriple {
    pub lambda: f64,
    /// Right eigenvector, stacked by status.
    pub h: Vec<f64>,
    /// Left eigenvector as a density for the trapezoidal weights.
    pub gamma: Vec<f64>,
    pub grid: Grid,
    pub diagnostics: EigenDiagnostics,
}

impl EigenTriple {
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn h_status(&self, p: Status) -> &[f64] {
        let n = self.n();
        &self.h[p.index() * n..(p.index() + 1) * n]
    }

    pub fn gamma_status(&self, p: Status) -> &[f64] {
        let n = self.n();
        &self.gamma[p.index() * n..(p.index() + 1) * n]
    }

    /// Node masses `gamma_i w_i`.
    pub fn masses(&self) -> Vec<f64> {
        density_to_masses(&self.grid, &self.gamma)
    }

    /// `int f dgamma` by the trapezoidal rule.
    pub fn integrate<F: Fn(f64, Status) -> f64>(&self, f: F) -> f64 {
        let n = self.n();
        let w = self.grid.weights();
        let mut s = 0.0;
        for p in Status::ALL {
            let g = self.gamma_status(p);
            for i in 0..n {
                s += f(self.grid.x(i), p) * g[i] * w[i];
            }
        }
        s
    }

    /// Size moment `int x^k d(gamma^0 + gamma^1)`.
    pub fn moment(&self, k: i32) -> f64 {
        self.integrate(|x, _| x.powi(k))
    }

    /// `int x^k dgamma^p` for one status.
    pub fn status_moment(&self, k: i32, status: Status) -> f64 {
        self.integrate(|x, p| if p == status { x.powi(k) } else { 0.0 })
    }

    /// Total density `gamma^0 + gamma^1` at each node.
    pub fn total_density(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| self.gamma[i] + self.gamma[n + i]).collect()
    }

    /// Largest relative deviation of `h / x` from its mean over interior
    /// nodes (both statuses), excluding `boundary_margin` nodes at each end.
    pub fn linear_h_deviation(&self) -> f64 {
        let n = self.n();
        let m = self.grid.boundary_margin();
        let ratios: Vec<f64> = Status::ALL
            .iter()
            .flat_map(|&p| (m..n - m).map(move |i| (p, i)))
            .map(|(p, i)| self.h_status(p)[i] / self.grid.x(i))
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        ratios.iter().fold(0.0, |d, r| d.max((r / mean - 1.0).abs()))
    }
}

/// Computes the eigentriple.
///
/// Refuses rates that are identically zero, since no stable profile exists.
/// At `epsilon = 0` the triple is still computed, with a warning that the
/// exponential convergence of the semigroup toward it is not guaranteed.
pub fn solve(op: &DiscreteOperator, opts: &EigenOptions) -> Result<EigenTriple> {
    if op.rate_flags().identically_zero || op.division_rates().iter().all(|&b| b == 0.0) {
        log::warn!("division rate vanishes identically; no Perron eigentriple to certify");
        return Err(Error::Parameter(
            "division rate vanishes identically: no stable trait distribution exists".into(),
        ));
    }
    let mut warnings = Vec::new();
    if !op.rate_flags().limits_hold() {
        warnings.push("division rate does not satisfy the small/large-cell limit conditions".to_string());
    }
    if op.params().is_symmetric_growth() {
        warnings.push(
            "epsilon = 0: eigenelements exist but exponential convergence of the semigroup is not guaranteed"
                .to_string(),
        );
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (lambda, mut h, right_iterations, right_residual) = principal_right_eigen(op, opts)?;
    let (lambda_left, nu, left_iterations, left_residual) = principal_left_masses(op, opts)?;
    if (lambda_left - lambda).abs() > 100.0 * opts.tol.max(1e-12) * lambda.abs().max(1.0) {
        return Err(Error::InvalidEigendata(format!(
            "left eigenvalue {lambda_left} does not match right eigenvalue {lambda}"
        )));
    }
    let grid = op.grid().clone();
    let gamma = masses_to_density(&grid, &nu);
    let gh: f64 = nu.iter().zip(&h).map(|(m, v)| m * v).sum();
    if !(gh > 0.0) {
        return Err(Error::InvalidEigendata("gamma(h) is not positive".into()));
    }
    h.iter_mut().for_each(|v| *v /= gh);

    let n = grid.len();
    let m = grid.boundary_margin();
    for p in 0..2 {
        for i in m..n - m {
            let r = p * n + i;
            if !(h[r] > 0.0 && gamma[r] > 0.0) {
                return Err(Error::InvalidEigendata(format!("eigenvector not positive at node ({i}, {p})")));
            }
        }
    }
    let upper_tail_mass = (0..2).flat_map(|p| (n - m..n).map(move |i| p * n + i)).map(|r| nu[r]).sum();
    let diagnostics = EigenDiagnostics {
        right_iterations,
        left_iterations,
        right_residual,
        left_residual,
        lambda_left,
        shift: shift(op),
        leakage: op.leakage(&nu),
        upper_tail_mass,
        warnings,
    };
    Ok(EigenTriple { lambda, h, gamma, grid, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::rate::{Linear, NoDivision};
    use crate::spectral::{assemble_operator, Interpolation, Transport};

    fn triple(eps: f64, theta: f64, n: usize) -> EigenTriple {
        let p = ModelParams::new(1.0, eps, theta).unwrap();
        let g = Grid::for_params(&p, n).unwrap();
        let op = assemble_operator(&g, &p, &Linear, Interpolation::Linear, Transport::UpwindX).unwrap();
        solve(&op, &EigenOptions::default()).unwrap()
    }

    #[test]
    fn normalizations_hold() {
        let t = triple(0.2, 0.7, 128);
        assert!((t.moment(0) - 1.0).abs() < 1e-12);
        let gh: f64 = t.masses().iter().zip(&t.h).map(|(m, h)| m * h).sum();
        assert!((gh - 1.0).abs() < 1e-12);
        assert!(t.lambda > 1.0 - 0.2 && t.lambda < 1.2);
    }

    #[test]
    fn symmetric_point_gives_alpha() {
        let t = triple(0.0, 0.7, 128);
        assert!((t.lambda - 1.0).abs() < 1e-9, "{}", t.lambda);
        assert!(t.linear_h_deviation() < 1e-2);
        assert!(!t.diagnostics.warnings.is_empty());
    }

    #[test]
    fn zero_rate_is_refused() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let g = Grid::for_params(&p, 32).unwrap();
        let op = assemble_operator(&g, &p, &NoDivision, Interpolation::Linear, Transport::UpwindX).unwrap();
        assert!(matches!(solve(&op, &EigenOptions::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let p = ModelParams::new(1.0, 0.2, 0.7).unwrap();
        let g = Grid::for_params(&p, 64).unwrap();
        let op = assemble_operator(&g, &p, &Linear, Interpolation::Linear, Transport::UpwindX).unwrap();
        let opts = EigenOptions { tol: 1e-12, max_iter: 5 };
        assert!(matches!(principal_right_eigen(&op, &opts), Err(Error::Iteration { iterations: 5, .. })));
    }
}
