//! Matrix discretization of the generator.

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::model::{ModelParams, Status};
use crate::rate::DivisionRate;
use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds a square matrix from per-row `(column, value)` lists; duplicate
    /// columns within a row are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                debug_assert!(c < dim);
                if indices.len() > *indptr.last().unwrap() && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { dim, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|e| e.0 == c).map(|e| e.1).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    /// `y = M x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut rows = vec![Vec::new(); self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Csr::from_rows(rows)
    }
}

/// Interpolation used for the values at the daughter sizes `theta_q x_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Two-point linear interpolation in `x`.
    #[default]
    Linear,
    /// Four-point Lagrange interpolation in `x` with negative weights clipped
    /// to zero and the remainder renormalized.
    Cubic,
}

impl Interpolation {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            1 => Ok(Interpolation::Linear),
            3 => Ok(Interpolation::Cubic),
            o => Err(Error::Parameter(format!("interpolation order must be 1 or 3, got {o}"))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Interpolation::Linear => 1,
            Interpolation::Cubic => 3,
        }
    }
}

/// One-sided difference used for the transport term `alpha_p x f'(x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// `alpha_p x_i (f_{i+1} - f_i) / (x_{i+1} - x_i)`: exact on affine
    /// functions of `x`, so `f = x` is reproduced to rounding.
    #[default]
    UpwindX,
    /// `alpha_p (f_{i+1} - f_i) / dy` with `y = ln x`: exact on affine
    /// functions of `ln x`.
    UpwindLog,
}

/// The generator discretized on `grid x {0, 1}`.
///
/// Unknowns are stacked as `(f(x_0,0), ..., f(x_{n-1},0), f(x_0,1), ...)`.
/// The top node carries no transport term, so no mass leaves through the
/// upper boundary; daughter sizes below `x_min` are assigned to the first node.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    matrix: Csr,
    transpose: Csr,
    grid: Grid,
    params: ModelParams,
    interpolation: Interpolation,
    transport: Transport,
    division: Vec<f64>,
    /// Jump mass per row sent to the first node from below `x_min`.
    below: Vec<f64>,
    rate_flags: crate::rate::RateFlags,
}

impl DiscreteOperator {
    pub fn index(&self, i: usize, p: Status) -> usize {
        p.index() * self.grid.len() + i
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn transpose(&self) -> &Csr {
        &self.transpose
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    pub fn rate_flags(&self) -> crate::rate::RateFlags {
        self.rate_flags
    }

    /// `B(x_i)` stacked over both statuses.
    pub fn division_rates(&self) -> &[f64] {
        &self.division
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `A f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.mul(f)
    }

    /// `A^T mu`, the evolution of node masses.
    pub fn apply_adjoint(&self, mu: &[f64]) -> Vec<f64> {
        self.transpose.mul(mu)
    }

    /// Largest `|A_rr|`.
    pub fn max_abs_diagonal(&self) -> f64 {
        self.matrix.diagonal().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Stacks `f(x_i, p)` over the grid.
    pub fn sample<F: Fn(f64, Status) -> f64>(&self, f: F) -> Vec<f64> {
        Status::ALL
            .iter()
            .flat_map(|&p| self.grid.nodes().iter().map(move |&x| (x, p)))
            .map(|(x, p)| f(x, p))
            .collect()
    }

    /// Share of the jump mass produced under node masses `mu` that falls
    /// below `x_min` and is folded back onto the first node.
    pub fn leakage(&self, mu: &[f64]) -> f64 {
        let lost: f64 = mu.iter().zip(&self.below).map(|(m, b)| m * b).sum();
        let total: f64 = mu.iter().zip(&self.division).map(|(m, b)| 2.0 * m * b).sum();
        if total > 0.0 {
            lost / total
        } else {
            0.0
        }
    }
}

fn stencil(grid: &Grid, t: f64, interp: Interpolation) -> Vec<(usize, f64)> {
    let n = grid.len();
    let j = grid.cell(t);
    let x = grid.nodes();
    match interp {
        Interpolation::Linear => {
            let w = (t - x[j]) / (x[j + 1] - x[j]);
            vec![(j, 1.0 - w), (j + 1, w)]
        }
        Interpolation::Cubic => {
            let start = j.saturating_sub(1).min(n - 4);
            let idx: Vec<usize> = (start..start + 4).collect();
            let mut w: Vec<f64> = idx
                .iter()
                .map(|&k| {
                    idx.iter().filter(|&&m| m != k).fold(1.0, |acc, &m| acc * (t - x[m]) / (x[k] - x[m]))
                })
                .map(|v| v.max(0.0))
                .collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            idx.into_iter().zip(w).collect()
        }
    }
}

/// Assembles the discrete generator.
pub fn assemble_operator<R: DivisionRate + ?Sized>(
    grid: &Grid,
    params: &ModelParams,
    rate: &R,
    interpolation: Interpolation,
    transport: Transport,
) -> Result<DiscreteOperator> {
    let n = grid.len();
    if n < super::grid::MIN_NODES {
        return Err(Error::Parameter(format!("grid too coarse: {n} nodes")));
    }
    let x = grid.nodes();
    let mut rows = Vec::with_capacity(2 * n);
    let mut division = Vec::with_capacity(2 * n);
    let mut below = Vec::with_capacity(2 * n);
    for p in Status::ALL {
        let a = params.growth_rate(p);
        for i in 0..n {
            let r = p.index() * n + i;
            let mut row = Vec::with_capacity(8);
            if i + 1 < n {
                let c = match transport {
                    Transport::UpwindX => a * x[i] / (x[i + 1] - x[i]),
                    Transport::UpwindLog => a / grid.log_step(),
                };
                row.push((r + 1, c));
                row.push((r, -c));
            }
            let b = rate.rate(x[i]);
            let mut lost = 0.0;
            if b > 0.0 {
                row.push((r, -b));
                for q in Status::ALL {
                    let t = params.fraction(q) * x[i];
                    let base = q.index() * n;
                    if t <= x[0] {
                        row.push((base, b));
                        if t < x[0] {
                            lost += b;
                        }
                    } else {
                        for (k, w) in stencil(grid, t, interpolation) {
                            if w != 0.0 {
                                row.push((base + k, b * w));
                            }
                        }
                    }
                }
            }
            rows.push(row);
            division.push(b);
            below.push(lost);
        }
    }
    let matrix = Csr::from_rows(rows);
    let transpose = matrix.transpose();
    Ok(DiscreteOperator {
        matrix,
        transpose,
        grid: grid.clone(),
        params: *params,
        interpolation,
        transport,
        division,
        below,
        rate_flags: rate.flags(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{Linear, NoDivision};

    fn op(eps: f64, theta: f64, interp: Interpolation) -> DiscreteOperator {
        let p = ModelParams::new(1.0, eps, theta).unwrap();
        let g = Grid::for_params(&p, 128).unwrap();
        assemble_operator(&g, &p, &Linear, interp, Transport::UpwindX).unwrap()
    }

    #[test]
    fn constant_maps_to_rate() {
        for interp in [Interpolation::Linear, Interpolation::Cubic] {
            let a = op(0.2, 0.7, interp);
            let one = vec![1.0; a.dim()];
            let v = a.apply(&one);
            for (r, (&av, &b)) in v.iter().zip(a.division_rates()).enumerate() {
                assert!((av - b).abs() <= 1e-12 * b.max(1.0), "row {r}: {av} vs {b}");
            }
        }
    }

    #[test]
    fn identity_is_eigenvector_in_the_interior() {
        let a = op(0.0, 0.3, Interpolation::Linear);
        let f = a.sample(|x, _| x);
        let v = a.apply(&f);
        let n = a.grid().len();
        let x0 = a.grid().x_min();
        for p in 0..2 {
            for i in (0..n - 1).filter(|&i| 0.3 * a.grid().x(i) > x0) {
                let r = p * n + i;
                assert!((v[r] - f[r]).abs() <= 1e-10 * f[r], "row {r}");
            }
        }
    }

    #[test]
    fn off_diagonal_is_nonnegative() {
        let a = op(0.3, 0.6, Interpolation::Cubic);
        for r in 0..a.dim() {
            for (c, v) in a.matrix().row(r) {
                if c != r {
                    assert!(v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn log_upwind_transports_log() {
        let p = ModelParams::new(1.0, 0.25, 0.5).unwrap();
        let g = Grid::for_params(&p, 64).unwrap();
        let a = assemble_operator(&g, &p, &NoDivision, Interpolation::Linear, Transport::UpwindLog).unwrap();
        let f = a.sample(|x, _| x.ln());
        let v = a.apply(&f);
        for i in 0..63 {
            assert!((v[i] - 0.75).abs() < 1e-10);
            assert!((v[64 + i] - 1.25).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let a = op(0.1, 0.7, Interpolation::Linear);
        assert_eq!(a.transpose().transpose(), *a.matrix());
        assert!(Interpolation::from_order(2).is_err());
    }
}
