use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::quad;
use crate::{Error, Result};

/// Smallest admissible number of size nodes.
pub const MIN_NODES: usize = 16;

/// Log-uniform size grid `x_min = x_0 < ... < x_{n-1} = x_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_step: f64,
}

/// Serializable description of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    /// Lower end; default `1e-3 * min(theta, 1 - theta) * alpha`.
    #[serde(default)]
    pub x_min: Option<f64>,
    /// Upper end; default `100 * alpha`.
    #[serde(default)]
    pub x_max: Option<f64>,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        GridSpec { n, x_min: None, x_max: None }
    }

    pub fn build(&self, params: &ModelParams) -> Result<Grid> {
        let (lo, hi) = default_domain(params);
        Grid::log_uniform(self.n, self.x_min.unwrap_or(lo), self.x_max.unwrap_or(hi))
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(512)
    }
}

/// Default truncation `[1e-3 min(theta, 1-theta) alpha, 100 alpha]`.
pub fn default_domain(params: &ModelParams) -> (f64, f64) {
    let t = params.theta().min(1.0 - params.theta());
    (1e-3 * t * params.alpha(), 100.0 * params.alpha())
}

impl Grid {
    pub fn log_uniform(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::Parameter(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        if !(x_min.is_finite() && x_min > 0.0 && x_max.is_finite() && x_max > x_min) {
            return Err(Error::Parameter(format!("need 0 < x_min < x_max, got [{x_min}, {x_max}]")));
        }
        let (a, b) = (x_min.ln(), x_max.ln());
        let log_step = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (a + log_step * i as f64).exp()).collect();
        nodes[0] = x_min;
        nodes[n - 1] = x_max;
        let weights = quad::trapezoid_weights(&nodes);
        Ok(Grid { nodes, weights, log_step })
    }

    pub fn for_params(params: &ModelParams, n: usize) -> Result<Self> {
        GridSpec::new(n).build(params)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Uniform spacing in `ln x`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Trapezoidal weights in `x`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index `j` with `x_j <= x < x_{j+1}`, clamped to `0..=n-2`.
    pub fn cell(&self, x: f64) -> usize {
        let n = self.nodes.len();
        self.nodes.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2)
    }

    /// Linear interpolation in `x` of nodal values; constant outside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return values[0];
        }
        if x >= self.nodes[n - 1] {
            return values[n - 1];
        }
        let j = self.cell(x);
        let w = (x - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        values[j] * (1.0 - w) + values[j + 1] * w
    }

    /// Number of nodes at each end regarded as boundary layer: `max(4, n/64)`.
    pub fn boundary_margin(&self) -> usize {
        (self.nodes.len() / 64).max(4)
    }

    /// Histogram edges at the geometric midpoints between nodes, so that
    /// bin `i` is centred on node `i` (end bins are half width).
    pub fn cell_edges(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut e = Vec::with_capacity(n + 1);
        e.push(self.nodes[0]);
        for i in 0..n - 1 {
            e.push((self.nodes[i] * self.nodes[i + 1]).sqrt());
        }
        e.push(self.nodes[n - 1]);
        e
    }
}
