//! Random-product series for the symmetric eigenmeasure with `B(x) = x`.
//!
//! ```text
//! U(x) = K / (alpha x^2) * sum_{n >= 0} E[ prod_{k=1..n} (1 - 1/Q_k)^{-1} * (1/Q_n) * exp(-x / (alpha Q_n)) ]
//! ```
//!
//! with `Q_k = Theta_1 ... Theta_k`, `Theta` i.i.d. equal to `theta` with
//! probability `theta` and to `1 - theta` otherwise. The factor
//! `(1/Q_n) exp(-x/(alpha Q_n))` is applied once per path, outside the
//! product; at `theta = 1/2` this gives the classical symmetric-division
//! eigenmeasure `sum_n prod_{k<=n} (1 - 2^k)^{-1} 2^n exp(-2^n x / alpha)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quad;
use crate::{Error, Result};

/// How the expectation over paths is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Exact sum over all `2^n` paths. Since the weight of a path depends
    /// only on how many times `theta` was drawn at each depth, paths are
    /// aggregated by that count, giving the same sum in `O(n^2)` terms.
    #[default]
    Enumerate,
    /// Average over sampled paths for depths beyond [`MC_EXACT_DEPTH`].
    MonteCarlo,
}

/// Depth limit for [`PathMode::Enumerate`]: `2^n_max <= 2^22` paths.
pub const MAX_ENUMERATE_DEPTH: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    #[serde(default = "default_depth")]
    pub n_max: usize,
    #[serde(default)]
    pub path_mode: PathMode,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Warn when the estimated truncation tail exceeds this, relative to the
    /// value of the series.
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

fn default_depth() -> usize {
    18
}

fn default_samples() -> usize {
    100_000
}

fn default_tail_tol() -> f64 {
    1e-10
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            n_max: default_depth(),
            path_mode: PathMode::Enumerate,
            mc_samples: default_samples(),
            seed: 0,
            tail_tol: default_tail_tol(),
        }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Parameter("series depth n_max must be at least 1".into()));
        }
        if self.path_mode == PathMode::Enumerate && self.n_max > MAX_ENUMERATE_DEPTH {
            return Err(Error::Parameter(format!(
                "enumerating 2^{} paths exceeds the limit 2^{MAX_ENUMERATE_DEPTH}",
                self.n_max
            )));
        }
        if self.path_mode == PathMode::MonteCarlo && self.mc_samples == 0 {
            return Err(Error::Parameter("mc_samples must be positive".into()));
        }
        Ok(())
    }
}

/// One aggregated term `coef * (1/q) * exp(-x / (alpha q))` at depth `depth`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    depth: usize,
    coef: f64,
    q: f64,
}

/// Path-aggregated coefficients for depths `0..=depth`.
///
/// `C[n][a]` sums the probability-weighted products over all paths of length
/// `n` with `a` draws of `theta`, all of which end at `Q = theta^a (1-theta)^(n-a)`.
fn lattice_terms(theta: f64, depth: usize) -> Vec<Term> {
    let q_of = |n: usize, a: usize| theta.powi(a as i32) * (1.0 - theta).powi((n - a) as i32);
    let mut level = vec![1.0];
    let mut out = vec![Term { depth: 0, coef: 1.0, q: 1.0 }];
    for n in 1..=depth {
        let mut next = vec![0.0; n + 1];
        for (a, &c) in level.iter().enumerate() {
            for (aa, pr) in [(a + 1, theta), (a, 1.0 - theta)] {
                let q = q_of(n, aa);
                next[aa] += c * pr / (1.0 - 1.0 / q);
            }
        }
        for (a, &c) in next.iter().enumerate() {
            out.push(Term { depth: n, coef: c, q: q_of(n, a) });
        }
        level = next;
    }
    out
}

/// Depths summed exactly in [`PathMode::MonteCarlo`]. Near `x = 0` the
/// series cancels to many digits, so sampling noise in the shallow terms,
/// divided by `x^2`, would swamp the normalization.
pub const MC_EXACT_DEPTH: usize = 10;

/// Lattice coefficients with depths above [`MC_EXACT_DEPTH`] estimated from
/// sampled paths, each accumulated into the `(depth, theta-count)` cell it
/// ends in.
fn sampled_terms(theta: f64, depth: usize, samples: usize, seed: u64) -> Vec<Term> {
    let exact = MC_EXACT_DEPTH.min(depth);
    let mut out = lattice_terms(theta, exact);
    if depth == exact {
        return out;
    }
    let q_of = |n: usize, a: usize| theta.powi(a as i32) * (1.0 - theta).powi((n - a) as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / samples as f64;
    let mut cells: Vec<Vec<f64>> = (0..=depth).map(|n| vec![0.0; n + 1]).collect();
    for _ in 0..samples {
        let mut a = 0;
        let mut prod = 1.0;
        for (n, row) in cells.iter_mut().enumerate().skip(1) {
            if rng.gen::<f64>() < theta {
                a += 1;
            }
            prod /= 1.0 - 1.0 / q_of(n, a);
            if n > exact {
                row[a] += prod * w;
            }
        }
    }
    out.extend(
        cells
            .into_iter()
            .enumerate()
            .skip(exact + 1)
            .flat_map(|(n, row)| row.into_iter().enumerate().map(move |(a, coef)| (n, a, coef)))
            .map(|(n, a, coef)| Term { depth: n, coef, q: q_of(n, a) }),
    );
    out
}

/// Literal sum over all `2^n` paths of the depth-`n` term at `x`, without
/// aggregation. Exponential cost; intended as a check of the lattice sum.
pub fn path_sum(x: f64, alpha: f64, theta: f64, n: usize) -> f64 {
    let mut total = 0.0;
    for mask in 0u64..(1u64 << n) {
        let mut q = 1.0;
        let mut prob = 1.0;
        let mut prod = 1.0;
        for k in 0..n {
            let t = if mask >> k & 1 == 1 { theta } else { 1.0 - theta };
            q *= t;
            prob *= t;
            prod /= 1.0 - 1.0 / q;
        }
        total += prob * prod / q * (-x / (alpha * q)).exp();
    }
    total
}

/// Truncated series with its normalizing constant.
#[derive(Clone, Debug)]
pub struct SeriesU {
    alpha: f64,
    theta: f64,
    cfg: SeriesConfig,
    terms: Vec<Term>,
    /// Terms of the next few depths, used for the tail estimate.
    tail_terms: Vec<Term>,
    norm: f64,
}

/// Extra depths summed in absolute value to estimate the truncation tail.
const TAIL_DEPTHS: usize = 8;

/// Lower and upper ends of the normalization integral, in units of alpha.
const X_LO: f64 = 1e-7;
const X_HI: f64 = 80.0;

impl SeriesU {
    pub fn new(alpha: f64, theta: f64, cfg: SeriesConfig) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Domain(format!("theta must lie strictly between 0 and 1, got {theta}")));
        }
        cfg.validate()?;
        let (terms, tail_terms) = match cfg.path_mode {
            PathMode::Enumerate => {
                let all = lattice_terms(theta, cfg.n_max + TAIL_DEPTHS);
                all.into_iter().partition(|t| t.depth <= cfg.n_max)
            }
            PathMode::MonteCarlo => {
                let tail = lattice_terms(theta, cfg.n_max + TAIL_DEPTHS)
                    .into_iter()
                    .filter(|t| t.depth > cfg.n_max)
                    .collect();
                (sampled_terms(theta, cfg.n_max, cfg.mc_samples, cfg.seed), tail)
            }
        };
        let mut s = SeriesU { alpha, theta, cfg, terms, tail_terms, norm: 1.0 };
        let z = s.integrate_raw(|_| 1.0)?;
        if !(z > 0.0) {
            return Err(Error::EstimationFailed(format!("series normalization is not positive: {z}")));
        }
        s.norm = 1.0 / z;
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn config(&self) -> &SeriesConfig {
        &self.cfg
    }

    /// The normalizing constant `K`.
    pub fn k(&self) -> f64 {
        self.norm
    }

    /// `sum_n E[...]` at `x`, without the prefactor. Values below the
    /// rounding level of the alternating sum are returned as 0.
    pub fn path_series(&self, x: f64) -> f64 {
        let mut s = 0.0;
        let mut mag = 0.0;
        for t in &self.terms {
            let v = t.coef / t.q * (-x / (self.alpha * t.q)).exp();
            s += v;
            mag += v.abs();
        }
        if s.abs() <= 64.0 * f64::EPSILON * mag {
            0.0
        } else {
            s
        }
    }

    /// Partial sum of depth `n` only.
    pub fn depth_term(&self, x: f64, n: usize) -> f64 {
        self.terms
            .iter()
            .chain(&self.tail_terms)
            .filter(|t| t.depth == n)
            .map(|t| t.coef / t.q * (-x / (self.alpha * t.q)).exp())
            .sum()
    }

    /// Estimated truncation error of [`Self::path_series`] at `x`: the sum of
    /// absolute values of the next few depths.
    pub fn tail_bound(&self, x: f64) -> f64 {
        self.tail_terms.iter().map(|t| (t.coef / t.q * (-x / (self.alpha * t.q)).exp()).abs()).sum()
    }

    /// Unnormalized density `U(x) / K`.
    pub fn unnormalized(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.path_series(x) / (self.alpha * x * x)
    }

    /// Normalized density `U(x)`, logging a warning if the tail estimate
    /// exceeds the configured tolerance.
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let s = self.path_series(x);
        let tail = self.tail_bound(x);
        if tail > self.cfg.tail_tol * s.abs().max(f64::MIN_POSITIVE) && s != 0.0 {
            log::warn!("series tail {tail:e} at x = {x} exceeds tolerance relative to {s:e}");
        }
        self.norm * s / (self.alpha * x * x)
    }

    /// `U(x)` with the tail estimate, `(value, bound)`.
    pub fn density_with_tail(&self, x: f64) -> (f64, f64) {
        let pre = self.norm / (self.alpha * x * x);
        (pre * self.path_series(x), pre * self.tail_bound(x))
    }

    fn integrate_raw<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let a = self.alpha;
        let lo = X_LO * a;
        let hi = X_HI * a;
        let pieces = 48;
        let r = (hi / lo).powf(1.0 / pieces as f64);
        let mut total = 0.0;
        let mut left = lo;
        for _ in 0..pieces {
            let right = left * r;
            let est = quad::adaptive_with_limit(|x| f(x) * self.unnormalized(x), left, right, 1e-12, 1e-15, 200)
                .unwrap_or_else(|e| e);
            total += est.value;
            left = right;
        }
        Ok(total)
    }

    /// `int f(x) U(x) dx` by adaptive quadrature.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        Ok(self.norm * self.integrate_raw(f)?)
    }

    /// `int x^p U`.
    pub fn moment(&self, p: i32) -> Result<f64> {
        self.integrate(|x| x.powi(p))
    }

    /// `int x^p ln(x) U`.
    pub fn log_moment(&self, p: i32) -> Result<f64> {
        self.integrate(|x| x.powi(p) * x.ln())
    }

    /// Evaluates `U` at every node.
    pub fn on_nodes(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.norm * self.unnormalized(x)).collect()
    }
}

/// Convenience wrapper: normalized `U(x)` for a single point with a fresh series.
pub fn series_u(x: f64, alpha: f64, theta: f64, cfg: &SeriesConfig) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("series evaluated at non-positive x = {x}")));
    }
    Ok(SeriesU::new(alpha, theta, *cfg)?.density(x))
}
