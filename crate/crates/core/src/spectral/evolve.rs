//! Time evolution of the semi-discrete system.
//!
//! `exp(t A) v` is computed by uniformization: with `q >= max |A_rr|` and
//! `P = I + A / q` entrywise nonnegative,
//! `exp(t A) v = sum_k e^{-q t} (q t)^k / k! P^k v`,
//! a sum of nonnegative terms, so positivity and mass balance are preserved
//! up to rounding.

use super::eigen::shift;
use super::operator::{Csr, DiscreteOperator};
use crate::model::CellTrait;
use crate::{Error, Result};

/// Courant factor in the time-step restriction.
pub const CFL: f64 = 0.9;

/// Largest sampling step `CFL * dy / max(alpha_0, alpha_1)`.
pub fn max_time_step(op: &DiscreteOperator) -> f64 {
    CFL * op.grid().log_step() / op.params().max_growth_rate()
}

/// Largest `q t` handled in one uniformization block.
const MAX_BLOCK: f64 = 50.0;

fn expm_apply(m: &Csr, q: f64, t: f64, v: &[f64]) -> Vec<f64> {
    let blocks = ((q * t) / MAX_BLOCK).ceil().max(1.0) as usize;
    let h = t / blocks as f64;
    let mut cur = v.to_vec();
    for _ in 0..blocks {
        cur = expm_block(m, q, h, &cur);
    }
    cur
}

fn expm_block(m: &Csr, q: f64, h: f64, v: &[f64]) -> Vec<f64> {
    let qh = q * h;
    let dim = v.len();
    let mut term = v.to_vec();
    let mut weight = (-qh).exp();
    let mut acc: Vec<f64> = term.iter().map(|x| weight * x).collect();
    let mut cumulative = weight;
    let mut tmp = vec![0.0; dim];
    let mut k = 0usize;
    while 1.0 - cumulative > 1e-16 || (k as f64) < qh {
        k += 1;
        // term <- P term = term + (M term) / q
        m.mul_into(&term, &mut tmp);
        for (t, a) in term.iter_mut().zip(&tmp) {
            *t += a / q;
        }
        weight *= qh / k as f64;
        cumulative += weight;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
        if k > 10_000 {
            break;
        }
    }
    acc
}

/// States of an evolution sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

fn check_step(op: &DiscreteOperator, t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::Parameter(format!("t_end must be finite and nonnegative, got {t_end}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let bound = max_time_step(op);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!("time step {dt} violates the CFL bound {bound}")));
    }
    Ok((t_end / dt - 1e-9).ceil().max(0.0) as usize)
}

fn evolve(m: &Csr, q: f64, op: &DiscreteOperator, v0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    if v0.len() != op.dim() {
        return Err(Error::Parameter(format!("state has length {}, expected {}", v0.len(), op.dim())));
    }
    let steps = check_step(op, t_end, dt)?;
    let mut times = vec![0.0];
    let mut states = vec![v0.to_vec()];
    let mut t = 0.0;
    for k in 1..=steps {
        let next = (k as f64 * dt).min(t_end);
        let cur = expm_apply(m, q, next - t, states.last().unwrap());
        states.push(cur);
        times.push(next);
        t = next;
    }
    Ok(Trajectory { times, states })
}

/// Node masses `mu_t = exp(t A^T) mu_0`, the discrete growth-fragmentation
/// system, sampled every `dt` until `t_end`.
pub fn evolve_semigroup(op: &DiscreteOperator, mu0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    evolve(op.transpose(), 1.0 / shift(op), op, mu0, t_end, dt)
}

/// Observables `M_t f = exp(t A) f`, sampled every `dt` until `t_end`.
pub fn evolve_observable(op: &DiscreteOperator, f0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    evolve(op.matrix(), 1.0 / shift(op), op, f0, t_end, dt)
}

/// `M_s f` tabulated on a uniform time grid, evaluable at any trait by
/// linear interpolation in time and size.
pub struct ObservableTable<'a> {
    op: &'a DiscreteOperator,
    trajectory: Trajectory,
    dt: f64,
}

impl<'a> ObservableTable<'a> {
    /// Tabulates `M_s f` on `steps + 1` equispaced times in `[0, t_end]`,
    /// subdividing further if needed to respect the CFL bound.
    pub fn new(op: &'a DiscreteOperator, f0: &[f64], t_end: f64, steps: usize) -> Result<Self> {
        let steps = steps.max(1);
        let bound = max_time_step(op);
        let refine = ((t_end / steps as f64) / bound).ceil().max(1.0) as usize;
        let dt = t_end / (steps * refine) as f64;
        let mut trajectory = evolve_observable(op, f0, t_end, dt)?;
        if refine > 1 {
            trajectory.times = trajectory.times.into_iter().step_by(refine).collect();
            trajectory.states = trajectory.states.into_iter().step_by(refine).collect();
        }
        Ok(ObservableTable { op, trajectory, dt: t_end / steps as f64 })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// `M_s f (x, p)`.
    pub fn eval(&self, s: f64, at: CellTrait) -> f64 {
        let n = self.op.grid().len();
        let off = at.status().index() * n;
        let pos = (s / self.dt).clamp(0.0, (self.trajectory.times.len() - 1) as f64);
        let k = pos.floor() as usize;
        let w = pos - k as f64;
        let at_k = |k: usize| self.op.grid().interpolate(&self.trajectory.states[k][off..off + n], at.size());
        if w < 1e-9 || k + 1 >= self.trajectory.states.len() {
            at_k(k)
        } else if w > 1.0 - 1e-9 {
            at_k(k + 1)
        } else {
            (1.0 - w) * at_k(k) + w * at_k(k + 1)
        }
    }
}

/// L1 distance between two mass vectors after normalizing each to unit sum.
pub fn normalized_l1(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    a.iter().zip(b).map(|(x, y)| (x / sa - y / sb).abs()).sum()
}
