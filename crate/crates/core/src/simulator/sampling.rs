//! Waiting times until division.

use rand::Rng;

use crate::model::{CellTrait, ModelParams};
use crate::rate::DivisionRate;

/// Number of interior sample points used to bound a non-monotone rate on a
/// thinning window.
const BOUND_SAMPLES: usize = 64;

/// Windows scanned without an accepted event before the waiting time is
/// declared infinite.
const MAX_WINDOWS: usize = 1_000_000;

fn standard_exponential<G: Rng + ?Sized>(rng: &mut G) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    -(1.0 - rng.gen::<f64>()).ln()
}

/// Draws the time to division of a cell with trait `at`, whose survival
/// function is `exp(-H(x, alpha_p, s))`.
///
/// Uses the closed-form inverse hazard when the rate provides one and
/// [`thinning_division_time`] otherwise. Returns `+inf` when the cell never
/// divides.
pub fn sample_division_time<R, G>(at: CellTrait, params: &ModelParams, rate: &R, window: f64, rng: &mut G) -> f64
where
    R: DivisionRate + ?Sized,
    G: Rng + ?Sized,
{
    if rate.flags().identically_zero {
        return f64::INFINITY;
    }
    let a = params.growth_rate(at.status());
    let e = standard_exponential(rng);
    match rate.inverse_hazard(at.size(), a, e) {
        Some(s) if !s.is_nan() => s.max(0.0),
        _ => thinning_from(at.size(), a, rate, window, rng),
    }
}

/// Thinning sampler that ignores any closed-form inverse.
///
/// Time is cut into windows `[k w, (k+1) w]`; on each window the rate along
/// the growing size `x e^{a r}` is dominated by its value at the right end
/// when `B` is nondecreasing and by the maximum over a sample of the window
/// otherwise. Candidate events are proposed at the dominating rate and
/// accepted with probability `B / bound`.
pub fn thinning_division_time<R, G>(at: CellTrait, params: &ModelParams, rate: &R, window: f64, rng: &mut G) -> f64
where
    R: DivisionRate + ?Sized,
    G: Rng + ?Sized,
{
    if rate.flags().identically_zero {
        return f64::INFINITY;
    }
    thinning_from(at.size(), params.growth_rate(at.status()), rate, window, rng)
}

fn thinning_from<R, G>(x: f64, a: f64, rate: &R, window: f64, rng: &mut G) -> f64
where
    R: DivisionRate + ?Sized,
    G: Rng + ?Sized,
{
    let monotone = rate.flags().nondecreasing;
    let size = |r: f64| x * (a * r).exp();
    for k in 0..MAX_WINDOWS {
        let lo = k as f64 * window;
        let hi = lo + window;
        if !size(hi).is_finite() {
            return f64::INFINITY;
        }
        let bound = if monotone {
            rate.rate(size(hi))
        } else {
            (0..=BOUND_SAMPLES)
                .map(|j| rate.rate(size(lo + window * j as f64 / BOUND_SAMPLES as f64)))
                .fold(0.0, f64::max)
        };
        if !(bound > 0.0) {
            continue;
        }
        let mut t = lo;
        loop {
            t += standard_exponential(rng) / bound;
            if t > hi {
                break;
            }
            if rng.gen::<f64>() * bound <= rate.rate(size(t)) {
                return t;
            }
        }
    }
    f64::INFINITY
}

/// Default thinning window `0.1 / alpha`.
pub fn default_window(params: &ModelParams) -> f64 {
    0.1 / params.alpha()
}
