//! Model parameters, traits and the generator of the mean semigroup.

use serde::{Deserialize, Serialize};

use crate::quad;
use crate::rate::DivisionRate;
use crate::{Error, Result};

/// Division status of a cell. Status 0 is the old-pole daughter by
/// convention; nothing in the dynamics depends on the label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Status {
    Old = 0,
    New = 1,
}

impl Status {
    pub const ALL: [Status; 2] = [Status::Old, Status::New];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Status::Old),
            1 => Some(Status::New),
            _ => None,
        }
    }

    /// `2p - 1`: -1 for status 0, +1 for status 1.
    pub fn sign(self) -> f64 {
        match self {
            Status::Old => -1.0,
            Status::New => 1.0,
        }
    }
}

impl From<Status> for u8 {
    fn from(s: Status) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for Status {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Status::from_index(v as usize).ok_or_else(|| format!("status must be 0 or 1, got {v}"))
    }
}

/// The parameter point `(alpha, epsilon, theta)`.
///
/// Elongation rates are `alpha_0 = alpha - epsilon` and
/// `alpha_1 = alpha + epsilon`; the status-0 daughter inherits the fraction
/// `theta_0 = theta` of its mother's size and the status-1 daughter the rest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    alpha: f64,
    epsilon: f64,
    theta0: f64,
    theta1: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    alpha: f64,
    epsilon: f64,
    theta: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.alpha, raw.epsilon, raw.theta)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { alpha: p.alpha, epsilon: p.epsilon, theta: p.theta0 }
    }
}

impl ModelParams {
    /// Validates `alpha > 0`, `|epsilon| < alpha` and `0 < theta < 1`.
    ///
    /// The two size fractions are stored so that `theta_0 + theta_1 == 1.0`
    /// holds exactly in floating point: the larger fraction is the complement
    /// of the smaller one, which makes the subtraction exact. For
    /// `theta < 1/2` this can move `theta_0` by one ulp.
    pub fn new(alpha: f64, epsilon: f64, theta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(epsilon.is_finite() && epsilon.abs() < alpha) {
            return Err(Error::Parameter(format!(
                "need |epsilon| < alpha, got epsilon = {epsilon}, alpha = {alpha}"
            )));
        }
        if !(theta.is_finite() && theta > 0.0 && theta < 1.0) {
            return Err(Error::Parameter(format!("theta must lie in (0, 1), got {theta}")));
        }
        let (theta0, theta1) = if theta >= 0.5 {
            (theta, 1.0 - theta)
        } else {
            let theta1 = 1.0 - theta;
            (1.0 - theta1, theta1)
        };
        Ok(ModelParams { alpha, epsilon, theta0, theta1 })
    }

    /// Builds the parameters from the two elongation rates.
    pub fn from_rates(alpha0: f64, alpha1: f64, theta: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha1 > 0.0) {
            return Err(Error::Parameter(format!(
                "elongation rates must be positive, got ({alpha0}, {alpha1})"
            )));
        }
        ModelParams::new(0.5 * (alpha0 + alpha1), 0.5 * (alpha1 - alpha0), theta)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta0
    }

    /// `alpha_p`.
    pub fn growth_rate(&self, status: Status) -> f64 {
        self.alpha + status.sign() * self.epsilon
    }

    /// `theta_p`, the size fraction inherited by the daughter of status `p`.
    pub fn fraction(&self, status: Status) -> f64 {
        match status {
            Status::Old => self.theta0,
            Status::New => self.theta1,
        }
    }

    pub fn max_growth_rate(&self) -> f64 {
        self.alpha + self.epsilon.abs()
    }

    pub fn min_growth_rate(&self) -> f64 {
        self.alpha - self.epsilon.abs()
    }

    pub fn is_symmetric_growth(&self) -> bool {
        self.epsilon == 0.0
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        ModelParams::new(alpha, self.epsilon, self.theta0)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ModelParams::new(self.alpha, epsilon, self.theta0)
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        ModelParams::new(self.alpha, self.epsilon, theta)
    }
}

/// Size and status of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTrait {
    size: f64,
    status: Status,
}

impl CellTrait {
    pub fn new(size: f64, status: Status) -> Result<Self> {
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::Domain(format!("cell size must be positive and finite, got {size}")));
        }
        Ok(CellTrait { size, status })
    }

    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn status(&self) -> Status {
        self.status
    }
}

/// Applies the generator to `f` at one trait:
///
/// `A f(x, p) = alpha_p x f'(x, p) + B(x) (f(theta_0 x, 0) + f(theta_1 x, 1) - f(x, p))`.
///
/// `df_dx` is the size derivative of `f`, supplied by the caller.
pub fn generator_apply<F, D, R>(f: F, df_dx: D, at: CellTrait, params: &ModelParams, rate: &R) -> f64
where
    F: Fn(f64, Status) -> f64,
    D: Fn(f64, Status) -> f64,
    R: DivisionRate + ?Sized,
{
    let (x, p) = (at.size, at.status);
    let transport = params.growth_rate(p) * x * df_dx(x, p);
    let b = rate.rate(x);
    if b == 0.0 {
        return transport;
    }
    let jump = f(params.fraction(Status::Old) * x, Status::Old)
        + f(params.fraction(Status::New) * x, Status::New)
        - f(x, p);
    transport + b * jump
}

/// Cumulative hazard `H(x, a, s) = int_0^s B(x e^{a r}) dr`, analytic when
/// the rate provides it and by adaptive quadrature otherwise.
pub fn cumulative_hazard<R: DivisionRate + ?Sized>(rate: &R, x: f64, growth: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if let Some(h) = rate.cumulative_hazard(x, growth, s) {
        return h;
    }
    if rate.flags().identically_zero {
        return 0.0;
    }
    quad::adaptive(|r| rate.rate(x * (growth * r).exp()), 0.0, s, 1e-12, 0.0)
        .map(|q| q.value)
        .unwrap_or_else(|e| e.value)
}

/// Absolute discrepancy of the variation-of-constants identity
///
/// ```text
/// M_t f(x,p) = f(x e^{a t}, p) S(t)
///            + int_0^t S(s) B(x e^{a s}) [M_{t-s} f(theta_0 x e^{a s}, 0) + M_{t-s} f(theta_1 x e^{a s}, 1)] ds
/// ```
///
/// where `a = alpha_p` and `S(s) = exp(-H(x, a, s))`. `semigroup(s, trait)`
/// must return `M_s f` at the given trait. The time integral uses composite
/// Simpson on `quadrature_n` equispaced nodes when `quadrature_n` is odd and
/// the trapezoidal rule otherwise.
pub fn duhamel_residual<M, F, R>(
    semigroup: M,
    f: F,
    at: CellTrait,
    t: f64,
    params: &ModelParams,
    rate: &R,
    quadrature_n: usize,
) -> Result<f64>
where
    M: Fn(f64, CellTrait) -> f64,
    F: Fn(f64, Status) -> f64,
    R: DivisionRate + ?Sized,
{
    if quadrature_n < 2 {
        return Err(Error::Parameter(format!("quadrature_n must be at least 2, got {quadrature_n}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Parameter(format!("time must be finite and nonnegative, got {t}")));
    }
    let (x, p) = (at.size, at.status);
    let a = params.growth_rate(p);
    let lhs = semigroup(t, at);
    let survival = |s: f64| (-cumulative_hazard(rate, x, a, s)).exp();

    let mut rhs = f(x * (a * t).exp(), p) * survival(t);
    if t > 0.0 {
        let weights = quad::equispaced_weights(quadrature_n, t / (quadrature_n - 1) as f64);
        for (k, w) in weights.iter().enumerate() {
            let s = t * k as f64 / (quadrature_n - 1) as f64;
            let y = x * (a * s).exp();
            let b = rate.rate(y);
            if b == 0.0 {
                continue;
            }
            let rest = t - s;
            let d0 = CellTrait::new(params.fraction(Status::Old) * y, Status::Old)?;
            let d1 = CellTrait::new(params.fraction(Status::New) * y, Status::New)?;
            rhs += w * survival(s) * b * (semigroup(rest, d0) + semigroup(rest, d1));
        }
    }
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{Linear, NoDivision};

    fn lin() -> Linear {
        Linear
    }

    #[test]
    fn derived_rates_and_fractions() {
        let p = ModelParams::new(1.2, 0.2, 0.7).unwrap();
        assert!((p.growth_rate(Status::Old) - 1.0).abs() < 1e-15);
        assert!((p.growth_rate(Status::New) - 1.4).abs() < 1e-15);
        assert_eq!(p.fraction(Status::Old) + p.fraction(Status::New), 1.0);
        let q = ModelParams::from_rates(1.0, 1.4, 0.7).unwrap();
        assert!((q.alpha() - 1.2).abs() < 1e-15 && (q.epsilon() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_inadmissible_points() {
        assert!(ModelParams::new(0.0, 0.0, 0.5).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(1.0, -1.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0).is_err());
        assert!(CellTrait::new(0.0, Status::Old).is_err());
        assert!(CellTrait::new(-1.0, Status::New).is_err());
    }

    #[test]
    fn params_serde_uses_theta() {
        let p: ModelParams = serde_json_like("{\"alpha\":1.0,\"epsilon\":0.1,\"theta\":0.3}");
        assert_eq!(p.theta(), ModelParams::new(1.0, 0.1, 0.3).unwrap().theta());
    }

    // Minimal JSON reader for the one test above; the core crate does not
    // depend on serde_json.
    fn serde_json_like(s: &str) -> ModelParams {
        let nums: Vec<f64> = s
            .trim_matches(|c| c == '{' || c == '}')
            .split(',')
            .map(|kv| kv.split(':').nth(1).unwrap().parse().unwrap())
            .collect();
        RawParams { alpha: nums[0], epsilon: nums[1], theta: nums[2] }.try_into().unwrap()
    }

    #[test]
    fn generator_on_identity_is_alpha_x_when_symmetric() {
        let p = ModelParams::new(1.3, 0.0, 0.7).unwrap();
        for &x in &[0.01, 0.5, 1.0, 7.0] {
            for s in Status::ALL {
                let at = CellTrait::new(x, s).unwrap();
                let v = generator_apply(|y, _| y, |_, _| 1.0, at, &p, &lin());
                assert!((v - 1.3 * x).abs() <= 1e-14 * x, "{v} vs {}", 1.3 * x);
            }
        }
    }

    #[test]
    fn generator_on_constant_is_division_rate() {
        let p = ModelParams::new(1.0, 0.3, 0.25).unwrap();
        let at = CellTrait::new(2.5, Status::New).unwrap();
        let v = generator_apply(|_, _| 1.0, |_, _| 0.0, at, &p, &lin());
        assert_eq!(v, 2.5);
    }

    #[test]
    fn generator_on_square() {
        // theta_0^2 + theta_1^2 - 1 = -0.5 at theta = 1/2
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        for &x in &[0.3, 1.0, 4.0] {
            let at = CellTrait::new(x, Status::Old).unwrap();
            let v = generator_apply(|y, _| y * y, |y, _| 2.0 * y, at, &p, &lin());
            let expect = 2.0 * x * x - 0.5 * x * x * x;
            assert!((v - expect).abs() < 1e-13 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn duhamel_without_division_is_exact() {
        let p = ModelParams::new(1.0, 0.2, 0.6).unwrap();
        let at = CellTrait::new(1.0, Status::Old).unwrap();
        let r = duhamel_residual(|_, _| 1.0, |_, _| 1.0, at, 2.0, &p, &NoDivision, 5).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn duhamel_at_time_zero_is_exact() {
        let p = ModelParams::new(1.0, 0.2, 0.6).unwrap();
        let at = CellTrait::new(1.5, Status::New).unwrap();
        let r = duhamel_residual(|_, c| c.size(), |y, _| y, at, 0.0, &p, &lin(), 11).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn duhamel_holds_for_exact_symmetric_semigroup() {
        // With epsilon = 0 and f(x,p) = x, M_t f = e^{alpha t} x exactly.
        let p = ModelParams::new(1.0, 0.0, 0.7).unwrap();
        let at = CellTrait::new(1.0, Status::Old).unwrap();
        let m = |s: f64, c: CellTrait| (s).exp() * c.size();
        let r = duhamel_residual(m, |y, _| y, at, 0.5, &p, &lin(), 201).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn duhamel_rejects_small_quadrature() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let at = CellTrait::new(1.0, Status::Old).unwrap();
        assert!(matches!(
            duhamel_residual(|_, _| 1.0, |_, _| 1.0, at, 1.0, &p, &lin(), 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn numerical_hazard_matches_analytic() {
        struct Opaque;
        impl DivisionRate for Opaque {
            fn rate(&self, x: f64) -> f64 {
                x
            }
        }
        for &(x, a, s) in &[(0.3f64, 0.8f64, 1.2f64), (2.0, 1.4, 0.1), (1.0, 1.0, 3.0)] {
            let exact: f64 = x * ((a * s).exp() - 1.0) / a;
            let num = cumulative_hazard(&Opaque, x, a, s);
            assert!(((num - exact) / exact).abs() < 1e-10);
        }
    }
}
