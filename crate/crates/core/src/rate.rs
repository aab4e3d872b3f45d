//! Size-dependent division rates.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Qualitative properties of a division rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateFlags {
    pub continuous: bool,
    /// `B(x) -> 0` as `x -> 0`.
    pub vanishes_at_zero: bool,
    /// `B(x) -> infinity` as `x -> infinity`.
    pub unbounded: bool,
    /// `B` is nondecreasing, which lets the thinning sampler bound a window
    /// by its right endpoint.
    pub nondecreasing: bool,
    pub identically_zero: bool,
}

impl RateFlags {
    /// Whether both limit conditions on small and large cells hold.
    pub fn limits_hold(&self) -> bool {
        self.vanishes_at_zero && self.unbounded
    }
}

/// A division rate `x -> B(x) >= 0`.
///
/// The optional methods return `None` when no closed form is available; the
/// callers then fall back to quadrature and thinning.
pub trait DivisionRate: Send + Sync {
    fn rate(&self, x: f64) -> f64;

    /// `H(x, a, s) = int_0^s B(x e^{a r}) dr`.
    fn cumulative_hazard(&self, _x: f64, _growth: f64, _s: f64) -> Option<f64> {
        None
    }

    /// The `s >= 0` solving `H(x, a, s) = e`; `Some(inf)` if the total hazard
    /// stays below `e`.
    fn inverse_hazard(&self, _x: f64, _growth: f64, _e: f64) -> Option<f64> {
        None
    }

    /// `int_1^x B(r) / r dr`, used by the eigenmeasure transform.
    fn log_integral(&self, _x: f64) -> Option<f64> {
        None
    }

    fn flags(&self) -> RateFlags {
        RateFlags { continuous: true, ..RateFlags::default() }
    }

    fn describe(&self) -> String {
        "custom".to_string()
    }
}

impl<T: DivisionRate + ?Sized> DivisionRate for &T {
    fn rate(&self, x: f64) -> f64 {
        (**self).rate(x)
    }
    fn cumulative_hazard(&self, x: f64, a: f64, s: f64) -> Option<f64> {
        (**self).cumulative_hazard(x, a, s)
    }
    fn inverse_hazard(&self, x: f64, a: f64, e: f64) -> Option<f64> {
        (**self).inverse_hazard(x, a, e)
    }
    fn log_integral(&self, x: f64) -> Option<f64> {
        (**self).log_integral(x)
    }
    fn flags(&self) -> RateFlags {
        (**self).flags()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<T: DivisionRate + ?Sized> DivisionRate for Box<T> {
    fn rate(&self, x: f64) -> f64 {
        (**self).rate(x)
    }
    fn cumulative_hazard(&self, x: f64, a: f64, s: f64) -> Option<f64> {
        (**self).cumulative_hazard(x, a, s)
    }
    fn inverse_hazard(&self, x: f64, a: f64, e: f64) -> Option<f64> {
        (**self).inverse_hazard(x, a, e)
    }
    fn log_integral(&self, x: f64) -> Option<f64> {
        (**self).log_integral(x)
    }
    fn flags(&self) -> RateFlags {
        (**self).flags()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// `B(x) = x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Linear;

impl DivisionRate for Linear {
    fn rate(&self, x: f64) -> f64 {
        x.max(0.0)
    }

    fn cumulative_hazard(&self, x: f64, a: f64, s: f64) -> Option<f64> {
        // x (e^{as} - 1) / a
        Some(x * (a * s).exp_m1() / a)
    }

    fn inverse_hazard(&self, x: f64, a: f64, e: f64) -> Option<f64> {
        Some((a * e / x).ln_1p() / a)
    }

    fn log_integral(&self, x: f64) -> Option<f64> {
        Some(x - 1.0)
    }

    fn flags(&self) -> RateFlags {
        RateFlags {
            continuous: true,
            vanishes_at_zero: true,
            unbounded: true,
            nondecreasing: true,
            identically_zero: false,
        }
    }

    fn describe(&self) -> String {
        "identity".to_string()
    }
}

/// `B(x) = c x^k` with `c > 0`, `k > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    coefficient: f64,
    exponent: f64,
}

impl PowerLaw {
    pub fn new(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::Parameter(format!("power-law coefficient must be positive, got {coefficient}")));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Parameter(format!("power-law exponent must be positive, got {exponent}")));
        }
        Ok(PowerLaw { coefficient, exponent })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

impl DivisionRate for PowerLaw {
    fn rate(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.coefficient * x.powf(self.exponent)
        }
    }

    fn cumulative_hazard(&self, x: f64, a: f64, s: f64) -> Option<f64> {
        let ka = self.exponent * a;
        Some(self.coefficient * x.powf(self.exponent) * (ka * s).exp_m1() / ka)
    }

    fn inverse_hazard(&self, x: f64, a: f64, e: f64) -> Option<f64> {
        let ka = self.exponent * a;
        Some((ka * e / (self.coefficient * x.powf(self.exponent))).ln_1p() / ka)
    }

    fn log_integral(&self, x: f64) -> Option<f64> {
        Some(self.coefficient * (x.powf(self.exponent) - 1.0) / self.exponent)
    }

    fn flags(&self) -> RateFlags {
        RateFlags {
            continuous: true,
            vanishes_at_zero: true,
            unbounded: true,
            nondecreasing: true,
            identically_zero: false,
        }
    }

    fn describe(&self) -> String {
        format!("power({}, {})", self.coefficient, self.exponent)
    }
}

/// `B = 0`: cells never divide.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoDivision;

impl DivisionRate for NoDivision {
    fn rate(&self, _x: f64) -> f64 {
        0.0
    }

    fn cumulative_hazard(&self, _x: f64, _a: f64, _s: f64) -> Option<f64> {
        Some(0.0)
    }

    fn inverse_hazard(&self, _x: f64, _a: f64, _e: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }

    fn log_integral(&self, _x: f64) -> Option<f64> {
        Some(0.0)
    }

    fn flags(&self) -> RateFlags {
        RateFlags {
            continuous: true,
            vanishes_at_zero: true,
            unbounded: false,
            nondecreasing: true,
            identically_zero: true,
        }
    }

    fn describe(&self) -> String {
        "zero".to_string()
    }
}

/// Piecewise-linear interpolation of tabulated `(x, B)` pairs, constant
/// beyond the last node and linear to `B(0) = 0` below the first one.
#[derive(Clone, Debug, PartialEq)]
pub struct Tabulated {
    xs: Vec<f64>,
    bs: Vec<f64>,
    nondecreasing: bool,
}

impl Tabulated {
    pub fn new(xs: Vec<f64>, bs: Vec<f64>) -> Result<Self> {
        if xs.len() != bs.len() || xs.len() < 2 {
            return Err(Error::Parameter(
                "rate table needs at least two (x, B) pairs of equal length".into(),
            ));
        }
        if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("rate table sizes must be positive and strictly increasing".into()));
        }
        if bs.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::Parameter("rate table values must be finite and nonnegative".into()));
        }
        let nondecreasing = bs.windows(2).all(|w| w[1] >= w[0]);
        Ok(Tabulated { xs, bs, nondecreasing })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.bs)
    }
}

impl DivisionRate for Tabulated {
    fn rate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= 0.0 {
            return 0.0;
        }
        if x <= self.xs[0] {
            return self.bs[0] * x / self.xs[0];
        }
        if x >= self.xs[n - 1] {
            return self.bs[n - 1];
        }
        let j = self.xs.partition_point(|&v| v <= x) - 1;
        let w = (x - self.xs[j]) / (self.xs[j + 1] - self.xs[j]);
        self.bs[j] * (1.0 - w) + self.bs[j + 1] * w
    }

    fn flags(&self) -> RateFlags {
        RateFlags {
            continuous: true,
            vanishes_at_zero: true,
            unbounded: false,
            nondecreasing: self.nondecreasing,
            identically_zero: self.bs.iter().all(|&b| b == 0.0),
        }
    }

    fn describe(&self) -> String {
        format!("table({} nodes)", self.xs.len())
    }
}

/// Serializable description of a division rate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    #[default]
    Identity,
    Power {
        exponent: f64,
        #[serde(default = "one")]
        coefficient: f64,
    },
    Table {
        x: Vec<f64>,
        b: Vec<f64>,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl RateSpec {
    pub fn build(&self) -> Result<Box<dyn DivisionRate>> {
        Ok(match self {
            RateSpec::Identity => Box::new(Linear),
            RateSpec::Power { exponent, coefficient } => Box::new(PowerLaw::new(*coefficient, *exponent)?),
            RateSpec::Table { x, b } => Box::new(Tabulated::new(x.clone(), b.clone())?),
            RateSpec::Zero => Box::new(NoDivision),
        })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, RateSpec::Identity)
            || matches!(self, RateSpec::Power { exponent, coefficient } if *exponent == 1.0 && *coefficient == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hazard_and_inverse() {
        let h = Linear.cumulative_hazard(1.0, 1.0, 0.5).unwrap();
        assert!((h - (0.5f64.exp() - 1.0)).abs() < 1e-15);
        assert_eq!(Linear.cumulative_hazard(3.0, 2.0, 0.0), Some(0.0));
        let s = Linear.inverse_hazard(2.0, 1.3, 0.7).unwrap();
        let back = Linear.cumulative_hazard(2.0, 1.3, s).unwrap();
        assert!((back - 0.7).abs() < 1e-14);
    }

    #[test]
    fn power_law_reduces_to_linear() {
        let p = PowerLaw::new(1.0, 1.0).unwrap();
        for &(x, a, s) in &[(0.5, 1.0, 0.3), (2.0, 0.7, 1.1)] {
            let l = Linear.cumulative_hazard(x, a, s).unwrap();
            let q = p.cumulative_hazard(x, a, s).unwrap();
            assert!((l - q).abs() < 1e-14 * l.max(1.0));
        }
        assert!(PowerLaw::new(0.0, 1.0).is_err());
        assert!(PowerLaw::new(1.0, -1.0).is_err());
    }

    #[test]
    fn table_interpolates() {
        let t = Tabulated::new(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(t.rate(1.5), 2.0);
        assert_eq!(t.rate(0.5), 0.5);
        assert_eq!(t.rate(10.0), 3.0);
        assert!(t.flags().nondecreasing);
        assert!(Tabulated::new(vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(Tabulated::new(vec![1.0, 2.0], vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn zero_rate_never_fires() {
        assert_eq!(NoDivision.inverse_hazard(1.0, 1.0, 0.1), Some(f64::INFINITY));
        assert!(NoDivision.flags().identically_zero);
        assert!(!NoDivision.flags().limits_hold());
    }

    #[test]
    fn spec_builds() {
        assert_eq!(RateSpec::Identity.build().unwrap().rate(2.5), 2.5);
        let p = RateSpec::Power { exponent: 2.0, coefficient: 0.5 }.build().unwrap();
        assert_eq!(p.rate(2.0), 2.0);
        assert!(RateSpec::Power { exponent: 1.0, coefficient: 1.0 }.is_identity());
    }
}
