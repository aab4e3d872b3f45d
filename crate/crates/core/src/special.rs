//! Exponential integral and the auxiliary function `G`.

use crate::quad;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E_1(z) = int_z^inf e^{-u} / u du` for `z > 0`.
pub fn e1(z: f64) -> f64 {
    if z <= 1.0 {
        e1_series(z)
    } else {
        scaled_e1_cf(z) * (-z).exp()
    }
}

/// `e^z E_1(z)`, finite for all `z > 0` and tending to `1/z`.
pub fn scaled_e1(z: f64) -> f64 {
    if z <= 1.0 {
        e1_series(z) * z.exp()
    } else {
        scaled_e1_cf(z)
    }
}

fn e1_series(z: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -z / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

// Modified Lentz evaluation of the continued fraction
// e^z E_1(z) = 1/(z+1- 1/(z+3- 4/(z+5- ...))).
fn scaled_e1_cf(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `e^z E_1(z)` by adaptive quadrature of `int_0^inf e^{-u} / (z + u) du`.
pub fn scaled_e1_quadrature(z: f64, rel_tol: f64) -> f64 {
    let est = quad::semi_infinite(|u| (-u).exp() / (z + u), 0.0, 1.0, rel_tol, 0.0).unwrap_or_else(|e| e);
    est.value
}

/// `int_t^inf e^{-x/alpha} / x dx`, which equals `E_1(t / alpha)`.
pub fn exp_tail(t: f64, alpha: f64) -> Result<f64> {
    check(t, alpha)?;
    Ok(e1(t / alpha))
}

/// `G(t) = t e^{t/alpha} int_t^inf e^{-x/alpha} / x dx`.
///
/// Increases from 0 to `alpha` on `(0, inf)`.
pub fn g(t: f64, alpha: f64) -> Result<f64> {
    check(t, alpha)?;
    Ok(t * scaled_e1(t / alpha))
}

/// `G'(t) = (1 + t/alpha) e^{t/alpha} E_1(t/alpha) - 1`.
pub fn g_prime(t: f64, alpha: f64) -> Result<f64> {
    check(t, alpha)?;
    let z = t / alpha;
    Ok((1.0 + z) * scaled_e1(z) - 1.0)
}

/// `G'` evaluated through the quadrature representation of the tail, for
/// cross-checking the series/continued-fraction route.
pub fn g_prime_quadrature(t: f64, alpha: f64) -> Result<f64> {
    check(t, alpha)?;
    let z = t / alpha;
    Ok((1.0 + z) * scaled_e1_quadrature(z, 1e-12) - 1.0)
}

/// Margin of the lower bound `int_t^inf e^{-x/alpha}/x dx > alpha e^{-t/alpha}/(t + alpha)`,
/// returned in scaled form `e^z E_1(z) - 1/(1+z)` with `z = t/alpha` so that
/// it does not underflow for large `t`.
pub fn jensen_margin(t: f64, alpha: f64) -> Result<f64> {
    check(t, alpha)?;
    let z = t / alpha;
    Ok(scaled_e1(z) - 1.0 / (1.0 + z))
}

fn check(t: f64, alpha: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("G requires t > 0, got {t}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Values from standard tables.
        let cases = [
            (0.01, 4.037_929_576_538_114),
            (0.5, 0.559_773_594_776_160_8),
            (1.0, 0.219_383_934_395_520_27),
            (2.0, 0.048_900_510_708_061_12),
            (10.0, 4.156_968_929_685_324e-6),
        ];
        for (z, v) in cases {
            assert!(((e1(z) - v) / v).abs() < 1e-13, "E1({z}) = {} vs {v}", e1(z));
        }
    }

    #[test]
    fn branches_agree_with_quadrature() {
        for &z in &[1e-3, 0.3, 0.999, 1.001, 4.0, 50.0, 700.0] {
            let a = scaled_e1(z);
            let b = scaled_e1_quadrature(z, 1e-13);
            assert!(((a - b) / b).abs() < 1e-11, "z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn g_limits() {
        assert!((g(1e-8, 1.0).unwrap()).abs() < 1e-6);
        let big = g(50.0, 1.0).unwrap();
        assert!((big - 1.0).abs() < 0.02);
        assert!((g(100.0, 2.5).unwrap() / 2.5 - 1.0).abs() < 0.03);
        assert!(g(0.0, 1.0).is_err());
        assert!(g(-1.0, 1.0).is_err());
    }

    #[test]
    fn g_prime_matches_difference_quotient() {
        for &t in &[0.01, 0.7, 3.0, 40.0] {
            let h = 1e-5 * t;
            let fd = (g(t + h, 1.3).unwrap() - g(t - h, 1.3).unwrap()) / (2.0 * h);
            let gp = g_prime(t, 1.3).unwrap();
            assert!((fd - gp).abs() < 1e-7 * gp.abs().max(1e-3), "t={t}: {fd} vs {gp}");
        }
    }
}
