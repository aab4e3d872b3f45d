use serde::Serialize;

use crate::{Error, Result};

/// Size moments `m_p = int x^p U` and log-moments `l_p = int x^p ln(x) U`
/// of the symmetric eigenmeasure for `B(x) = x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentTable {
    pub alpha: f64,
    pub theta: f64,
    pub m: Vec<f64>,
    pub l: Vec<f64>,
}

fn check(alpha: f64, theta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("theta must lie strictly between 0 and 1, got {theta}")));
    }
    Ok(())
}

/// `theta^p + (1-theta)^p`.
fn power_sum(theta: f64, p: f64) -> f64 {
    theta.powf(p) + (1.0 - theta).powf(p)
}

/// `theta^p ln(theta) + (1-theta)^p ln(1-theta)`.
fn log_power_sum(theta: f64, p: f64) -> f64 {
    theta.powf(p) * theta.ln() + (1.0 - theta).powf(p) * (-theta).ln_1p()
}

/// `m_0 ..= m_max` from `m_0 = 1`, `m_1 = alpha`,
/// `m_2 = -alpha^2 / (theta ln theta + (1-theta) ln(1-theta))` and
/// `m_{p+1} = alpha (p-1) m_p / (1 - theta^p - (1-theta)^p)`.
pub fn moments(alpha: f64, theta: f64, max: usize) -> Result<MomentTable> {
    check(alpha, theta)?;
    let mut m = vec![1.0, alpha];
    if max >= 2 {
        m.push(-alpha * alpha / log_power_sum(theta, 1.0));
    }
    for p in 2..max {
        let next = alpha * (p as f64 - 1.0) * m[p] / (1.0 - power_sum(theta, p as f64));
        m.push(next);
    }
    m.truncate(max + 1);
    Ok(MomentTable { alpha, theta, m, l: Vec::new() })
}

/// Log-moments `l_0 ..= l_max`.
///
/// The moment identities tie the log-moments together as follows:
///
/// * `l_0 = 1 + l_1 / alpha + ln(theta) + ln(1-theta)`;
/// * the order-1 identity does not involve `l_2`, so `l_1` and `l_2` are
///   both free and must be supplied (`seeds = (l_1, l_2)`, e.g. from
///   quadrature of the series eigenmeasure);
/// * for `p >= 2`,
///   `l_{p+1} = [alpha (1-p) l_p - alpha m_p - m_{p+1} (theta^p ln theta + (1-theta)^p ln(1-theta))]
///              / (theta^p + (1-theta)^p - 1)`.
///
/// `table` must hold `m` up to index `max`.
pub fn log_moments(table: &MomentTable, max: usize, seeds: (f64, f64)) -> Result<MomentTable> {
    let (alpha, theta) = (table.alpha, table.theta);
    check(alpha, theta)?;
    if table.m.len() < max + 1 {
        return Err(Error::Parameter(format!(
            "log-moments up to order {max} need size moments up to order {max}, have {}",
            table.m.len() - 1
        )));
    }
    let (l1, l2) = seeds;
    let l0 = 1.0 + l1 / alpha + theta.ln() + (-theta).ln_1p();
    let mut l = vec![l0, l1, l2];
    for p in 2..max {
        let pf = p as f64;
        let num = alpha * (1.0 - pf) * l[p] - alpha * table.m[p] - table.m[p + 1] * log_power_sum(theta, pf);
        l.push(num / (power_sum(theta, pf) - 1.0));
    }
    l.truncate(max + 1);
    Ok(MomentTable { l, ..table.clone() })
}

/// `l_0` and `l_1` as given by the closed forms `1 + 2 (ln theta + ln(1-theta))`
/// and `alpha (ln theta + ln(1-theta))`. These do not satisfy
/// `l_1 = int x ln(x) U`; they are kept for comparison only.
pub fn published_log_moments(alpha: f64, theta: f64) -> Result<(f64, f64)> {
    check(alpha, theta)?;
    let s = theta.ln() + (-theta).ln_1p();
    Ok((1.0 + 2.0 * s, alpha * s))
}

/// One step of the log-moment recursion with denominator
/// `theta^p + (1-theta)^p`, as it is usually quoted. Returns `l_{p+1}`.
/// At `p = 1` it yields `l_2 = 0` whatever `l_1`; compare [`log_moments`].
pub fn published_log_step(table: &MomentTable, p: usize, l_p: f64) -> Result<f64> {
    let (alpha, theta) = (table.alpha, table.theta);
    check(alpha, theta)?;
    if table.m.len() < p + 2 {
        return Err(Error::Parameter(format!("need size moments up to order {}", p + 1)));
    }
    let pf = p as f64;
    let num = alpha * (1.0 - pf) * l_p - table.m[p + 1] * log_power_sum(theta, pf) - alpha * table.m[p];
    Ok(num / power_sum(theta, pf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_moments() {
        let t = moments(1.3, 0.3, 4).unwrap();
        assert_eq!(t.m[0], 1.0);
        assert_eq!(t.m[1], 1.3);
        assert_eq!(t.m.len(), 5);
        let half = moments(1.0, 0.5, 2).unwrap();
        assert!((half.m[2] - 1.0 / 2f64.ln()).abs() < 1e-14);
        let m = moments(1.0, 0.3, 2).unwrap();
        assert!((m.m[2] - 1.637_024_8).abs() < 1e-6);
        assert!(moments(1.0, 0.0, 3).is_err());
        assert!(moments(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn moments_are_symmetric_in_theta() {
        let a = moments(1.0, 0.3, 6).unwrap();
        let b = moments(1.0, 0.7, 6).unwrap();
        for (x, y) in a.m.iter().zip(&b.m) {
            assert!((x - y).abs() < 1e-12 * x);
        }
    }

    #[test]
    fn log_moment_identity_for_l0() {
        let m = moments(2.0, 0.4, 5).unwrap();
        let t = log_moments(&m, 5, (0.8, 2.5)).unwrap();
        assert!((t.l[0] - (1.0 + 0.4 + 0.4f64.ln() + 0.6f64.ln())).abs() < 1e-14);
        assert_eq!(t.l.len(), 6);
        assert!(log_moments(&moments(1.0, 0.4, 2).unwrap(), 4, (0.0, 0.0)).is_err());
    }

    #[test]
    fn published_values() {
        let (l0, l1) = published_log_moments(1.0, 0.5).unwrap();
        assert!((l0 - (1.0 + 4.0 * 0.5f64.ln())).abs() < 1e-15);
        assert!((l1 - 2.0 * 0.5f64.ln()).abs() < 1e-15);
    }
}
