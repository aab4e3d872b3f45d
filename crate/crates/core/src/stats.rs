//! Small statistics helpers.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Classical standard error of the slope from the residual variance.
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::EstimationFailed(format!("linear fit needs >= 2 paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::EstimationFailed("linear fit with constant abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, slope_stderr })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Jackknife standard error of a statistic computed from `blocks`
/// leave-one-out estimates.
pub fn jackknife_stderr(leave_one_out: &[f64]) -> f64 {
    let k = leave_one_out.len() as f64;
    if leave_one_out.len() < 2 {
        return f64::NAN;
    }
    let m = mean(leave_one_out);
    ((k - 1.0) / k * leave_one_out.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!(f.slope_stderr < 1e-15);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ks_of_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&s, |x| x) - 0.005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&s, &s), 0.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + 0.101).collect();
        assert!((ks_two_sample(&s, &shifted) - 0.11).abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_means_matches_classical() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let n = xs.len();
        let loo: Vec<f64> = (0..n)
            .map(|k| xs.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v).sum::<f64>() / (n - 1) as f64)
            .collect();
        let (_, se) = mean_stderr(&xs);
        assert!((jackknife_stderr(&loo) - se).abs() < 1e-12);
    }
}
