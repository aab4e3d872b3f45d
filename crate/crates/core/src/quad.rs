//! Numerical quadrature.

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

// Gauss-Kronrod 7/15 nodes on [-1, 1] (nonnegative half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the total
/// error is below `max(abs_tol, rel_tol * |value|)`. Returns `Err` carrying
/// the best estimate when the subdivision budget runs out.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Estimate, Estimate> {
    adaptive_with_limit(f, a, b, rel_tol, abs_tol, 2000)
}

pub fn adaptive_with_limit<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Estimate, Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let value: f64 = intervals.iter().map(|iv| iv.2).sum();
        let error: f64 = intervals.iter().map(|iv| iv.3).sum();
        let est = Estimate { value, error, evaluations };
        if !value.is_finite() {
            return Err(est);
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(est);
        }
        if intervals.len() >= max_intervals {
            return Err(est);
        }
        let (k, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, _, _) = intervals.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval can no longer be split in floating point.
            return Err(est);
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integral of `f` over `[a, inf)` through the substitution
/// `x = a + s t / (1 - t)`, where `s` sets the scale of the mapped variable.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, rel_tol: f64, abs_tol: f64) -> Result<Estimate, Estimate> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        let x = a + scale * t / u;
        let v = f(x) * scale / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive(g, 0.0, 1.0, rel_tol, abs_tol)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite weights for `n` equispaced nodes with spacing `h`: Simpson when
/// `n` is odd, trapezoidal otherwise.
pub fn equispaced_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    if n % 2 == 1 {
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = if k == 0 || k == n - 1 {
                h / 3.0
            } else if k % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
    } else {
        w.iter_mut().for_each(|wk| *wk = h);
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Trapezoidal weights for arbitrary increasing nodes.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let half = 0.5 * (xs[i] - xs[i - 1]);
        w[i - 1] += half;
        w[i] += half;
    }
    w
}

/// Trapezoidal rule on tabulated data.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_handles_smooth_and_peaked() {
        let q = adaptive(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-13, 0.0).unwrap();
        assert!((q.value - 2.0).abs() < 1e-13);
        let q = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-11, 0.0).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!(((q.value - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_exponential() {
        let q = semi_infinite(|x| (-x).exp(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
        let q = semi_infinite(|x| 1.0 / (x * x), 2.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let n = 7;
        let h = 0.5;
        let w = equispaced_weights(n, h);
        let s: f64 = w.iter().enumerate().map(|(k, w)| w * (k as f64 * h).powi(3)).sum();
        assert!((s - 3.0f64.powi(4) / 4.0).abs() < 1e-13);
        let w = equispaced_weights(4, 1.0);
        assert_eq!(w, vec![0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let xs = [0.1, 0.4, 1.0, 3.0];
        let w = trapezoid_weights(&xs);
        assert!((w.iter().sum::<f64>() - 2.9).abs() < 1e-15);
        assert!((trapezoid(&xs, &[1.0; 4]) - 2.9).abs() < 1e-15);
    }
}
