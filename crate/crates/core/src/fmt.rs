//! Locale-independent numeric formatting for exported files.

/// Formats `v` with `digits` significant digits, like C's `%.{digits}g`.
pub fn sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

/// Twelve significant digits, the precision used by every exported file.
pub fn g12(v: f64) -> String {
    sig(v, 12)
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(g12(1.0), "1");
        assert_eq!(g12(0.5), "0.5");
        assert_eq!(g12(-2.25), "-2.25");
        assert_eq!(g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(g12(123456.789), "123456.789");
        assert_eq!(g12(1.5e-7), "1.5e-07");
        assert_eq!(g12(6.02214076e23), "6.02214076e+23");
        assert_eq!(g12(1e12), "1e+12");
        assert_eq!(g12(999999999999.0), "999999999999");
        assert_eq!(g12(0.0001), "0.0001");
        assert_eq!(g12(f64::INFINITY), "inf");
    }

    #[test]
    fn round_trips_to_twelve_digits() {
        for &v in &[std::f64::consts::PI, 1.637024780521776, -3.3e-9, 7.25e15] {
            let back: f64 = g12(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-11, "{v} -> {back}");
        }
    }
}
