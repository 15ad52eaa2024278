//! Decimal rendering with 17 significant digits, enough to round-trip any
//! `f64` exactly.

/// Formats `x` like C's `%.17g`; non-finite values become `inf`, `-inf`, `nan`.
pub fn sig17(x: f64) -> String {
    sig(x, 17)
}

/// Formats `x` like C's `%.{digits}g`.
pub fn sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..digits as i32).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
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
    use super::{sig, sig17};
    use proptest::prelude::*;

    #[test]
    fn renders_like_printf_g17() {
        assert_eq!(sig17(1.0), "1");
        assert_eq!(sig17(0.1), "0.10000000000000001");
        assert_eq!(sig17(-2.5), "-2.5");
        assert_eq!(sig17(1e-7), "9.9999999999999995e-08");
        assert_eq!(sig17(1e20), "1e+20");
        assert_eq!(sig17(f64::INFINITY), "inf");
        assert_eq!(sig17(123456.75), "123456.75");
    }

    #[test]
    fn short_forms() {
        assert_eq!(sig(0.912345, 3), "0.912");
        assert_eq!(sig(6245812.0, 3), "6.25e+06");
        assert_eq!(sig(999.96, 4), "1000");
        assert_eq!(sig(0.0001234, 2), "0.00012");
        assert_eq!(sig(0.00001234, 2), "1.2e-05");
    }

    proptest! {
        #[test]
        fn round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = sig17(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
