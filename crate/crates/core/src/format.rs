//! Text formatting of floats at 17 significant digits (`%.17g`), which round-trips `f64`.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats `x` like C's `%.17g`. Non-finite values render as `inf`, `-inf`, `nan`.
pub fn sig17(x: f64) -> String {
    const DIGITS: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        strip_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = strip_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// JSON number token for `x`; non-finite values map to `null`.
pub fn json_number(x: f64) -> String {
    if x.is_finite() {
        sig17(x)
    } else {
        "null".into()
    }
}

/// Serde adapter emitting an `f64` as a 17-significant-digit JSON number.
pub fn ser_sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(json_number(*x)).serialize(s)
}

pub fn ser_sig17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let body: Vec<String> = xs.iter().map(|x| json_number(*x)).collect();
    raw(format!("[{}]", body.join(","))).serialize(s)
}

fn raw(text: String) -> Box<RawValue> {
    RawValue::from_string(text).expect("valid JSON number text")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g17() {
        assert_eq!(sig17(4.0), "4");
        assert_eq!(sig17(0.1), "0.10000000000000001");
        assert_eq!(sig17(-2.5), "-2.5");
        assert_eq!(sig17(1e20), "1e+20");
        assert_eq!(sig17(1.5e-7), "1.4999999999999999e-07");
        assert_eq!(sig17(123456.0), "123456");
        assert_eq!(sig17(0.0001), "0.0001");
    }

    #[test]
    fn round_trips() {
        for x in [
            std::f64::consts::PI,
            1.0 / 3.0,
            2.241_402_727_332_141,
            1e-300,
            6.02e23,
        ] {
            assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
        }
    }
}
