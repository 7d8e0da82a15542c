//! Twelve-significant-digit number formatting for text and JSON outputs.

use serde::Serialize;
use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Round to twelve significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal text that reads back as `round_sig(x)`.
pub fn fmt_sig(x: f64) -> String {
    let r = round_sig(x);
    let a = r.abs();
    if r != 0.0 && !(1e-5..1e15).contains(&a) {
        format!("{r:e}")
    } else if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(f) = n.as_f64() {
                if let Some(num) = serde_json::Number::from_f64(round_sig(f)) {
                    *n = num;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to twelve significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_are_stable_and_parse_back() {
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(1.5e-7), "1.5e-7");
        for x in [std::f64::consts::PI, -1234.56789012345, 7.61e-2, 9.99999999999951e10] {
            let s = fmt_sig(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(fmt_sig(back), s);
            assert!(((back - x) / x).abs() < 1e-11);
        }
    }

    #[test]
    fn json_rounds_nested_floats() {
        let s = to_json_string(&serde_json::json!({"a": [0.1 + 0.2], "b": {"c": 3}})).unwrap();
        assert!(s.contains("0.3"));
        assert!(!s.contains("0.30000000000000004"));
        assert!(s.contains("\"c\": 3"));
    }
}
