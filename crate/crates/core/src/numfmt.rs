//! Locale-independent number formatting shared by labels and CSV exports.

/// Significant digits used for index scores.
pub const INDEX_DIGITS: usize = 3;
/// Significant digits used for measured values.
pub const VALUE_DIGITS: usize = 4;

/// Formats `x` with `digits` significant digits.
///
/// Magnitudes in `[1e-3, 1e6)` use positional notation (`1.00`, `0.0123`,
/// `12350`), everything else scientific notation (`1.235e9`).
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (9.996 -> 10.0).
    let scaled = round_to_sig(x.abs(), digits, exp);
    if scaled >= 10f64.powi(exp + 1) {
        exp += 1;
    }
    if !(-3..6).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

fn round_to_sig(x: f64, digits: usize, exp: i32) -> f64 {
    let factor = 10f64.powi(digits as i32 - 1 - exp);
    (x * factor).round() / factor
}

/// Formats an index score at [`INDEX_DIGITS`] significant digits.
pub fn format_index(x: f64) -> String {
    format_sig(x, INDEX_DIGITS)
}

/// Formats a measured value at [`VALUE_DIGITS`] significant digits.
pub fn format_value(x: f64) -> String {
    format_sig(x, VALUE_DIGITS)
}

/// Half a unit in the last printed place, the maximum rounding error of
/// `format_sig(x, digits)`.
pub fn half_ulp_printed(x: f64, digits: usize) -> f64 {
    let exp = x.abs().log10().floor() as i32;
    0.5 * 10f64.powi(exp + 1 - digits as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(format_index(1.0), "1.00");
        assert_eq!(format_index(0.5), "0.500");
        assert_eq!(format_index(2.0), "2.00");
        assert_eq!(format_index(9.996), "10.0");
        assert_eq!(format_index(123.456), "123");
        assert_eq!(format_value(12.0), "12.00");
        assert_eq!(format_value(0.83), "0.8300");
        assert_eq!(format_value(12345.0), "12345");
        assert_eq!(format_value(1_234_567_890.0), "1.235e9");
        assert_eq!(format_value(0.000_123_4), "1.234e-4");
        assert_eq!(format_value(0.0), "0.000");
    }

    proptest! {
        #[test]
        fn printed_value_round_trips(x in 1e-6f64..1e9) {
            for digits in [3usize, 4] {
                let text = format_sig(x, digits);
                let back: f64 = text.parse().unwrap();
                let tol = half_ulp_printed(x, digits) * (1.0 + 1e-9) + x * 1e-15;
                prop_assert!((back - x).abs() <= tol, "{x} -> {text}");
            }
        }
    }
}
