//! Numeric formatting for report CSV files.
//!
//! All floating-point cells are written with [`sig12`]: 12 significant
//! digits, `.` decimal separator, trailing zeros trimmed. Round-tripping
//! through `str::parse::<f64>` recovers the value to within one unit in
//! the 12th significant digit, which is tighter than any tolerance used
//! downstream.

/// Formats `x` with 12 significant digits, printf `%.12g` style.
///
/// Values whose decimal exponent falls in `[-4, 12)` are written in
/// positional notation, everything else in scientific notation with a
/// Rust-style exponent (`1.5e-7`, not `1.5e-07`). Zero is `"0"`, and
/// non-finite values are `"NaN"`, `"inf"`, `"-inf"`.
pub fn sig12(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }

    // `{:.11e}` rounds to 12 significant digits and exposes the decimal
    // exponent of the rounded value, e.g. -0.00099999999999995 -> "-1e-3".
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("float in scientific notation always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is a valid integer");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 12);

    let body = if (-4..12).contains(&exp) {
        position_digits(&digits, exp)
    } else {
        let trimmed = trim_fraction(&format!("{}.{}", &digits[..1], &digits[1..]));
        format!("{trimmed}e{exp}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Lays out 12 rounded digits around a decimal point at power `exp`.
fn position_digits(digits: &str, exp: i32) -> String {
    let raw = if exp < 0 {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{digits}")
    } else {
        let point = exp as usize + 1;
        if point >= digits.len() {
            let zeros = "0".repeat(point - digits.len());
            return format!("{digits}{zeros}");
        }
        format!("{}.{}", &digits[..point], &digits[point..])
    };
    trim_fraction(&raw)
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
