//! Numeric formatting for CSV artifacts.
//!
//! Every float in a CSV cell goes through [`fmt_g`], which reproduces C's
//! `%.12g`: 12 significant digits, trailing zeros stripped, scientific
//! notation when the decimal exponent falls below −4 or reaches 12. Frozen
//! output formatting keeps artifacts byte-stable across runs and platforms.

/// Significant digits carried by every CSV cell.
const SIG_DIGITS: usize = 12;

/// Formats `x` like C's `printf("%.12g", x)`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    // Rust's scientific formatting is correctly rounded; the exponent it
    // reports is the one %g's style choice is defined over.
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific formatting always contains an exponent");
    let exp: i32 = exp.parse().expect("exponent is a valid integer");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp:+03}")
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    }
}
