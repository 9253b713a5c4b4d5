//! Lossless decimal formatting for text file formats.
//!
//! Every value is written with 17 significant digits in the style of C's
//! `%.17g`, which is enough for any `f64` to parse back to the identical bit
//! pattern.

/// Formats `x` like `printf("%.17g", x)`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }

    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };

    if !(-4..17).contains(&exp) {
        let frac = digits[1..].trim_end_matches('0');
        let exp_sign = if exp < 0 { '-' } else { '+' };
        return if frac.is_empty() {
            format!("{sign}{}e{exp_sign}{:02}", &digits[..1], exp.abs())
        } else {
            format!("{sign}{}.{frac}e{exp_sign}{:02}", &digits[..1], exp.abs())
        };
    }

    let (int_part, frac_part) = if exp >= 0 {
        let split = exp as usize + 1;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        ("0".to_string(), format!("{zeros}{digits}"))
    };
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// Joins values formatted with [`fmt_g17`] using `sep`.
pub fn join_g17(values: impl IntoIterator<Item = f64>, sep: &str) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(&fmt_g17(v));
    }
    out
}
