//! Decimal rendering shared by every text format the crate writes.

/// `%.{digits}g`-style rendering: `digits` significant digits, trailing zeros
/// trimmed, scientific notation outside `1e-5 <= |x| < 10^digits`.
pub fn significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // Let the formatter do the rounding, then read back the exponent it chose.
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

/// 17 significant digits: enough to round-trip any `f64` exactly.
pub fn exact(x: f64) -> String {
    format!("{:.16e}", x)
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
