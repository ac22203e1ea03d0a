//! Number formatting shared by every text output.

/// Formats `x` with nine significant digits.
///
/// Magnitudes in `[1e-5, 1e9)` are written in positional notation, anything
/// else in scientific notation. Infinities print as `inf` / `-inf`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Let the scientific formatter do the rounding, then read back the
    // exponent it settled on.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}
