//! Decimal formatting shared by every report writer. One fixed format,
//! 17 significant digits, so f64 values round-trip exactly and repeated
//! runs produce byte-identical files.

/// Formats with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a float previously written by [`fmt_f64`] (any standard float
/// syntax is accepted).
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}
