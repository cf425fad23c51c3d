//! Lossless text formatting for 64-bit floats in CSV and manifest output.

/// Formats with 17 significant digits (scientific), enough to round-trip any
/// finite `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Parses a float previously written by [`fmt_f64`] (or any standard decimal).
pub fn parse_f64(s: &str) -> crate::Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| crate::Error::Parse(format!("bad float {:?}: {}", s, e)))
}
