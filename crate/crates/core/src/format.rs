//! Number formatting shared by every CSV writer.

/// Formats a float with the shortest decimal that parses back to the same
/// value (never more than 17 significant digits). Infinity prints as `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // Display is shortest-round-trip for f64
        format!("{v}")
    }
}

/// Inverse of [`fmt_f64`].
pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}
