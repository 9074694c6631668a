//! Fixed numeric formatting for CSV artifacts.

/// Render a float with 12 significant digits in scientific notation, the
/// fixed format used by every CSV golden this workspace emits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0" leaking into goldens.
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}
