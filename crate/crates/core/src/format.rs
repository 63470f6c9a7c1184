//! Canonical text formatting shared by every CSV writer.

/// Round to 9 significant digits and print the shortest decimal that parses
/// back to that rounded value. Idempotent under parse/format.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific literal parses");
    format!("{rounded}")
}

/// Optional number: empty cell for `None`.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}
