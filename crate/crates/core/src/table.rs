//! Plain CSV tables with round-trippable number formatting.

use std::fmt::Write as _;

/// 17 significant digits; parses back to the same `f64`.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a header row followed by numeric rows.
pub fn to_csv<S: AsRef<str>>(header: &[S], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    let head: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
    out.push_str(&head.join(","));
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", number(*v));
        }
        out.push('\n');
    }
    out
}

/// Header `prefix1..prefixN`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
