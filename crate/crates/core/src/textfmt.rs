//! Decimal text for floats: 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fmt::Write;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_vec(xs: &[f64]) -> String {
    let mut out = String::with_capacity(2 + xs.len() * 24);
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x:.16e}");
    }
    out.push(']');
    out
}
