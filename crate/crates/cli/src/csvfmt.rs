//! Number formatting shared by every CSV writer. `Debug` for `f64` gives
//! the shortest string that parses back to the same value, so files are
//! byte-stable across runs.

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
