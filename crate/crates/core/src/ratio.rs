//! Exact ratios and their fixed-point rendering.

use num_rational::Ratio;

/// Renders `r` with `places` decimals, rounding half away from zero.
pub fn decimal(r: &Ratio<u64>, places: u32) -> String {
    let scale = 10u128.pow(places);
    let numer = u128::from(*r.numer()) * scale;
    let denom = u128::from(*r.denom());
    let scaled = (numer * 2 + denom) / (denom * 2);
    let int = scaled / scale;
    if places == 0 {
        return int.to_string();
    }
    let frac = scaled % scale;
    format!("{int}.{frac:0width$}", width = places as usize)
}

/// Same as [`decimal`] for a signed ratio.
pub fn decimal_signed(r: &Ratio<i64>, places: u32) -> String {
    let magnitude = Ratio::new(r.numer().unsigned_abs(), r.denom().unsigned_abs());
    let text = decimal(&magnitude, places);
    if (*r.numer() < 0) != (*r.denom() < 0) && text.chars().any(|c| c.is_ascii_digit() && c != '0') {
        format!("-{text}")
    } else {
        text
    }
}

pub fn to_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
