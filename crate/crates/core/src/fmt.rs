//! Decimal formatting shared by every emitted file.

/// Formats `x` with `digits` significant digits in plain positional
/// notation. Zero prints as `0.` followed by `digits - 1` zeros.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let magnitude = x.abs().log10().floor() as i64;
    let mut decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.999995 -> 10.00000)
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && (rounded.abs().log10().floor() as i64) > magnitude && decimals > 0 {
        decimals -= 1;
        s = format!("{x:.decimals$}");
    }
    s
}

/// Six significant digits, the precision of every CSV column.
pub fn sig6(x: f64) -> String {
    sig(x, 6)
}
