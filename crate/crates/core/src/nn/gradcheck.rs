/// Smallest denominator used when comparing gradients, so that entries which
/// are zero up to rounding do not blow up the relative error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Central-difference derivative of `f` at `x` along every coordinate.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`, maximized over coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR))
        .fold(0.0, f64::max)
}

/// Compares `analytic` against central differences of `f` with step `h`.
pub fn grad_check(x: &[f64], analytic: &[f64], h: f64, f: impl FnMut(&[f64]) -> f64) -> f64 {
    max_relative_error(analytic, &numeric_gradient(x, h, f))
}
