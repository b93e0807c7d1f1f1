//! Central-difference gradient checking.
//!
//! The losses and the MLP backward pass hand-derive every gradient, so the
//! test suites in this crate verify each one numerically. These helpers are
//! deliberately independent of the analytic code paths they check: they
//! only ever call a black-box scalar function.

/// Numerical gradient of `f` at `x` via central differences with step `h`:
/// `df/dx_i ≈ (f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let f_plus = f(&probe);
        probe[i] = orig - h;
        let f_minus = f(&probe);
        probe[i] = orig;
        grad[i] = (f_plus - f_minus) / (2.0 * h);
    }
    grad
}

/// Largest relative discrepancy between an analytic and a numeric gradient.
///
/// Each entry is compared as `|a - n| / max(|a|, |n|, floor)`; the floor
/// keeps finite-difference roundoff on near-zero entries from registering
/// as a large relative error.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
