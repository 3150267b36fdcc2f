//! Numerical verification utilities.
//!
//! The analytic gradients in this crate are all checked against central finite
//! differences computed through these helpers. The helpers deliberately know
//! nothing about networks — they treat the function under test as a black box
//! over a flat parameter slice — so they stay independent of the code paths
//! they verify.

/// Relative error of `got` against `want` with a small absolute floor.
///
/// The floor (1e-4 on the denominator) means that when both values are
/// essentially zero, discrepancies at the finite-difference noise level
/// (~1e-10) do not register as huge "relative" errors.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / got.abs().max(want.abs()).max(1e-4)
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
///
/// Truncation error is O(h²); with `f64` and the default `h = 1e-6` used by
/// the tests the achievable agreement with an exact analytic gradient is a
/// few parts in 1e-9, comfortably inside the 1e-5 acceptance tolerance.
pub fn central_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = f(&probe);
            probe[i] = orig - h;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central finite difference of a scalar-to-scalar function.
pub fn central_diff_scalar(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Maximum [`rel_err`] over two equally long slices.
///
/// Panics if lengths differ — a length mismatch in a gradient check is a
/// harness bug, not a numerical finding.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "gradient length mismatch");
    got.iter()
        .zip(want)
        .map(|(&g, &w)| rel_err(g, w))
        .fold(0.0, f64::max)
}
