//! Independent numerical reference for the continuous margin flow.

use crate::error::{Error, Result};

use super::logistic;

/// Integrate `dm/dt = c * logistic(-m)` from `m0` with classical
/// fourth-order Runge–Kutta until the margin reaches `target`, returning the
/// crossing time (linearly interpolated inside the final step).
///
/// This deliberately shares no code with the closed form it cross-checks:
/// it never forms `m + e^m`.
pub fn rk4_time_to_margin(m0: f64, target: f64, c: f64, step: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) || !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rk4 needs c > 0 and step > 0, got c={c}, step={step}"
        )));
    }
    if !(m0.is_finite() && target.is_finite()) || target < m0 {
        return Err(Error::InvalidArgument(format!(
            "rk4 needs finite margins with target >= start, got {m0} -> {target}"
        )));
    }
    if target == m0 {
        return Ok(0.0);
    }

    let field = |m: f64| c * logistic(-m);
    let mut m = m0;
    let mut t = 0.0;
    // The flow is strictly increasing with rate >= c * logistic(-target)
    // until the crossing, so this loop terminates.
    loop {
        let k1 = field(m);
        let k2 = field(m + 0.5 * step * k1);
        let k3 = field(m + 0.5 * step * k2);
        let k4 = field(m + step * k3);
        let next = m + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if next >= target {
            return Ok(t + step * (target - m) / (next - m));
        }
        m = next;
        t += step;
        if !m.is_finite() {
            return Err(Error::NonFinite {
                context: "rk4 margin integration".into(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::time_to_memorize;

    #[test]
    fn rk4_agrees_with_the_closed_form() {
        for (m0, target, c) in [(-3.0, 2.0, 0.7), (-0.5, 4.0, 2.0), (1.0, 6.0, 1.3)] {
            let numeric = rk4_time_to_margin(m0, target, c, 1e-4).unwrap();
            let exact = time_to_memorize(m0, target, c).unwrap();
            let rel = (numeric - exact).abs() / exact;
            assert!(rel < 1e-6, "m0={m0} target={target} c={c}: rel {rel}");
        }
    }

    #[test]
    fn zero_distance_is_zero_time() {
        assert_eq!(rk4_time_to_margin(1.0, 1.0, 2.0, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(rk4_time_to_margin(0.0, -1.0, 1.0, 1e-3).is_err());
        assert!(rk4_time_to_margin(0.0, 1.0, 0.0, 1e-3).is_err());
        assert!(rk4_time_to_margin(0.0, 1.0, 1.0, 0.0).is_err());
    }
}
