//! Named numerical verifications of the closed forms, shared by the command
//! line's `theory` subcommand and the acceptance suite.
//!
//! Every check pits a closed form against an independent computation — an
//! explicit simulation, a Runge–Kutta integration, or the real engine — over
//! seeded random draws, and reports the worst error seen.

use crate::check::rel_err;
use crate::prng::{derive_seed, Rng};

use super::bridge::{single_channel_grad_ratio, ReplicaState};
use super::oracle::rk4_time_to_margin;
use super::{
    amplification_ratio, coupled_dynamics, effective_slope, logistic, margin_step,
    time_to_memorize, CoupledConfig,
};

/// Result of one named verification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// Worst relative error observed (0 for pure property checks).
    pub max_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Human-readable summary of what was compared.
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, cases: usize, max_err: f64, tolerance: f64, detail: String) -> Self {
        CheckOutcome {
            name,
            cases,
            max_err,
            tolerance,
            passed: max_err <= tolerance,
            detail,
        }
    }
}

/// Per-step margin-gain ratio: `margin_step` with the normalized slope over
/// `margin_step` with the plain slope must equal `(gamma / sigma)^2`.
pub fn check_margin_step_ratio(draws: usize, tolerance: f64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "margin-step-ratio", 0));
    let mut max_err = 0.0f64;
    for _ in 0..draws {
        let gamma = 0.1 + rng.next_f64() * 5.0;
        let sigma = 0.1 + rng.next_f64() * 3.0;
        let a = rng.normal_scaled(0.0, 2.0);
        let eta = 1e-4 + rng.next_f64() * 0.5;
        let m = rng.normal_scaled(0.0, 4.0);
        let x_norm_sq = 0.1 + rng.next_f64() * 10.0;

        let with = margin_step(m, eta, effective_slope(a, gamma, sigma, true), x_norm_sq);
        let without = margin_step(m, eta, effective_slope(a, gamma, sigma, false), x_norm_sq);
        max_err = max_err.max(rel_err(with / without, amplification_ratio(gamma, sigma)));
    }
    CheckOutcome::new(
        "margin_step_amplification",
        draws,
        max_err,
        tolerance,
        "per-step margin-gain ratio vs (gamma/sigma)^2".into(),
    )
}

/// Closed-form memorization time vs a fourth-order Runge–Kutta integration
/// of the margin flow at the given step size.
pub fn check_memorization_time(
    draws: usize,
    tolerance: f64,
    rk4_step: f64,
    seed: u64,
) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "memorization-time", 0));
    let mut max_err = 0.0f64;
    for _ in 0..draws {
        let c = 1.0 + rng.next_f64() * 4.0;
        let m0 = -4.0 + rng.next_f64() * 6.0;
        let target = (m0 + 0.5 + rng.next_f64() * 3.0).min(3.5).max(m0 + 0.5);
        let exact = time_to_memorize(m0, target, c).expect("validated draw");
        let numeric = rk4_time_to_margin(m0, target, c, rk4_step).expect("validated draw");
        max_err = max_err.max(rel_err(numeric, exact));
    }
    CheckOutcome::new(
        "memorization_time_rk4",
        draws,
        max_err,
        tolerance,
        format!("closed-form crossing time vs RK4 at step {rk4_step}"),
    )
}

/// Inverse proportionality of the memorization time in the effective step
/// size: `T(c) / T(k c) = k`, plus the exactly representable
/// `gamma/sigma = 5` case giving a 25x speedup.
pub fn check_time_scale_law(draws: usize, tolerance: f64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "time-scale-law", 0));
    let mut max_err = 0.0f64;
    for _ in 0..draws {
        let c = 0.05 + rng.next_f64() * 3.0;
        let k = 1.0 + rng.next_f64() * 30.0;
        let m0 = -5.0 + rng.next_f64() * 6.0;
        let target = m0 + 0.5 + rng.next_f64() * 8.0;
        let slow = time_to_memorize(m0, target, c).expect("validated draw");
        let fast = time_to_memorize(m0, target, k * c).expect("validated draw");
        max_err = max_err.max(rel_err(slow / fast, k));
    }

    // gamma = 2.5, sigma = 0.5: the ratio 5 and its square 25 are exact in
    // binary floating point, so the 25x speedup must come out exact too.
    let amp = amplification_ratio(2.5, 0.5);
    let slow = time_to_memorize(-2.0, 10.0, 0.2).expect("fixed case");
    let fast = time_to_memorize(-2.0, 10.0, 0.2 * amp).expect("fixed case");
    if amp != 25.0 {
        max_err = f64::INFINITY;
    }
    max_err = max_err.max(rel_err(slow / fast, 25.0));

    CheckOutcome::new(
        "time_scale_law",
        draws + 1,
        max_err,
        tolerance,
        "T(c)/T(kc) = k, including the exact 25x case at gamma/sigma = 5".into(),
    )
}

/// Strict monotone growth and threshold crossing of the discrete margin
/// recursion, with crossing step counts sandwiched by the closed form.
///
/// Crossing the headline margin 20 needs about `e^20 / c` steps, far beyond
/// any wall-clock budget for small `c`, so random draws get a target sized
/// to `budget_steps` (capped at 20) while a single deterministic `c = 10`
/// run crosses the full margin 20. The sandwich makes the check sharp:
/// every step advances `m + e^m` by at least `c` and at most `c * e^c`, so
/// the crossing step count must land in `[T / e^c, ceil(T) + 1]`.
pub fn check_monotone_divergence(draws: usize, budget_steps: u64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "monotone-divergence", 0));
    let mut failures = Vec::new();
    let mut cases = 0usize;

    let mut run_case = |m0: f64, c: f64, target: f64, steps_max: u64| -> Option<String> {
        cases += 1;
        let mut m = m0;
        let mut crossed = None;
        for step in 1..=steps_max {
            let next = m + c * logistic(-m);
            if next <= m {
                return Some(format!("not strictly increasing at c={c}, m={m}"));
            }
            m = next;
            if m >= target {
                crossed = Some(step);
                break;
            }
        }
        let Some(steps) = crossed else {
            return Some(format!("no crossing of {target} within {steps_max} at c={c}"));
        };
        let t = time_to_memorize(m0, target, c).expect("validated case");
        if (steps as f64) > t.ceil() + 1.0 {
            return Some(format!("crossing at {steps} steps exceeds ceil(T)+1 = {}", t.ceil() + 1.0));
        }
        if c <= 0.5 && (steps as f64) < (t / c.exp()).floor() {
            return Some(format!("crossing at {steps} steps beats lower bound T/e^c = {}", t / c.exp()));
        }
        None
    };

    for _ in 0..draws {
        // Log-uniform c over [0.01, 10].
        let c = 0.01 * (rng.next_f64() * (1000.0f64).ln()).exp();
        let m0 = -5.0 + rng.next_f64() * 5.0;
        // Deepest target the step budget can certify for this c.
        let target = (0.9 * budget_steps as f64 * c).ln().min(20.0).max(m0 + 1.0);
        if let Some(err) = run_case(m0, c, target, budget_steps) {
            failures.push(err);
        }
    }
    // Full-depth witness: margin 20 at c = 10 in ~4.9e7 steps.
    if let Some(err) = run_case(-3.0, 10.0, 20.0, 100_000_000) {
        failures.push(err);
    }

    let max_err = if failures.is_empty() { 0.0 } else { f64::INFINITY };
    CheckOutcome::new(
        "monotone_divergence",
        cases,
        max_err,
        0.0,
        if failures.is_empty() {
            format!(
                "strict growth + sandwiched crossings; random targets sized to a {budget_steps}-step budget, full margin-20 witness at c=10"
            )
        } else {
            failures.join("; ")
        },
    )
}

/// Aligned coupled runs: per-step scale updates match the closed form, the
/// amplification factor never decreases, updates decay towards zero, and the
/// final scale ratio exceeds 1.
pub fn check_coupled_dynamics(draws: usize, tolerance: f64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "coupled-dynamics", 0));
    let mut max_err = 0.0f64;
    let mut property_failure = None;

    for draw in 0..draws {
        let a = (0.5 + rng.next_f64() * 0.5) * if rng.coin() { 1.0 } else { -1.0 };
        let label = if rng.coin() { 1.0 } else { -1.0 };
        // Deviation signed so the run is aligned, magnitude > 1.
        let t_mag = 1.2 + rng.next_f64() * 0.8;
        let t_deviation = t_mag * label * a.signum();
        let config = CoupledConfig {
            eta: 0.05 + rng.next_f64() * 0.1,
            a,
            sigma: 0.4 + rng.next_f64() * 0.4,
            t_deviation,
            x_norm_sq: 2.0 + rng.next_f64() * 2.0,
            label,
            gamma0: 1.0,
            margin0: label * a * 1.0 * t_deviation,
            steps_max: 500_000,
            tolerance: 1e-9,
            window: 100,
        };
        assert!(config.aligned(), "draw {draw} must be aligned by construction");
        let run = coupled_dynamics(&config).expect("validated config");
        let steps = &run.steps;

        let mut peak = 0.0f64;
        for pair in steps.windows(2) {
            let predicted =
                config.eta * logistic(-pair[0].margin) * config.a.abs() * t_mag;
            max_err = max_err.max(rel_err(pair[1].delta_gamma, predicted));
            if pair[1].amplification < pair[0].amplification {
                property_failure =
                    Some(format!("amplification decreased in aligned draw {draw}"));
            }
            peak = peak.max(pair[1].delta_gamma);
        }
        let last = steps.last().expect("non-empty run");
        if last.delta_gamma > 1e-3 * peak {
            property_failure = Some(format!(
                "scale updates did not decay in draw {draw}: last {} vs peak {peak}",
                last.delta_gamma
            ));
        }
        if last.gamma / config.sigma <= 1.0 {
            property_failure = Some(format!(
                "final gamma/sigma = {} <= 1 in draw {draw}",
                last.gamma / config.sigma
            ));
        }
    }

    if let Some(err) = property_failure {
        return CheckOutcome::new("coupled_dynamics", draws, f64::INFINITY, tolerance, err);
    }
    CheckOutcome::new(
        "coupled_dynamics",
        draws,
        max_err,
        tolerance,
        "per-step scale updates vs closed form; monotone amplification; decaying updates; final gamma/sigma > 1"
            .into(),
    )
}

/// Squared per-sample gradient-norm ratio measured on the real engine's
/// single-channel replica vs the closed form.
pub fn check_engine_bridge(draws: usize, tolerance: f64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(derive_seed(seed, "engine-bridge", 0));
    let bn_eps = crate::nn::BatchNormLayer::new(1).eps;
    let mut max_err = 0.0f64;
    let mut done = 0usize;
    while done < draws {
        let d = 3 + rng.below(6) as usize;
        let state = ReplicaState {
            w: (0..d).map(|_| rng.normal()).collect(),
            x: (0..d).map(|_| rng.normal_scaled(0.0, 2.0)).collect(),
            a: rng.normal_scaled(0.0, 1.5),
            gamma: 0.3 + rng.next_f64() * 3.0,
            beta: rng.normal_scaled(0.0, 0.5),
            mu: rng.normal(),
            var: 0.05 + rng.next_f64() * 2.0,
            label: rng.below(2) as usize,
        };
        if state.a.abs() < 0.05 {
            continue; // a ratio of two vanishing gradients measures nothing
        }
        // Keep both margins where the engine's softmax residual 1 - p still
        // carries full double precision. Past |margin| ~ 20 the residual's
        // absolute rounding (~1e-16) dominates e^-margin and any comparison
        // measures float noise instead of the gradient path under test.
        let h: f64 = state.w.iter().zip(&state.x).map(|(wi, xi)| wi * xi).sum();
        let sigma_eff = (state.var + bn_eps).sqrt();
        let z_normalized = state.a * (state.gamma * (h - state.mu) / sigma_eff + state.beta);
        let z_plain = state.a * h;
        if z_normalized.abs() > 18.0 || z_plain.abs() > 18.0 {
            continue;
        }
        done += 1;
        let m = single_channel_grad_ratio(&state).expect("validated state");
        max_err = max_err.max(rel_err(m.engine_ratio, m.theory_ratio));
        max_err = max_err.max(rel_err(m.engine_gamma_grad, m.theory_gamma_grad));
    }
    CheckOutcome::new(
        "engine_bridge",
        draws,
        max_err,
        tolerance,
        "engine per-sample gradient-norm ratio and scale gradient vs closed forms".into(),
    )
}

/// All theory checks at their reference draw counts and tolerances.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        check_margin_step_ratio(1000, 1e-12, seed),
        check_memorization_time(100, 1e-4, 1e-4, seed),
        check_time_scale_law(100, 1e-12, seed),
        check_monotone_divergence(200, 300_000, seed),
        check_coupled_dynamics(50, 1e-12, seed),
        check_engine_bridge(100, 1e-6, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_step_ratio_check_passes_at_reference_settings() {
        let outcome = check_margin_step_ratio(1000, 1e-12, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn scale_law_check_passes() {
        let outcome = check_time_scale_law(100, 1e-12, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn coupled_dynamics_check_passes_small() {
        let outcome = check_coupled_dynamics(5, 1e-12, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn engine_bridge_check_passes_small() {
        let outcome = check_engine_bridge(20, 1e-6, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn monotone_divergence_check_passes_small() {
        let outcome = check_monotone_divergence(10, 300_000, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn memorization_time_check_passes_small() {
        let outcome = check_memorization_time(5, 1e-4, 1e-4, 7);
        assert!(outcome.passed, "{outcome:?}");
    }

    #[test]
    fn checks_are_deterministic_per_seed() {
        let a = check_margin_step_ratio(50, 1e-12, 9);
        let b = check_margin_step_ratio(50, 1e-12, 9);
        assert_eq!(a.max_err.to_bits(), b.max_err.to_bits());
    }
}
