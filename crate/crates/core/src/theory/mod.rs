//! Closed-form single-channel model of how a normalization layer rescales
//! the effective slope seen by an outlier sample, and with it the speed at
//! which the sample is memorized.
//!
//! The model: a binary logistic classifier reads one channel,
//! `z = a * h` without normalization and `z = a * (gamma * (h - mu) / sigma + beta)`
//! with it. For an outlier whose pre-activation sits `t` standard deviations
//! from the channel mean, one gradient step on the outlier's loss moves the
//! margin `m = y * z` by
//!
//! ```text
//! delta_m = eta * phi(-m) * s^2 * ||x||^2,      phi(x) = 1 / (1 + e^-x)
//! ```
//!
//! where the effective slope `s` is `a` without normalization and
//! `a * gamma / sigma` with it — an amplification of `(gamma / sigma)^2` per
//! step. Iterating the margin recursion and passing to continuous time gives
//! closed-form memorization times; coupling in the scale parameter's own
//! gradient produces the self-reinforcing loop these tools simulate.

mod bridge;
mod oracle;
mod verify;

pub use bridge::{single_channel_grad_ratio, single_channel_replica, ReplicaState};
pub use oracle::rk4_time_to_margin;
pub use verify::{
    check_coupled_dynamics, check_engine_bridge, check_margin_step_ratio,
    check_memorization_time, check_monotone_divergence, check_time_scale_law, run_all,
    CheckOutcome,
};

use crate::error::{Error, Result};

/// Numerically stable logistic sigmoid `1 / (1 + e^-x)`.
///
/// The loss-derivative factor that appears throughout is `logistic(-m)`:
/// near 1 for badly misclassified samples, decaying like `e^-m` once the
/// margin is large.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Slope multiplying the raw pre-activation in the logit: `a` without
/// normalization, `a * gamma / sigma` with it.
pub fn effective_slope(a: f64, gamma: f64, sigma: f64, normalized: bool) -> f64 {
    if normalized {
        a * gamma / sigma
    } else {
        a
    }
}

/// Margin gain from one gradient step on the outlier's logistic loss,
/// `eta * logistic(-m) * slope^2 * ||x||^2`.
///
/// Exact (not first-order) for a logit linear in the updated weights, which
/// is the frozen-statistics single-channel model.
pub fn margin_step(margin: f64, eta: f64, slope: f64, x_norm_sq: f64) -> f64 {
    eta * logistic(-margin) * slope * slope * x_norm_sq
}

/// Per-step margin-gain ratio of the normalized model over the plain one:
/// `(gamma / sigma)^2`. Also the memorization-speed ratio.
pub fn amplification_ratio(gamma: f64, sigma: f64) -> f64 {
    let r = gamma / sigma;
    r * r
}

/// Gradient of the outlier's loss with respect to the scale parameter:
/// `-y * logistic(-y z) * a * t_hat`, with `t_hat` the sample's normalized
/// pre-activation `(h - mu) / sigma`.
pub fn gamma_gradient(y: f64, z: f64, a: f64, t_hat: f64) -> f64 {
    -y * logistic(-y * z) * a * t_hat
}

/// Squared per-sample gradient-norm ratio (normalized over plain) for the
/// same outlier at margins `margin_bn` / `margin_plain` respectively:
/// `[logistic(-m_bn) / logistic(-m_plain)]^2 * (gamma / sigma)^2`.
pub fn grad_norm_ratio(margin_bn: f64, margin_plain: f64, gamma: f64, sigma: f64) -> f64 {
    let f = logistic(-margin_bn) / logistic(-margin_plain);
    f * f * amplification_ratio(gamma, sigma)
}

/// `m + e^m`, the quantity the continuous-time margin flow advances at a
/// constant rate `c`.
fn margin_potential(m: f64) -> f64 {
    m + m.exp()
}

/// Continuous time for the margin flow `dm/dt = c * logistic(-m)` to travel
/// from `m0` to `target`: `[(M + e^M) - (m0 + e^m0)] / c`.
pub fn time_to_memorize(m0: f64, target: f64, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "effective step size must be finite and positive, got {c}"
        )));
    }
    if !(m0.is_finite() && target.is_finite()) || target < m0 {
        return Err(Error::InvalidArgument(format!(
            "need finite margins with target >= start, got {m0} -> {target}"
        )));
    }
    Ok((margin_potential(target) - margin_potential(m0)) / c)
}

/// Margin reached by the continuous flow after time `t`, by Newton inversion
/// of `m + e^m = m0 + e^m0 + c t` (convex, so Newton from above is monotone).
pub fn margin_at_time(m0: f64, c: f64, t: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) || !t.is_finite() || t < 0.0 || !m0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "margin_at_time needs finite m0, c > 0, t >= 0 (got m0={m0}, c={c}, t={t})"
        )));
    }
    let k = margin_potential(m0) + c * t;
    // Two upper bounds for the root of m + e^m = k: `m0 + c t` always, and
    // `ln k` once k >= 1 (since then e^m <= k). Starting Newton at the
    // smaller keeps e^m from overflowing, and convexity makes the iteration
    // descend monotonically onto the root.
    let mut m = if k >= 1.0 {
        (m0 + c * t).min(k.ln())
    } else {
        m0 + c * t
    };
    for _ in 0..60 {
        let residual = margin_potential(m) - k;
        if residual.abs() <= 1e-12 * (1.0 + k.abs()) {
            break;
        }
        m -= residual / (1.0 + m.exp());
    }
    Ok(m)
}

/// Two-regime closed-form margin estimate: `m0 + c t` while the margin is
/// still deep in the misclassified tail (`<= -4`, where `logistic(-m) ~ 1`),
/// `ln(c t + e^m0)` once it is confidently correct (`>= 4`). Returns `None`
/// in the crossover zone where neither asymptote applies.
pub fn asymptotic_margin(m0: f64, c: f64, t: f64) -> Option<f64> {
    let linear = m0 + c * t;
    if linear <= -4.0 {
        return Some(linear);
    }
    let log_est = (c * t + m0.exp()).ln();
    (log_est >= 4.0).then_some(log_est)
}

/// Long-time margin gap between the normalized and plain models,
/// `2 ln(gamma / sigma)` — the log of the amplification factor.
pub fn margin_gap_limit(gamma: f64, sigma: f64) -> f64 {
    2.0 * (gamma / sigma).ln()
}

/// Iterate the discrete margin recursion `m_{t+1} = m_t + c * logistic(-m_t)`
/// for `steps` steps, returning all `steps + 1` margins including `m0`.
pub fn discrete_trajectory(m0: f64, c: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut m = m0;
    out.push(m);
    for _ in 0..steps {
        m += c * logistic(-m);
        out.push(m);
    }
    out
}

/// Number of discrete recursion steps until the margin first reaches
/// `target`, or `None` if `steps_max` is exhausted first.
///
/// Each step advances the potential `m + e^m` by at least `c` (convexity),
/// so a crossing needs at most `ceil(time_to_memorize)` steps; by at most
/// `c * e^c`, so at least `time_to_memorize / e^c` steps.
pub fn steps_to_cross(m0: f64, c: f64, target: f64, steps_max: u64) -> Option<u64> {
    let mut m = m0;
    for step in 1..=steps_max {
        m += c * logistic(-m);
        if m >= target {
            return Some(step);
        }
    }
    None
}

/// Parameters of the coupled margin / scale-parameter recursion.
#[derive(Debug, Clone)]
pub struct CoupledConfig {
    /// Gradient step size.
    pub eta: f64,
    /// Classifier coefficient reading the channel.
    pub a: f64,
    /// Channel standard deviation (held fixed: the population statistic is
    /// dominated by typical samples, not the one outlier).
    pub sigma: f64,
    /// Outlier deviation in channel standard deviations, signed.
    pub t_deviation: f64,
    /// Squared input norm of the outlier.
    pub x_norm_sq: f64,
    /// Binary label as +1.0 / -1.0.
    pub label: f64,
    pub gamma0: f64,
    pub margin0: f64,
    pub steps_max: usize,
    /// Stop once both per-step increments stay below this for
    /// [`CoupledConfig::window`] consecutive steps.
    pub tolerance: f64,
    pub window: usize,
}

impl CoupledConfig {
    /// A run is aligned when the label, classifier coefficient, and
    /// deviation direction agree — the regime where the scale parameter
    /// grows monotonically.
    pub fn aligned(&self) -> bool {
        self.label * self.a * self.t_deviation > 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("a", self.a),
            ("sigma", self.sigma),
            ("t_deviation", self.t_deviation),
            ("x_norm_sq", self.x_norm_sq),
            ("gamma0", self.gamma0),
            ("margin0", self.margin0),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "coupled dynamics parameter {name} must be finite, got {v}"
                )));
            }
        }
        if self.eta <= 0.0 || self.sigma <= 0.0 || self.x_norm_sq <= 0.0 {
            return Err(Error::InvalidArgument(
                "coupled dynamics needs eta > 0, sigma > 0, x_norm_sq > 0".into(),
            ));
        }
        if self.label != 1.0 && self.label != -1.0 {
            return Err(Error::InvalidArgument(format!(
                "label must be +1 or -1, got {}",
                self.label
            )));
        }
        if self.steps_max == 0 || self.window == 0 {
            return Err(Error::InvalidArgument(
                "steps_max and window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One recorded state of the coupled recursion. `delta_gamma` is the update
/// that produced this state (0 for the initial row).
#[derive(Debug, Clone, Copy)]
pub struct CoupledStep {
    pub step: usize,
    pub margin: f64,
    pub gamma: f64,
    pub delta_gamma: f64,
    /// `(gamma / sigma)^2` at this state.
    pub amplification: f64,
}

/// A finished coupled run.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub steps: Vec<CoupledStep>,
    /// Whether the increments fell below tolerance before `steps_max`.
    pub converged: bool,
}

/// Simulate the self-reinforcing loop between the outlier's margin and the
/// scale parameter:
///
/// ```text
/// delta_gamma_t = eta * y * logistic(-m_t) * a * t      (gradient step on gamma)
/// delta_m_t     = eta * logistic(-m_t) * (a * gamma_t / sigma)^2 * ||x||^2
/// ```
///
/// The margin gain uses the *current* `gamma_t`, so a growing scale
/// parameter feeds back into faster margin growth. In the aligned regime
/// the gamma update equals `eta * logistic(-m_t) * |a| * |t|` and is
/// positive at every step; misaligned runs shrink `gamma` instead (the same
/// signed update, just negative).
pub fn coupled_dynamics(config: &CoupledConfig) -> Result<CoupledRun> {
    config.validate()?;
    let mut gamma = config.gamma0;
    let mut margin = config.margin0;
    let mut steps = Vec::with_capacity(config.steps_max.min(65_536) + 1);
    steps.push(CoupledStep {
        step: 0,
        margin,
        gamma,
        delta_gamma: 0.0,
        amplification: amplification_ratio(gamma, config.sigma),
    });

    let mut quiet = 0usize;
    let mut converged = false;
    for step in 1..=config.steps_max {
        let phi = logistic(-margin);
        let delta_gamma = config.eta * config.label * phi * config.a * config.t_deviation;
        let slope = effective_slope(config.a, gamma, config.sigma, true);
        let delta_margin = margin_step(margin, config.eta, slope, config.x_norm_sq);
        gamma += delta_gamma;
        margin += delta_margin;
        steps.push(CoupledStep {
            step,
            margin,
            gamma,
            delta_gamma,
            amplification: amplification_ratio(gamma, config.sigma),
        });
        if delta_gamma.abs() < config.tolerance && delta_margin.abs() < config.tolerance {
            quiet += 1;
            if quiet >= config.window {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(CoupledRun { steps, converged })
}

/// Render a coupled run as CSV (`step,margin,gamma,delta_gamma,amplification`).
pub fn trajectory_csv(steps: &[CoupledStep]) -> String {
    let mut out = String::from("step,margin,gamma,delta_gamma,amplification\n");
    for s in steps {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.step, s.margin, s.gamma, s.delta_gamma, s.amplification
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::Rng;

    #[test]
    fn logistic_is_stable_and_symmetric() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(800.0) - 1.0).abs() < 1e-300);
        // e^-700 is still a normal f64; e^-800 underflows to zero, and the
        // stable branch must return 0 rather than NaN from 0/0.
        assert!(logistic(-700.0) > 0.0);
        assert!(logistic(-700.0) < 1e-300);
        assert!(logistic(-800.0) >= 0.0);
        assert!(logistic(-800.0) < f64::MIN_POSITIVE);
        for x in [-5.0, -1.3, 0.2, 4.7] {
            assert!((logistic(x) + logistic(-x) - 1.0).abs() < 1e-15);
        }
    }

    /// The margin-step closed form is exact for the single-channel model:
    /// apply the literal weight-space gradient update and re-measure.
    #[test]
    fn margin_step_matches_explicit_weight_update() {
        let mut rng = Rng::new(41);
        for _ in 0..200 {
            let d = 3 + rng.below(5) as usize;
            let w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.normal_scaled(0.0, 2.0)).collect();
            let a = rng.normal_scaled(0.0, 1.5);
            let gamma = 0.2 + rng.next_f64() * 3.0;
            let sigma = 0.2 + rng.next_f64() * 2.0;
            let mu = rng.normal();
            let eta = 0.001 + rng.next_f64() * 0.2;
            let y = if rng.coin() { 1.0 } else { -1.0 };
            let x_norm_sq: f64 = x.iter().map(|v| v * v).sum();

            for normalized in [false, true] {
                let logit = |w: &[f64]| {
                    let h: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum();
                    if normalized {
                        a * gamma * (h - mu) / sigma
                    } else {
                        a * h
                    }
                };
                let m = y * logit(&w);
                let slope = effective_slope(a, gamma, sigma, normalized);
                // One gradient-descent step on w for logistic loss:
                // dl/dw = -y * logistic(-m) * slope * x.
                let coeff = eta * y * logistic(-m) * slope;
                let w2: Vec<f64> = w.iter().zip(&x).map(|(wi, xi)| wi + coeff * xi).collect();
                let observed = y * logit(&w2) - m;
                let predicted = margin_step(m, eta, slope, x_norm_sq);
                // `observed` subtracts two margins of size |m|, so its
                // rounding noise scales with |m|, not with the step itself.
                assert!(
                    (observed - predicted).abs() <= 1e-12 * (1.0 + m.abs()) + 1e-12 * predicted.abs(),
                    "observed {observed} predicted {predicted} at margin {m}"
                );
            }
        }
    }

    #[test]
    fn amplification_is_the_slope_ratio_squared() {
        let mut rng = Rng::new(43);
        for _ in 0..100 {
            let a = rng.normal_scaled(0.0, 2.0);
            let gamma = 0.1 + rng.next_f64() * 4.0;
            let sigma = 0.1 + rng.next_f64() * 2.0;
            let s_bn = effective_slope(a, gamma, sigma, true);
            let s = effective_slope(a, gamma, sigma, false);
            let ratio = (s_bn / s) * (s_bn / s);
            let amp = amplification_ratio(gamma, sigma);
            assert!((ratio - amp).abs() <= 1e-12 * amp.abs());
        }
    }

    /// Frozen expected values for the discrete recursion from m0 = 0, c = 1:
    /// m1 = 0 + logistic(0) = 0.5 exactly, m2 = 0.5 + 1/(1 + e^0.5).
    #[test]
    fn discrete_trajectory_frozen_reference() {
        let traj = discrete_trajectory(0.0, 1.0, 2);
        assert_eq!(traj.len(), 3);
        assert_eq!(traj[0], 0.0);
        assert_eq!(traj[1], 0.5);
        assert!((traj[2] - 0.87754066879814545).abs() < 1e-15);
    }

    #[test]
    fn discrete_trajectory_is_strictly_increasing_and_crosses() {
        for c in [0.05, 0.7, 3.0] {
            let traj = discrete_trajectory(-3.0, c, 4000);
            for pair in traj.windows(2) {
                assert!(pair[1] > pair[0]);
            }
            let crossed = steps_to_cross(-3.0, c, 6.0, 1_000_000).unwrap();
            let t = time_to_memorize(-3.0, 6.0, c).unwrap();
            assert!(crossed as f64 <= t.ceil() + 1.0, "c={c}: {crossed} vs {t}");
            assert!(
                crossed as f64 >= (t / c.exp()).floor(),
                "c={c}: {crossed} vs lower bound {}",
                t / c.exp()
            );
        }
    }

    #[test]
    fn time_scale_law_is_exact() {
        // T is proportional to 1/c, so doubling c halves the time.
        let t1 = time_to_memorize(-2.0, 8.0, 0.5).unwrap();
        let t2 = time_to_memorize(-2.0, 8.0, 1.0).unwrap();
        assert!((t1 / t2 - 2.0).abs() < 1e-12);
        // gamma/sigma = 5 gives a 25x speedup, exactly representable here.
        let amp = amplification_ratio(2.5, 0.5);
        assert_eq!(amp, 25.0);
        let slow = time_to_memorize(-1.0, 10.0, 0.3).unwrap();
        let fast = time_to_memorize(-1.0, 10.0, 0.3 * amp).unwrap();
        assert!((slow / fast - 25.0).abs() < 1e-12);
    }

    #[test]
    fn margin_at_time_inverts_the_closed_form() {
        let mut rng = Rng::new(47);
        for _ in 0..200 {
            let m0 = -6.0 + rng.next_f64() * 8.0;
            let c = 0.05 + rng.next_f64() * 4.0;
            let target = m0 + 0.1 + rng.next_f64() * 10.0;
            let t = time_to_memorize(m0, target, c).unwrap();
            let m = margin_at_time(m0, c, t).unwrap();
            assert!(
                (m - target).abs() < 1e-9 * (1.0 + target.abs()),
                "{m} vs {target}"
            );
        }
        assert_eq!(margin_at_time(-2.0, 1.0, 0.0).unwrap(), -2.0);
    }

    #[test]
    fn asymptotic_regimes_bracket_the_exact_solution() {
        // Deep negative: margin climbs linearly at rate c.
        let m0 = -30.0;
        let c = 0.8;
        for t in [0.0, 5.0, 20.0] {
            let est = asymptotic_margin(m0, c, t).unwrap();
            let exact = margin_at_time(m0, c, t).unwrap();
            assert!((est - exact).abs() < 0.05, "t={t}: {est} vs {exact}");
        }
        // Large positive: logarithmic growth.
        let m0 = 0.5;
        let t = 40_000.0;
        let est = asymptotic_margin(m0, c, t).unwrap();
        let exact = margin_at_time(m0, c, t).unwrap();
        assert!(est >= 4.0);
        assert!((est - exact).abs() < 0.01, "{est} vs {exact}");
        // Crossover zone: no asymptote.
        assert!(asymptotic_margin(-2.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn long_time_margin_gap_approaches_two_log_ratio() {
        let (gamma, sigma) = (3.0, 0.75);
        let c = 0.4;
        let c_bn = c * amplification_ratio(gamma, sigma);
        let t = 1.0e7;
        let gap = margin_at_time(-1.0, c_bn, t).unwrap() - margin_at_time(-1.0, c, t).unwrap();
        assert!(
            (gap - margin_gap_limit(gamma, sigma)).abs() < 1e-3,
            "gap {gap} limit {}",
            margin_gap_limit(gamma, sigma)
        );
    }

    #[test]
    fn aligned_coupled_run_grows_gamma_monotonically() {
        let config = CoupledConfig {
            eta: 0.05,
            a: 1.2,
            sigma: 0.8,
            t_deviation: 3.0,
            x_norm_sq: 2.0,
            label: 1.0,
            gamma0: 1.0,
            margin0: 1.2 * 3.0, // natural start: y * a * gamma0 * t
            steps_max: 200_000,
            tolerance: 1e-9,
            window: 100,
        };
        assert!(config.aligned());
        let run = coupled_dynamics(&config).unwrap();
        let steps = &run.steps;
        for pair in steps.windows(2) {
            assert!(pair[1].gamma > pair[0].gamma);
            assert!(pair[1].amplification >= pair[0].amplification);
            assert!(pair[1].margin > pair[0].margin);
            // The printed update honors the closed form with current margin.
            let predicted = config.eta * logistic(-pair[0].margin) * config.a.abs() * 3.0;
            assert!((pair[1].delta_gamma - predicted).abs() <= 1e-12 * predicted);
        }
        // The loop self-terminates: increments decay towards zero.
        let last = steps.last().unwrap();
        let peak = steps.iter().map(|s| s.delta_gamma).fold(0.0, f64::max);
        assert!(last.delta_gamma < 1e-3 * peak);
        assert!(last.gamma / config.sigma > 1.0);
    }

    #[test]
    fn misaligned_coupled_run_shrinks_gamma() {
        let config = CoupledConfig {
            eta: 0.01,
            a: 1.0,
            sigma: 0.9,
            t_deviation: -2.0, // label and deviation disagree
            x_norm_sq: 1.0,
            label: 1.0,
            gamma0: 1.0,
            margin0: -2.0,
            steps_max: 500,
            tolerance: 1e-12,
            window: 10,
        };
        assert!(!config.aligned());
        let run = coupled_dynamics(&config).unwrap();
        let steps = &run.steps;
        assert!(steps.last().unwrap().gamma < steps[0].gamma);
        assert!(steps.iter().skip(1).all(|s| s.delta_gamma < 0.0));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let config = CoupledConfig {
            eta: 0.1,
            a: 1.0,
            sigma: 1.0,
            t_deviation: 2.0,
            x_norm_sq: 1.0,
            label: 1.0,
            gamma0: 1.0,
            margin0: 0.0,
            steps_max: 5,
            tolerance: 0.0,
            window: 1,
        };
        let run = coupled_dynamics(&config).unwrap();
        let csv = trajectory_csv(&run.steps);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,margin,gamma,delta_gamma,amplification");
        assert_eq!(lines.len(), 1 + run.steps.len());
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(time_to_memorize(0.0, -1.0, 1.0).is_err());
        assert!(time_to_memorize(0.0, 1.0, 0.0).is_err());
        assert!(margin_at_time(0.0, 1.0, -1.0).is_err());
        let mut config = CoupledConfig {
            eta: 0.1,
            a: 1.0,
            sigma: 1.0,
            t_deviation: 2.0,
            x_norm_sq: 1.0,
            label: 0.5,
            gamma0: 1.0,
            margin0: 0.0,
            steps_max: 5,
            tolerance: 0.0,
            window: 1,
        };
        assert!(coupled_dynamics(&config).is_err());
        config.label = 1.0;
        config.sigma = -1.0;
        assert!(coupled_dynamics(&config).is_err());
    }
}
