//! Membership inference by likelihood ratio: shadow ensembles, per-example
//! Gaussian fits on a logit-scaled confidence signal, ROC/AUC reporting.
//!
//! The pipeline trains `num_shadows + 1` models on random halves of the
//! dataset (model 0 is the target), scores every example's confidence under
//! every model, fits per-example in/out Gaussians with one globally pooled
//! variance, and thresholds the log-likelihood ratio Λ. All randomness —
//! splits, initializations, batch orders — derives from a single seed, so a
//! normalized and an unnormalized run with the same seed consume identical
//! splits and differ only in architecture.

use crate::data::{split_for_shadows, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::{eval_forward, train, ArchSpec, Network, TrainConfig};
use crate::prng::{derive_seed, Rng};
use std::collections::BTreeMap;

/// Probability clamp that keeps the logit transform finite.
const CONFIDENCE_CLAMP: f64 = 1e-7;
/// Floor for the pooled variance so Λ stays finite on degenerate signals.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Logit-scaled confidence `ln(p / (1 − p))` with `p` clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn logit_confidence(p: f64) -> f64 {
    let p = p.clamp(CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Confidence signal of every example: the logit-scaled softmax probability
/// of the true class under an evaluation-mode pass.
pub fn confidence_signals(net: &Network, dataset: &Dataset, batch_size: usize) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut out = Vec::with_capacity(dataset.len());
    for batch in all.chunks(batch_size) {
        let features = dataset.features_of(batch);
        let labels = dataset.labels_of(batch);
        let (_, _, caches) = eval_forward(net, &features, &labels)?;
        for (row, &label) in labels.iter().enumerate() {
            out.push(logit_confidence(caches.probs.row(row)[label]));
        }
    }
    Ok(out)
}

/// Per-example membership evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipScore {
    pub example_index: usize,
    /// Log-likelihood ratio `ln N(s | in) − ln N(s | out)`; positive favors
    /// membership.
    pub lambda: f64,
    /// Shadows that contained the example.
    pub n_in: usize,
    /// Shadows that excluded it.
    pub n_out: usize,
}

/// Fit per-example in/out Gaussians to shadow signals and score the target.
///
/// `shadow_signals[j][e]` is shadow `j`'s confidence on example `e`,
/// `shadow_in[j][e]` says whether shadow `j` trained on `e`, and
/// `target_signals[e]` is the target model's confidence. The two Gaussians of
/// an example share one variance, pooled over every (example, shadow)
/// deviation from its side mean — per-example variances are too unstable at
/// desk-scale ensemble sizes. An example that some side never saw falls back
/// to that side's global mean signal.
pub fn fit_and_score(
    shadow_signals: &[Vec<f64>],
    shadow_in: &[Vec<bool>],
    target_signals: &[f64],
) -> Result<Vec<MembershipScore>> {
    let num_shadows = shadow_signals.len();
    if num_shadows < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 shadow models, got {num_shadows}"
        )));
    }
    if shadow_in.len() != num_shadows {
        return Err(Error::ShapeMismatch {
            context: "fit_and_score",
            expected: format!("{num_shadows} membership masks"),
            found: format!("{}", shadow_in.len()),
        });
    }
    let n = target_signals.len();
    for (j, (sig, mask)) in shadow_signals.iter().zip(shadow_in).enumerate() {
        if sig.len() != n || mask.len() != n {
            return Err(Error::ShapeMismatch {
                context: "fit_and_score",
                expected: format!("{n} signals and mask entries"),
                found: format!("{} / {} in shadow {j}", sig.len(), mask.len()),
            });
        }
    }

    // Per-example side means.
    let mut mu_in = vec![0.0; n];
    let mut mu_out = vec![0.0; n];
    let mut n_in = vec![0usize; n];
    let mut n_out = vec![0usize; n];
    for (sig, mask) in shadow_signals.iter().zip(shadow_in) {
        for e in 0..n {
            if mask[e] {
                mu_in[e] += sig[e];
                n_in[e] += 1;
            } else {
                mu_out[e] += sig[e];
                n_out[e] += 1;
            }
        }
    }
    // Global side means cover examples one side never saw.
    let total_in: f64 = mu_in.iter().sum();
    let total_out: f64 = mu_out.iter().sum();
    let count_in: usize = n_in.iter().sum();
    let count_out: usize = n_out.iter().sum();
    let global_in = if count_in > 0 { total_in / count_in as f64 } else { 0.0 };
    let global_out = if count_out > 0 { total_out / count_out as f64 } else { 0.0 };
    for e in 0..n {
        mu_in[e] = if n_in[e] > 0 { mu_in[e] / n_in[e] as f64 } else { global_in };
        mu_out[e] = if n_out[e] > 0 { mu_out[e] / n_out[e] as f64 } else { global_out };
    }

    // One pooled variance across all observations and both sides.
    let mut sq_dev = 0.0;
    for (sig, mask) in shadow_signals.iter().zip(shadow_in) {
        for e in 0..n {
            let d = sig[e] - if mask[e] { mu_in[e] } else { mu_out[e] };
            sq_dev += d * d;
        }
    }
    let pooled_var = (sq_dev / (num_shadows * n) as f64).max(VARIANCE_FLOOR);

    Ok((0..n)
        .map(|e| {
            let s = target_signals[e];
            let d_in = s - mu_in[e];
            let d_out = s - mu_out[e];
            MembershipScore {
                example_index: e,
                // Shared variance cancels the normalization constants.
                lambda: (d_out * d_out - d_in * d_in) / (2.0 * pooled_var),
                n_in: n_in[e],
                n_out: n_out[e],
            }
        })
        .collect())
}

/// Receiver operating characteristic of a score-thresholding test.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` points from (0,0) to (1,1), both coordinates
    /// non-decreasing, one step per distinct score.
    pub points: Vec<(f64, f64)>,
    /// Area under the curve — the tie-aware rank statistic, which equals the
    /// trapezoidal integral of `points`.
    pub auc: f64,
    /// Highest TPR at FPR ≤ each requested level.
    pub tpr_at_fpr: BTreeMap<String, f64>,
}

/// FPR levels reported by [`roc_from_scores`].
pub const FPR_LEVELS: [f64; 3] = [0.001, 0.01, 0.1];

/// Build the ROC of "score ≥ threshold ⇒ member" over all thresholds.
///
/// Equal scores collapse into a single threshold step, so ties trace the
/// diagonal and two identical score lists give AUC exactly 0.5. The AUC is
/// computed as the tie-aware rank statistic (pairs won plus half the pairs
/// tied), which is the exact area of the trapezoid chain.
pub fn roc_from_scores(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<RocCurve> {
    if member_scores.is_empty() || nonmember_scores.is_empty() {
        return Err(Error::InvalidArgument(
            "ROC needs nonempty member and nonmember score lists".into(),
        ));
    }
    let nm = member_scores.len();
    let nn = nonmember_scores.len();

    // Points: sweep thresholds from +inf downward over distinct scores.
    let mut tagged: Vec<(f64, bool)> = member_scores
        .iter()
        .map(|&s| (s, true))
        .chain(nonmember_scores.iter().map(|&s| (s, false)))
        .collect();
    if tagged.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite {
            context: "membership scores".into(),
        });
    }
    tagged.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("no NaN scores"));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < tagged.len() {
        let v = tagged[i].0;
        while i < tagged.len() && tagged[i].0 == v {
            if tagged[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / nn as f64, tp as f64 / nm as f64));
    }

    // Tie-aware rank AUC: wins + half-ties over all member/nonmember pairs.
    let mut wins = 0u64;
    let mut ties = 0u64;
    let mut sorted_non: Vec<f64> = nonmember_scores.to_vec();
    sorted_non.sort_by(|a, b| a.partial_cmp(b).expect("no NaN scores"));
    for &m in member_scores {
        let below = sorted_non.partition_point(|&x| x < m);
        let not_above = sorted_non.partition_point(|&x| x <= m);
        wins += below as u64;
        ties += (not_above - below) as u64;
    }
    let auc = (2 * wins + ties) as f64 / (2 * (nm as u64) * (nn as u64)) as f64;

    let mut tpr_at_fpr = BTreeMap::new();
    for level in FPR_LEVELS {
        let tpr = points
            .iter()
            .filter(|(fpr, _)| *fpr <= level)
            .map(|&(_, tpr)| tpr)
            .fold(0.0, f64::max);
        tpr_at_fpr.insert(format!("{level}"), tpr);
    }
    Ok(RocCurve {
        points,
        auc,
        tpr_at_fpr,
    })
}

/// Mean AUC after repeatedly permuting the membership labels — the
/// exchangeability null, which must hover at 1/2 for any score set.
pub fn permutation_null_auc(
    scores: &[f64],
    num_members: usize,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if num_members == 0 || num_members >= scores.len() {
        return Err(Error::InvalidArgument(
            "permutation null needs both members and nonmembers".into(),
        ));
    }
    if permutations == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let mut pool: Vec<f64> = scores.to_vec();
    let mut rng = Rng::new(derive_seed(seed, "permutation-null", 0));
    let mut sum = 0.0;
    for _ in 0..permutations {
        rng.shuffle(&mut pool);
        let roc = roc_from_scores(&pool[..num_members], &pool[num_members..])?;
        sum += roc.auc;
    }
    Ok(sum / permutations as f64)
}

/// Everything a paired privacy audit reports for one architecture.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AttackReport {
    pub architecture: String,
    pub num_shadows: usize,
    pub seed: u64,
    pub auc: f64,
    pub tpr_at: BTreeMap<String, f64>,
    /// AUC over corrupted-provenance examples only; `None` when the dataset
    /// is fully clean or one side has no corrupted examples.
    pub auc_corrupted_only: Option<f64>,
    /// Mean AUC over 100 membership-label permutations (exchangeability
    /// null; should sit at 1/2).
    pub null_auc: f64,
    #[serde(skip)]
    pub scores: Vec<MembershipScore>,
    /// Target-model membership per example.
    #[serde(skip)]
    pub member: Vec<bool>,
}

/// Train a target plus `num_shadows` shadows and score every example.
///
/// Model `k` trains on the examples of split mask `k` (model 0 is the
/// target) with seed `derive_seed(seed, "shadow-train", k)`; the splits
/// themselves depend only on `(seed, dataset size, num_shadows)`, so runs
/// that differ only in `arch` are exactly paired. `jobs` caps concurrent
/// trainings without affecting any output bit.
pub fn run_attack(
    dataset: &Dataset,
    arch: &ArchSpec,
    num_shadows: usize,
    config: &TrainConfig,
    jobs: usize,
) -> Result<AttackReport> {
    if num_shadows < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 shadow models, got {num_shadows}"
        )));
    }
    dataset.validate()?;
    let masks = split_for_shadows(dataset, num_shadows + 1, config.seed)?;

    let num_models = num_shadows + 1;
    let jobs = jobs.max(1).min(num_models);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<Vec<f64>>>>> =
        (0..num_models).map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= num_models {
                    break;
                }
                *slots[k].lock().expect("attack slot") =
                    Some(train_and_sign(dataset, arch, &masks[k], config, k));
            });
        }
    });

    let mut signals = Vec::with_capacity(num_models);
    for (k, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("attack slot").expect("every slot filled") {
            Ok(s) => signals.push(s),
            Err(e) => {
                return Err(Error::Model(format!("model {k} failed: {e}")));
            }
        }
    }

    let target_signals = signals.remove(0);
    let member = masks[0].clone();
    let scores = fit_and_score(&signals, &masks[1..], &target_signals)?;

    let lambda_of = |keep: &dyn Fn(usize) -> bool| -> (Vec<f64>, Vec<f64>) {
        let mut m = Vec::new();
        let mut nm = Vec::new();
        for s in &scores {
            if keep(s.example_index) {
                if member[s.example_index] {
                    m.push(s.lambda);
                } else {
                    nm.push(s.lambda);
                }
            }
        }
        (m, nm)
    };

    let (member_lambdas, nonmember_lambdas) = lambda_of(&|_| true);
    let roc = roc_from_scores(&member_lambdas, &nonmember_lambdas)?;

    let (corr_m, corr_nm) =
        lambda_of(&|e| !dataset.examples[e].provenance.is_clean());
    let auc_corrupted_only = if corr_m.is_empty() || corr_nm.is_empty() {
        None
    } else {
        Some(roc_from_scores(&corr_m, &corr_nm)?.auc)
    };

    let all_lambdas: Vec<f64> = scores.iter().map(|s| s.lambda).collect();
    let null_auc =
        permutation_null_auc(&all_lambdas, member_lambdas.len(), 100, config.seed)?;

    Ok(AttackReport {
        architecture: if arch.batch_norm { "batch_norm".into() } else { "plain".into() },
        num_shadows,
        seed: config.seed,
        auc: roc.auc,
        tpr_at: roc.tpr_at_fpr,
        auc_corrupted_only,
        null_auc,
        scores,
        member,
    })
}

fn train_and_sign(
    dataset: &Dataset,
    arch: &ArchSpec,
    mask: &[bool],
    config: &TrainConfig,
    model_index: usize,
) -> Result<Vec<f64>> {
    let subset = Dataset {
        name: format!("{}-model-{model_index}", dataset.name),
        num_classes: dataset.num_classes,
        examples: dataset
            .examples
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(e, _)| e.clone())
            .collect(),
    };
    let model_seed = derive_seed(config.seed, "shadow-train", model_index as u64);
    let mut net = arch.build(model_seed)?;
    let mut cfg = config.clone();
    cfg.seed = model_seed;
    train(&mut net, &subset, &cfg)?;
    confidence_signals(&net, dataset, 256)
}

/// Render per-example scores as CSV
/// (`example_index,lambda,member,provenance,n_in,n_out`).
pub fn scores_csv(report: &AttackReport, dataset: &Dataset) -> String {
    let mut out = String::from("example_index,lambda,member,provenance,n_in,n_out\n");
    for s in &report.scores {
        let p = match &dataset.examples[s.example_index].provenance {
            Provenance::Clean => "clean",
            Provenance::FlippedLabel { .. } => "flipped_label",
            Provenance::InjectedOod { .. } => "injected_ood",
        };
        out.push_str(&format!(
            "{},{},{},{p},{},{}\n",
            s.example_index,
            s.lambda,
            report.member[s.example_index],
            s.n_in,
            s.n_out
        ));
    }
    out
}
