//! Subcommand implementations. Each command loads its config, derives stage
//! seeds from the master seed, runs the library, writes outputs under the
//! output directory, and finishes with a `manifest.json`.

use crate::config::*;
use crate::error::CliError;
use crate::manifest::{sorted_json, ManifestBuilder};
use bnmemo::data::{provenance_csv, save_cache, Dataset};
use bnmemo::influence::{
    compute_influence, influence_csv, ratio_csv, summarize_distribution,
};
use bnmemo::mia::{run_attack, scores_csv, AttackReport};
use bnmemo::mitigation::{alpha_sweep, sweep_csv};
use bnmemo::nn::{
    load_model, save_model, train, EpochTrace, GradScope, Mode, Network, TrainConfig,
};
use bnmemo::prng::derive_seed;
use bnmemo::theory;
use serde::Serialize;
use std::time::Instant;

/// Everything a subcommand needs besides its parsed config.
pub struct RunContext {
    pub command_line: Vec<String>,
    pub out_dir: std::path::PathBuf,
    pub config_path: std::path::PathBuf,
    pub jobs: usize,
}

fn builder_for<C: Serialize>(
    ctx: &RunContext,
    cfg: &C,
    master_seed: u64,
) -> Result<ManifestBuilder, CliError> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let mut b = ManifestBuilder::new(
        ctx.command_line.clone(),
        serde_json::to_value(cfg)?,
        master_seed,
        &ctx.out_dir,
    );
    b.hash_input(&ctx.config_path)?;
    Ok(b)
}

fn hash_inputs(b: &mut ManifestBuilder, files: &[std::path::PathBuf]) -> std::io::Result<()> {
    for f in files {
        b.hash_input(f)?;
    }
    Ok(())
}

fn write_output(b: &mut ManifestBuilder, name: &str, text: &str) -> std::io::Result<()> {
    std::fs::write(b.out_path(name), text)?;
    b.record_output(name);
    Ok(())
}

/// Timed dataset load + corruption, recorded under `data` in the manifest.
fn prepare_dataset(
    b: &mut ManifestBuilder,
    source: &DataSource,
    corruption: &CorruptionSpec,
) -> Result<Dataset, CliError> {
    let start = Instant::now();
    hash_inputs(b, &source.input_files())?;
    hash_inputs(b, &corruption.input_files())?;
    let ds = source.load()?;
    let ds = corruption.apply(&ds)?;
    b.record_timing("data", start.elapsed().as_millis());
    Ok(ds)
}

pub fn cmd_corrupt(ctx: &RunContext, cfg: CorruptCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;
    let ds = prepare_dataset(&mut b, &cfg.dataset, &cfg.corruption)?;
    let name = cfg.output_name.clone().unwrap_or_else(|| ds.name.clone());
    let cache_name = format!("{name}.bnds");
    save_cache(&ds, &b.out_path(&cache_name))?;
    b.record_output(&cache_name);
    write_output(&mut b, &format!("{name}.provenance.csv"), &provenance_csv(&ds))?;
    let corrupted = ds.corrupted_indices().len();
    println!("{}: {} examples ({corrupted} corrupted) -> {cache_name}", ds.name, ds.len());
    b.finish()?;
    Ok(())
}

/// Per-epoch trace rows (`nan` for the corrupted columns of a clean run).
fn trace_csv(trace: &[EpochTrace]) -> String {
    let mut out =
        String::from("epoch,train_loss,clean_loss,clean_acc,corrupted_loss,corrupted_acc\n");
    for t in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.epoch,
            t.train_loss,
            t.clean_loss,
            t.clean_acc,
            t.corrupted_loss.unwrap_or(f64::NAN),
            t.corrupted_acc.unwrap_or(f64::NAN),
        ));
    }
    out
}

/// Side-by-side trace of a normalized/plain pair (same data, same seeds).
fn comparison_csv(bn: &[EpochTrace], plain: &[EpochTrace]) -> String {
    let mut out = String::from(
        "epoch,bn_train_loss,plain_train_loss,bn_clean_acc,plain_clean_acc,\
         bn_corrupted_acc,plain_corrupted_acc,bn_corrupted_loss,plain_corrupted_loss\n",
    );
    for (a, p) in bn.iter().zip(plain) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            a.epoch,
            a.train_loss,
            p.train_loss,
            a.clean_acc,
            p.clean_acc,
            a.corrupted_acc.unwrap_or(f64::NAN),
            p.corrupted_acc.unwrap_or(f64::NAN),
            a.corrupted_loss.unwrap_or(f64::NAN),
            p.corrupted_loss.unwrap_or(f64::NAN),
        ));
    }
    out
}

fn variant_suffix(compare: bool, batch_norm: bool) -> &'static str {
    match (compare, batch_norm) {
        (false, _) => "",
        (true, true) => "_bn",
        (true, false) => "_plain",
    }
}

/// Train one architecture variant; returns the trace and the trained net.
fn train_variant(
    ds: &Dataset,
    arch: &ArchConfig,
    batch_norm: bool,
    train_config: &TrainConfig,
    model_seed: u64,
) -> Result<(Vec<EpochTrace>, Network), bnmemo::Error> {
    let spec = arch.spec(ds.examples[0].features.len(), ds.num_classes, batch_norm);
    let mut net = spec.build(model_seed)?;
    let trace = train(&mut net, ds, train_config)?;
    Ok((trace, net))
}

pub fn cmd_train(ctx: &RunContext, cfg: TrainCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;
    let ds = prepare_dataset(&mut b, &cfg.dataset, &cfg.corruption)?;
    let model_seed = derive_seed(cfg.seed, "model", 0);
    let train_config = cfg.train.to_train_config(derive_seed(cfg.seed, "train", 0))?;

    let compare = cfg.arch.compare_bn;
    let mut traces = Vec::new();
    for batch_norm in cfg.arch.variants() {
        let start = Instant::now();
        let (trace, net) = train_variant(&ds, &cfg.arch, batch_norm, &train_config, model_seed)?;
        let suffix = variant_suffix(compare, batch_norm);
        b.record_timing(&format!("train{suffix}"), start.elapsed().as_millis());
        let model_name = format!("model{suffix}.bin");
        save_model(&net, &b.out_path(&model_name))?;
        b.record_output(&model_name);
        write_output(&mut b, &format!("trace{suffix}.csv"), &trace_csv(&trace))?;
        if let Some(last) = trace.last() {
            println!(
                "{}: clean_acc {:.4}, corrupted_acc {}",
                if batch_norm { "normalized" } else { "plain" },
                last.clean_acc,
                last.corrupted_acc.map_or("n/a".into(), |a| format!("{a:.4}")),
            );
        }
        traces.push(trace);
    }
    if compare {
        write_output(&mut b, "comparison.csv", &comparison_csv(&traces[0], &traces[1]))?;
    }
    b.finish()?;
    Ok(())
}

pub fn cmd_influence(ctx: &RunContext, cfg: InfluenceCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;
    b.hash_input(&cfg.model)?;
    let ds = prepare_dataset(&mut b, &cfg.dataset, &cfg.corruption)?;
    let scope = match cfg.scope.as_str() {
        "all_params" => GradScope::AllParams,
        "first_dense_weights" => GradScope::FirstDenseWeights,
        other => {
            return Err(CliError::Config(format!(
                "scope must be \"all_params\" or \"first_dense_weights\", got \"{other}\""
            )))
        }
    };
    let mut net = load_model(&cfg.model)?;
    // Per-sample gradients use the frozen statistics of each example's
    // containing batch, the convention the manifest declares.
    net.set_mode(Mode::Train);

    let start = Instant::now();
    let records = compute_influence(
        &net,
        &ds,
        cfg.batch_size,
        derive_seed(cfg.seed, "influence", 0),
        scope,
    )?;
    b.record_timing("influence", start.elapsed().as_millis());

    write_output(&mut b, "influence.csv", &influence_csv(&records))?;
    let grouped = ds.examples.iter().any(|e| !e.provenance.is_clean());
    let summary = summarize_distribution(&records, grouped)?;
    write_output(&mut b, "summary.json", &sorted_json(&summary))?;
    if net.has_batch_norm() {
        write_output(&mut b, "gamma_sigma.csv", &ratio_csv(&net))?;
    }
    for g in &summary.groups {
        println!("{}: {} examples, median grad norm {:.6e}", g.group, g.count, g.median);
    }
    b.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct TheoryReport {
    all_passed: bool,
    checks: Vec<bnmemo::theory::CheckOutcome>,
}

pub fn cmd_theory(ctx: &RunContext, cfg: TheoryCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;

    let start = Instant::now();
    let checks = theory::run_all(cfg.seed);
    b.record_timing("verify", start.elapsed().as_millis());
    let all_passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "{}: {} ({} cases, max err {:.3e} vs tol {:.3e})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.cases,
            c.max_err,
            c.tolerance,
        );
    }
    let report = TheoryReport { all_passed, checks };
    write_output(&mut b, "theory_report.json", &sorted_json(&report))?;

    // Reference trajectory of the coupled scale/margin loop in the aligned
    // regime: the scale parameter climbs while the margin races upward.
    let run = theory::coupled_dynamics(&theory::CoupledConfig {
        eta: 0.01,
        a: 1.0,
        sigma: 0.5,
        t_deviation: 4.0,
        x_norm_sq: 1.0,
        label: 1.0,
        gamma0: 1.0,
        margin0: -3.0,
        steps_max: cfg.trajectory_steps,
        tolerance: 1e-9,
        window: 10,
    })?;
    write_output(&mut b, "coupled_trajectory.csv", &theory::trajectory_csv(&run.steps))?;

    // Margin recursions at the plain and amplified rates, side by side. The
    // amplified rate uses a scale/deviation ratio of 5, i.e. a 25x larger
    // effective step.
    let c_plain = 1e-3;
    let amp = theory::amplification_ratio(2.5, 0.5);
    let plain = theory::discrete_trajectory(-3.0, c_plain, cfg.trajectory_steps);
    let fast = theory::discrete_trajectory(-3.0, c_plain * amp, cfg.trajectory_steps);
    let mut csv = String::from("step,margin_plain,margin_amplified\n");
    for (i, (mp, mb)) in plain.iter().zip(&fast).enumerate() {
        csv.push_str(&format!("{i},{mp},{mb}\n"));
    }
    write_output(&mut b, "margin_trajectory.csv", &csv)?;

    b.finish()?;
    if !all_passed {
        return Err(CliError::Numeric(
            "theory verification failed; see theory_report.json".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct AttackComparison {
    auc_bn: f64,
    auc_plain: f64,
    auc_gap: f64,
    auc_corrupted_only_bn: Option<f64>,
    auc_corrupted_only_plain: Option<f64>,
    null_auc_bn: f64,
    null_auc_plain: f64,
}

pub fn cmd_attack(ctx: &RunContext, cfg: AttackCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;
    let ds = prepare_dataset(&mut b, &cfg.dataset, &cfg.corruption)?;
    let train_config = cfg.train.to_train_config(derive_seed(cfg.seed, "attack", 0))?;

    let compare = cfg.arch.compare_bn;
    let mut reports: Vec<AttackReport> = Vec::new();
    for batch_norm in cfg.arch.variants() {
        let spec = cfg
            .arch
            .spec(ds.examples[0].features.len(), ds.num_classes, batch_norm);
        let start = Instant::now();
        let report = run_attack(&ds, &spec, cfg.num_shadows, &train_config, ctx.jobs)?;
        let suffix = variant_suffix(compare, batch_norm);
        b.record_timing(&format!("attack{suffix}"), start.elapsed().as_millis());
        write_output(&mut b, &format!("attack_report{suffix}.json"), &sorted_json(&report))?;
        write_output(&mut b, &format!("scores{suffix}.csv"), &scores_csv(&report, &ds))?;
        println!(
            "{}: auc {:.4} (null {:.4}, {} shadows)",
            report.architecture, report.auc, report.null_auc, report.num_shadows,
        );
        reports.push(report);
    }
    if compare {
        let (bn, plain) = (&reports[0], &reports[1]);
        let comparison = AttackComparison {
            auc_bn: bn.auc,
            auc_plain: plain.auc,
            auc_gap: bn.auc - plain.auc,
            auc_corrupted_only_bn: bn.auc_corrupted_only,
            auc_corrupted_only_plain: plain.auc_corrupted_only,
            null_auc_bn: bn.null_auc,
            null_auc_plain: plain.null_auc,
        };
        write_output(&mut b, "comparison.json", &sorted_json(&comparison))?;
    }
    b.finish()?;
    Ok(())
}

pub fn cmd_mitigate(ctx: &RunContext, cfg: MitigateCmdConfig) -> Result<(), CliError> {
    let mut b = builder_for(ctx, &cfg, cfg.seed)?;
    let ds = prepare_dataset(&mut b, &cfg.dataset, &cfg.corruption)?;
    if !cfg.arch.batch_norm {
        return Err(CliError::Config(
            "the regularizer sweep needs `arch.batch_norm: true`".into(),
        ));
    }
    let spec = cfg
        .arch
        .spec(ds.examples[0].features.len(), ds.num_classes, true);
    let mut train_config = cfg.train.to_train_config(derive_seed(cfg.seed, "mitigate", 0))?;
    train_config.mitigation_variant = cfg.train.mitigation_variant;

    let start = Instant::now();
    let rows = alpha_sweep(&ds, &spec, &cfg.alphas, &train_config, ctx.jobs)?;
    b.record_timing("sweep", start.elapsed().as_millis());
    for r in &rows {
        println!(
            "alpha {:.2}: corrupted_acc {:.4}, clean_acc {:.4}, median ratio {:.4}",
            r.alpha, r.corrupted_acc, r.clean_acc, r.median_gamma_sigma,
        );
    }
    write_output(&mut b, "alpha_sweep.csv", &sweep_csv(&rows))?;
    b.finish()?;
    Ok(())
}
