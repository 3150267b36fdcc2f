//! Scratch pilot for desk-stage direction checks. Not part of the suite.

use std::time::Instant;

use bnmemo::data::{flip_labels, scale_features, synth_blobs, Dataset};
use bnmemo::mia::run_attack;
use bnmemo::mitigation::alpha_sweep;
use bnmemo::nn::{ArchSpec, OptimizerKind, TrainConfig};
use bnmemo::prng::derive_seed;

fn desk_flipped(master: u64, ratio: f64) -> Dataset {
    let blobs = synth_blobs(10, 500, 784, 3.0, derive_seed(master, "data", 0)).unwrap();
    let base = scale_features(&blobs, 0.3).unwrap();
    flip_labels(&base, ratio, derive_seed(master, "flips", 0)).unwrap().0
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();

    if which == "attack" || which.is_empty() {
        let master = 1u64;
        let dataset = desk_flipped(master, 0.05);
        let seed = derive_seed(master, "attack", 0);
        for (lr, epochs) in [(0.1f64, 15usize)] {
            for bn in [true, false] {
                let t0 = Instant::now();
                let arch = ArchSpec::desk(dataset.num_classes, bn);
                let config = TrainConfig {
                    learning_rate: lr,
                    optimizer: OptimizerKind::Sgd,
                    epochs,
                    ..TrainConfig::desk(seed)
                };
                let report = run_attack(&dataset, &arch, 8, &config, 2).unwrap();
                println!(
                    "attack lr={lr} epochs={epochs} bn={bn}: auc={:.4} corrupted_auc={:?} null={:.4} ({:.0} s)",
                    report.auc,
                    report.auc_corrupted_only.map(|a| (a * 1e4).round() / 1e4),
                    report.null_auc,
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }

    if which == "sweep" || which.is_empty() {
        let master = 1u64;
        let dataset = desk_flipped(master, 0.10);
        let arch = ArchSpec::desk(dataset.num_classes, true);
        let config = TrainConfig {
            learning_rate: 0.025,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::desk(derive_seed(master, "mitigate", 0))
        };
        let t0 = Instant::now();
        let rows = alpha_sweep(&dataset, &arch, &[1.0, 0.5], &config, 2).unwrap();
        for r in &rows {
            println!(
                "sweep alpha={:.1}: corrupted={:.3} clean={:.3} ratio_median={:.3}",
                r.alpha, r.corrupted_acc, r.clean_acc, r.median_gamma_sigma
            );
        }
        println!("sweep wall {:.0} s", t0.elapsed().as_secs_f64());
    }
}
