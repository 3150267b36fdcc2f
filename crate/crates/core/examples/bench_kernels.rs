//! Quick throughput check of the three matrix kernels at the shapes the desk
//! architecture trains with. Run with `--release` (or the workspace's
//! optimized dev profile) to confirm the build is fast enough for the
//! experiment suite.

use bnmemo::prng::Rng;
use bnmemo::tensor::{accumulate_outer, matmul_nn, matmul_nt, Tensor};
use std::time::Instant;

fn rand_t(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    let data: Vec<f64> = (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_vec(&[r, c], data).unwrap()
}

fn main() {
    let mut rng = Rng::new(1);
    // Layer-1 shapes of the desk architecture: batch 256, 784 -> 256 units.
    let x = rand_t(&mut rng, 256, 784);
    let w = rand_t(&mut rng, 256, 784); // units x inputs
    let g = rand_t(&mut rng, 256, 256);

    let flop = 2.0 * 256.0 * 256.0 * 784.0;
    let reps = 200;

    let t0 = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        let y = matmul_nt(&x, &w);
        sink += y.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "matmul_nt   (forward)        {:7.2} Gflop/s   (sink {sink:.3})",
        flop * reps as f64 / dt / 1e9
    );

    let t0 = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        let y = matmul_nn(&g, &w); // 256x256 . 256x784
        sink += y.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "matmul_nn   (grad wrt input) {:7.2} Gflop/s   (sink {sink:.3})",
        flop * reps as f64 / dt / 1e9
    );

    let t0 = Instant::now();
    let mut out = Tensor::zeros(&[256, 784]);
    for _ in 0..reps {
        accumulate_outer(&g, &x, &mut out);
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "accum_outer (grad wrt W)     {:7.2} Gflop/s   (sink {:.3})",
        flop * reps as f64 / dt / 1e9,
        out.data()[0]
    );
}
