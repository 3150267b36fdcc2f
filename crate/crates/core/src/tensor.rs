//! Dense row-major `f64` tensors and the matrix kernels the engine trains with.
//!
//! The kernels are plain safe Rust written so LLVM autovectorizes them (FMA on
//! the build machine's vector width). Three access patterns cover everything
//! the engine needs without ever materializing a transpose:
//!
//! * [`matmul_nt`] — `A · Bᵀ` as row-by-row dot products (layer forward).
//! * [`matmul_nn`] — `A · B` in axpy form streaming rows of `B` (gradient
//!   backpropagation through a weight matrix).
//! * [`accumulate_outer`] — `out += Gᵀ · X` (weight-gradient accumulation).

use crate::error::{Error, Result};

/// Dense tensor of `f64` in row-major order.
///
/// Invariant: `shape.iter().product() == data.len()`. Engine-produced tensors
/// additionally contain only finite values; operations that could surface
/// NaN/Inf validate at their boundaries and return an error instead of
/// propagating poison.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// All-zeros tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Wrap `data` with the given shape, checking the length invariant.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: format!("{expected} elements for shape {shape:?}"),
                found: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Tensor shape (row-major).
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Flat data slice in row-major order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable flat data slice.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows; panics unless 2-D.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() requires a 2-D tensor");
        self.shape[0]
    }

    /// Number of columns; panics unless 2-D.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() requires a 2-D tensor");
        self.shape[1]
    }

    /// Row `i` of a 2-D tensor.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    /// Mutable row `i` of a 2-D tensor.
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Error unless every element is finite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }
}

/// Dot product with an unrolled accumulator bank (vectorizes to FMA).
#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; 8];
    let mut xc = x.chunks_exact(8);
    let mut yc = y.chunks_exact(8);
    for (xv, yv) in (&mut xc).zip(&mut yc) {
        for l in 0..8 {
            // mul_add guarantees a fused multiply-add instruction.
            acc[l] = xv[l].mul_add(yv[l], acc[l]);
        }
    }
    let mut tail = 0.0;
    for (a, b) in xc.remainder().iter().zip(yc.remainder()) {
        tail = a.mul_add(*b, tail);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Four simultaneous dot products sharing one pass over `y`.
///
/// Register-blocked building block of [`matmul_nt`]: each cache line of `y`
/// feeds four independent FMA chains, which is what pulls the product from
/// memory-bound to compute-bound on the shapes the engine uses.
#[inline]
fn dot4(x0: &[f64], x1: &[f64], x2: &[f64], x3: &[f64], y: &[f64]) -> [f64; 4] {
    let n = y.len();
    let mut acc = [[0.0f64; 8]; 4];
    let mut kk = 0;
    while kk + 8 <= n {
        let yv = &y[kk..kk + 8];
        let (c0, c1, c2, c3) = (
            &x0[kk..kk + 8],
            &x1[kk..kk + 8],
            &x2[kk..kk + 8],
            &x3[kk..kk + 8],
        );
        for l in 0..8 {
            acc[0][l] = c0[l].mul_add(yv[l], acc[0][l]);
            acc[1][l] = c1[l].mul_add(yv[l], acc[1][l]);
            acc[2][l] = c2[l].mul_add(yv[l], acc[2][l]);
            acc[3][l] = c3[l].mul_add(yv[l], acc[3][l]);
        }
        kk += 8;
    }
    let mut out = [0.0f64; 4];
    for (r, accr) in out.iter_mut().zip(&acc) {
        *r = ((accr[0] + accr[1]) + (accr[2] + accr[3]))
            + ((accr[4] + accr[5]) + (accr[6] + accr[7]));
    }
    for t in kk..n {
        out[0] = x0[t].mul_add(y[t], out[0]);
        out[1] = x1[t].mul_add(y[t], out[1]);
        out[2] = x2[t].mul_add(y[t], out[2]);
        out[3] = x3[t].mul_add(y[t], out[3]);
    }
    out
}

/// `y += alpha * x` (vectorizes to FMA).
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi.mul_add(alpha, *yi);
    }
}

/// Four simultaneous axpy updates sharing one pass over `x`.
#[inline]
fn axpy4(
    alpha: [f64; 4],
    x: &[f64],
    y0: &mut [f64],
    y1: &mut [f64],
    y2: &mut [f64],
    y3: &mut [f64],
) {
    let n = x.len();
    let mut kk = 0;
    while kk + 8 <= n {
        let xv = &x[kk..kk + 8];
        let (d0, d1, d2, d3) = (
            &mut y0[kk..kk + 8],
            &mut y1[kk..kk + 8],
            &mut y2[kk..kk + 8],
            &mut y3[kk..kk + 8],
        );
        for l in 0..8 {
            d0[l] = xv[l].mul_add(alpha[0], d0[l]);
            d1[l] = xv[l].mul_add(alpha[1], d1[l]);
            d2[l] = xv[l].mul_add(alpha[2], d2[l]);
            d3[l] = xv[l].mul_add(alpha[3], d3[l]);
        }
        kk += 8;
    }
    for t in kk..n {
        y0[t] = x[t].mul_add(alpha[0], y0[t]);
        y1[t] = x[t].mul_add(alpha[1], y1[t]);
        y2[t] = x[t].mul_add(alpha[2], y2[t]);
        y3[t] = x[t].mul_add(alpha[3], y3[t]);
    }
}

/// Split a 2-D tensor's storage into four consecutive mutable rows starting
/// at `i`.
#[inline]
fn four_rows_mut(data: &mut [f64], cols: usize, i: usize) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
    let (r0, rest) = data[i * cols..].split_at_mut(cols);
    let (r1, rest) = rest.split_at_mut(cols);
    let (r2, rest) = rest.split_at_mut(cols);
    let (r3, _) = rest.split_at_mut(cols);
    (r0, r1, r2, r3)
}

/// `A (m×k) · Bᵀ (k×n from B n×k)` → `m×n`.
///
/// Both operands are read along contiguous rows, so this is the layout-friendly
/// product for `activations · weightsᵀ`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape().len(), 2, "matmul_nt lhs must be 2-D");
    assert_eq!(b.shape().len(), 2, "matmul_nt rhs must be 2-D");
    assert_eq!(
        a.cols(),
        b.cols(),
        "matmul_nt inner dimensions disagree: {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let (m, n) = (a.rows(), b.rows());
    let mut out = Tensor::zeros(&[m, n]);
    let mut i = 0;
    // Blocks of four lhs rows share each pass over a rhs row.
    while i + 4 <= m {
        let (a0, a1, a2, a3) = (a.row(i), a.row(i + 1), a.row(i + 2), a.row(i + 3));
        for j in 0..n {
            let d = dot4(a0, a1, a2, a3, b.row(j));
            for l in 0..4 {
                out.row_mut(i + l)[j] = d[l];
            }
        }
        i += 4;
    }
    while i < m {
        let ar = a.row(i);
        let or = out.row_mut(i);
        for (j, oj) in or.iter_mut().enumerate() {
            *oj = dot(ar, b.row(j));
        }
        i += 1;
    }
    out
}

/// `A (m×k) · B (k×n)` → `m×n`, streaming rows of `B`.
pub fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape().len(), 2, "matmul_nn lhs must be 2-D");
    assert_eq!(b.shape().len(), 2, "matmul_nn rhs must be 2-D");
    assert_eq!(
        a.cols(),
        b.rows(),
        "matmul_nn inner dimensions disagree: {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let (m, n) = (a.rows(), b.cols());
    let k = a.cols();
    let mut out = Tensor::zeros(&[m, n]);
    let mut i = 0;
    // Blocks of four output rows share each pass over a rhs row.
    while i + 4 <= m {
        let (o0, o1, o2, o3) = four_rows_mut(out.data_mut(), n, i);
        for kk in 0..k {
            let alpha = [
                a.row(i)[kk],
                a.row(i + 1)[kk],
                a.row(i + 2)[kk],
                a.row(i + 3)[kk],
            ];
            axpy4(alpha, b.row(kk), o0, o1, o2, o3);
        }
        i += 4;
    }
    while i < m {
        let or = out.row_mut(i);
        for (kk, &aik) in a.row(i).iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(kk), or);
            }
        }
        i += 1;
    }
    out
}

/// `out (n×k) += Gᵀ (n×B from G B×n) · X (B×k)`.
///
/// Sample-blocked so the slab of `X` rows being combined stays cache-resident
/// while each output row is revisited.
pub fn accumulate_outer(g: &Tensor, x: &Tensor, out: &mut Tensor) {
    assert_eq!(g.rows(), x.rows(), "accumulate_outer batch sizes disagree");
    assert_eq!(out.rows(), g.cols(), "accumulate_outer output rows disagree");
    assert_eq!(out.cols(), x.cols(), "accumulate_outer output cols disagree");
    let batch = g.rows();
    let n = g.cols();
    let kcols = x.cols();
    const BLOCK: usize = 32;
    let mut start = 0;
    while start < batch {
        let end = (start + BLOCK).min(batch);
        let mut j = 0;
        // Tiles of four output rows share each pass over a sample row.
        while j + 4 <= n {
            let (o0, o1, o2, o3) = four_rows_mut(out.data_mut(), kcols, j);
            for b in start..end {
                let gr = g.row(b);
                let alpha = [gr[j], gr[j + 1], gr[j + 2], gr[j + 3]];
                axpy4(alpha, x.row(b), o0, o1, o2, o3);
            }
            j += 4;
        }
        while j < n {
            let oj = out.row_mut(j);
            for b in start..end {
                let gbj = g.row(b)[j];
                if gbj != 0.0 {
                    axpy(gbj, x.row(b), oj);
                }
            }
            j += 1;
        }
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::Rng;

    /// Deliberately naive triple loop used as the independent product oracle.
    fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (m, k, n) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; n]; m];
        for i in 0..m {
            for j in 0..n {
                for t in 0..k {
                    out[i][j] += a[i][t] * b[t][j];
                }
            }
        }
        out
    }

    fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| rng.uniform(-2.0, 2.0)).collect())
            .collect()
    }

    fn to_tensor(m: &[Vec<f64>]) -> Tensor {
        let data: Vec<f64> = m.iter().flatten().copied().collect();
        Tensor::from_vec(&[m.len(), m[0].len()], data).unwrap()
    }

    fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (r, c) = (m.len(), m[0].len());
        (0..c).map(|j| (0..r).map(|i| m[i][j]).collect()).collect()
    }

    fn assert_close(got: &Tensor, want: &[Vec<f64>]) {
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                let g = got.row(i)[j];
                assert!(
                    (g - w).abs() <= 1e-12 * w.abs().max(1.0),
                    "({i},{j}): got {g}, want {w}"
                );
            }
        }
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"));
    }

    #[test]
    fn validate_finite_flags_nan_and_inf() {
        let mut t = Tensor::zeros(&[2, 2]);
        assert!(t.validate_finite("test").is_ok());
        t.data_mut()[3] = f64::NAN;
        assert!(t.validate_finite("test").is_err());
        t.data_mut()[3] = f64::INFINITY;
        assert!(t.validate_finite("test").is_err());
    }

    #[test]
    fn products_match_naive_oracle_across_shapes() {
        let mut rng = Rng::new(31);
        for &(m, k, n) in &[
            (1usize, 1usize, 1usize),
            (3, 5, 2),
            (7, 13, 11),
            (16, 8, 16),
            (33, 65, 17),
            (5, 100, 9),
        ] {
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let want = naive_matmul(&a, &b);

            let got_nn = matmul_nn(&to_tensor(&a), &to_tensor(&b));
            assert_close(&got_nn, &want);

            // matmul_nt takes B transposed (n×k rows).
            let got_nt = matmul_nt(&to_tensor(&a), &to_tensor(&transpose(&b)));
            assert_close(&got_nt, &want);
        }
    }

    #[test]
    fn accumulate_outer_matches_naive_oracle() {
        let mut rng = Rng::new(77);
        for &(batch, n, k) in &[(1usize, 2usize, 3usize), (5, 4, 7), (67, 9, 33)] {
            let g = random_matrix(&mut rng, batch, n);
            let x = random_matrix(&mut rng, batch, k);
            // out[j][t] = sum_b g[b][j] * x[b][t]  ==  (Gᵀ · X)[j][t]
            let want = naive_matmul(&transpose(&g), &x);

            let mut out = Tensor::zeros(&[n, k]);
            // Seed with a bias to confirm accumulation rather than overwrite.
            out.data_mut().iter_mut().for_each(|v| *v = 0.5);
            accumulate_outer(&to_tensor(&g), &to_tensor(&x), &mut out);
            let biased: Vec<Vec<f64>> = want
                .iter()
                .map(|row| row.iter().map(|v| v + 0.5).collect())
                .collect();
            assert_close(&out, &biased);
        }
    }

    #[test]
    fn dot_and_axpy_agree_with_plain_loops() {
        let mut rng = Rng::new(9);
        for len in [0usize, 1, 7, 8, 9, 64, 100] {
            let x: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let y: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let want: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((dot(&x, &y) - want).abs() < 1e-12);

            let mut z = y.clone();
            axpy(0.75, &x, &mut z);
            for i in 0..len {
                assert!((z[i] - (y[i] + 0.75 * x[i])).abs() < 1e-15);
            }
        }
    }
}
