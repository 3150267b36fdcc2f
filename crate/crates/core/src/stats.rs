//! Small descriptive-statistics helpers shared by the analysis modules.

/// Arithmetic mean; 0.0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divide by n); 0.0 for an empty slice.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Quantile with linear interpolation between order statistics.
///
/// `q` is clamped to `[0, 1]`; the position is `q * (n - 1)`. Panics on an
/// empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Median (0.5-quantile with interpolation).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// `bins + 1` logarithmically spaced edges spanning `[lo, hi]`.
///
/// Requires `0 < lo < hi`. The first edge is exactly `lo` and the last is
/// exactly `hi`.
pub fn log_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo, "log_edges requires 0 < lo < hi");
    assert!(bins >= 1);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| (llo + (lhi - llo) * i as f64 / bins as f64).exp())
        .collect();
    edges[0] = lo;
    edges[bins] = hi;
    edges
}

/// Histogram counts for the given edges.
///
/// Bin `i` covers `[edges[i], edges[i+1])`; the final bin is closed on the
/// right. Values below the first edge are clamped into bin 0 and values above
/// the last edge into the final bin, so every input is counted exactly once.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    assert!(edges.len() >= 2, "histogram needs at least one bin");
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        // Linear scan is fine at 64 bins; binary search would obscure the
        // clamping rules for no measurable gain at this scale.
        let mut idx = bins - 1;
        for b in 0..bins {
            if v < edges[b + 1] {
                idx = b;
                break;
            }
        }
        counts[idx] += 1;
    }
    counts
}
