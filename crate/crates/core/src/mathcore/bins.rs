/// Assigns each observation to one of `bins` equal-count groups by its
/// empirical-CDF rank.
///
/// Observations are ranked by `(value, original index)`; the observation with
/// 0-based rank `r` goes to bin `⌊r·bins/n⌋ + 1`, i.e. `Fₙ(Xᵢ) ∈ [(j−1)/J, j/J)`.
/// Bin labels are 1-based and bin sizes differ by at most one.
///
/// `bins` is clamped to `1..=n`.
pub fn ecdf_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let bins = bins.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n + 1;
    }
    out
}
