/// Nearest-rank percentile: the 1-based element at index ceil(p * N) of
/// the ascending-sorted sample, with no interpolation.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    debug_assert!(p > 0.0 && p <= 1.0);
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}
