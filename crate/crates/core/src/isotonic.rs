//! Weighted pool-adjacent-violators for non-decreasing least-squares fits.

/// Returns the weighted least-squares non-decreasing fit of `values`.
///
/// Zero weights are treated as a tiny positive weight so that every block has
/// a defined mean.
pub(crate) fn pava_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(values.len(), weights.len());
    // (mean, weight, count) per pooled block
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let w = if w > 0.0 { w } else { 1e-12 };
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            let (m_last, w_last, c_last) = blocks[n - 1];
            let (m_prev, w_prev, c_prev) = blocks[n - 2];
            if m_prev <= m_last {
                break;
            }
            let w = w_prev + w_last;
            let m = (m_prev * w_prev + m_last * w_last) / w;
            blocks.truncate(n - 2);
            blocks.push((m, w, c_prev + c_last));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, c) in blocks {
        out.extend(std::iter::repeat_n(m, c));
    }
    out
}
