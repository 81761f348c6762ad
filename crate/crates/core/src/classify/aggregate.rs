use crate::error::{ensure, Result};
use crate::primitives::{softmax, Distribution, FrameSequence};

/// Indices of the `k` largest values, ties broken by lower index. The
/// returned indices are sorted ascending.
pub fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// `k = max(1, floor(ratio * T))`, capped at `T`.
pub fn k_from_ratio(ratio: f64, t: usize) -> usize {
    ((ratio * t as f64).floor() as usize).clamp(1, t.max(1))
}

/// Attention-guided top-k pooling: softmax of the mean attribute row over
/// the `k` frames with the highest attention.
pub fn topk_aggregate(seq: &FrameSequence, k: usize) -> Result<Distribution> {
    ensure!(
        k >= 1 && k <= seq.len(),
        "k = {k} out of range for T = {}",
        seq.len()
    );
    let omega = topk_indices(seq.attention(), k);
    let classes = seq.num_attributes() + 1;
    let mut mean = vec![0.0; classes];
    for &t in &omega {
        for (m, s) in mean.iter_mut().zip(&seq.attributes()[t]) {
            *m += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    Ok(Distribution::from_raw(softmax(&mean)))
}

/// Per-class top-k pooling applied directly to the attribute columns,
/// without attention guidance.
pub fn topk_direct(seq: &FrameSequence, k: usize) -> Result<Distribution> {
    ensure!(
        k >= 1 && k <= seq.len(),
        "k = {k} out of range for T = {}",
        seq.len()
    );
    let classes = seq.num_attributes() + 1;
    let pooled: Vec<f64> = (0..classes)
        .map(|c| {
            let col = seq.column(c);
            topk_indices(&col, k).iter().map(|&t| col[t]).sum::<f64>() / k as f64
        })
        .collect();
    Ok(Distribution::from_raw(softmax(&pooled)))
}

/// Clip-level forgery probability `1 - q_0`.
pub fn clip_forgery_prob(q: &Distribution) -> f64 {
    1.0 - q[0]
}
