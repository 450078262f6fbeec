//! Training objectives: supervised contrastive loss, binary cross-entropy,
//! their weighted combination, and elastic-net regularization.
//!
//! Both losses are batch sums, not means.

use crate::error::{Result, SafeError};
use crate::labels::Class;
use crate::numerics::cosine_similarity;

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-7;

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(SafeError::InvalidArgument(format!(
            "temperature must be positive, got {kappa}"
        )))
    }
}

/// Supervised contrastive loss over a batch of projections.
///
/// For every anchor with at least one same-label partner, adds the mean over
/// its positives of `−log softmax(sim/κ)` where the softmax runs over all
/// other batch members. Anchors without positives contribute nothing.
pub fn scl_loss(projections: &[Vec<f64>], labels: &[Class], kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if projections.len() != labels.len() {
        return Err(SafeError::DimensionMismatch {
            expected: projections.len(),
            got: labels.len(),
        });
    }
    if projections.len() < 2 {
        return Err(SafeError::InvalidArgument(
            "contrastive loss needs a batch of at least two".into(),
        ));
    }
    let n = projections.len();
    let mut sim = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                sim[a * n + b] = cosine_similarity(&projections[a], &projections[b])?;
            }
        }
    }
    Ok(scl_from_similarities(&sim, labels, kappa, None))
}

/// Loss from an `n × n` similarity matrix. When `grad` is given, it receives
/// `∂L/∂sim[a][b]` for the anchor-`a` terms.
pub(crate) fn scl_from_similarities(
    sim: &[f64],
    labels: &[Class],
    kappa: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    let mut logits = vec![0.0; n];
    for a in 0..n {
        let positives = (0..n).filter(|&b| b != a && labels[b] == labels[a]).count();
        if positives == 0 {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for b in (0..n).filter(|&b| b != a) {
            logits[b] = sim[a * n + b] / kappa;
            max = max.max(logits[b]);
        }
        let sum_exp: f64 = (0..n).filter(|&b| b != a).map(|b| (logits[b] - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let pos_mean = (0..n)
            .filter(|&b| b != a && labels[b] == labels[a])
            .map(|b| logits[b])
            .sum::<f64>()
            / positives as f64;
        total += lse - pos_mean;
        if let Some(g) = grad.as_deref_mut() {
            for b in (0..n).filter(|&b| b != a) {
                let softmax = (logits[b] - lse).exp();
                let target = if labels[b] == labels[a] {
                    1.0 / positives as f64
                } else {
                    0.0
                };
                g[a * n + b] += (softmax - target) / kappa;
            }
        }
    }
    total
}

/// Summed binary cross-entropy with probabilities clamped to
/// `[BCE_EPS, 1 − BCE_EPS]`. Targets are 0 (Healthy) or 1 (Unhealthy).
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(SafeError::DimensionMismatch {
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum())
}

/// `scl + λ·bce` with `λ ∈ [0, 1]`.
pub fn combined_loss(scl: f64, bce: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SafeError::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(scl + lambda * bce)
}

/// `l1·Σ|w| + l2·Σw²` over the entries selected by `mask` (all entries when
/// `mask` is `None`).
pub fn regularization(values: &[f64], mask: Option<&[bool]>, l1: f64, l2: f64) -> f64 {
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (i, &w) in values.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) {
            abs += w.abs();
            sq += w * w;
        }
    }
    l1 * abs + l2 * sq
}

pub(crate) fn regularization_grad(values: &[f64], mask: &[bool], l1: f64, l2: f64, grad: &mut [f64]) {
    for ((g, &w), &m) in grad.iter_mut().zip(values).zip(mask) {
        if m {
            // f64::signum(0.0) is 1.0; the subgradient at zero is taken as 0.
            let sign = if w > 0.0 { 1.0 } else if w < 0.0 { -1.0 } else { 0.0 };
            *g += l1 * sign + 2.0 * l2 * w;
        }
    }
}
