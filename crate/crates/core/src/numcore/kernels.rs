//! Value-level numeric kernels. The graph ops call into these so that the
//! differentiable and the plain forward paths produce identical bits.

use super::Tensor;
use crate::error::{Error, Result};

/// Lower bound applied to every logarithm argument.
pub const LOG_CLAMP: f64 = 1e-12;

/// Tolerance for "is this row a probability distribution".
pub const SIMPLEX_TOL: f64 = 1e-6;

#[inline]
pub fn clamped_ln(x: f64) -> f64 {
    x.max(LOG_CLAMP).ln()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // Same value as 1/(1+e^-x) for x >= 0 and e^x/(1+e^x) below, with a
    // select instead of a branch.
    let e = (-x.abs()).exp();
    let num = if x >= 0.0 { 1.0 } else { e };
    num / (1.0 + e)
}

/// Max-subtracted softmax of one row, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Row-wise softmax; a vector is one row.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(logits.shape());
    let rows = logits.rows();
    for r in 0..rows {
        let src = logits.row(r).to_vec();
        softmax_into(&src, out.row_mut(r));
    }
    out
}

pub fn soft_ce_row(pred: &[f64], target: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * clamped_ln(p) })
        .sum::<f64>()
}

pub fn kl_row(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| {
            if t == 0.0 {
                0.0
            } else {
                t * (clamped_ln(t) - clamped_ln(p))
            }
        })
        .sum()
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy_row(p: &[f64]) -> f64 {
    -p.iter()
        .map(|&x| if x > 0.0 { x * clamped_ln(x) } else { 0.0 })
        .sum::<f64>()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn check_simplex(what: &str, row: &[f64]) -> Result<()> {
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&x| !(x >= -SIMPLEX_TOL)) {
        return Err(Error::contract(format!("{what} is not a probability vector (sum {s})")));
    }
    Ok(())
}

/// `-sum_c target_c ln(pred_c)` with the log argument clamped at 1e-12.
pub fn soft_cross_entropy(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            op: "soft_cross_entropy",
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    check_simplex("cross-entropy target", target.data())?;
    Ok(soft_ce_row(pred.data(), target.data()))
}

/// `KL(target || pred)`.
pub fn kl_divergence(target: &Tensor, pred: &Tensor) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            op: "kl_divergence",
            left: target.shape().to_vec(),
            right: pred.shape().to_vec(),
        });
    }
    check_simplex("kl target", target.data())?;
    check_simplex("kl prediction", pred.data())?;
    Ok(kl_row(target.data(), pred.data()))
}

/// Divides each value by the mean of its group, with the denominator clamped
/// at 1e-12. `groups[i]` is the group id of value `i`.
pub fn group_normalize(values: &[f64], groups: &[usize]) -> Vec<f64> {
    let (sums, counts) = group_sums(values, groups);
    values
        .iter()
        .zip(groups)
        .map(|(&v, &g)| v / (sums[g] / counts[g] as f64).max(LOG_CLAMP))
        .collect()
}

pub(crate) fn group_sums(values: &[f64], groups: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n_groups = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (&v, &g) in values.iter().zip(groups) {
        sums[g] += v;
        counts[g] += 1;
    }
    (sums, counts)
}
