//! Central finite-difference gradient checks.

use rand::Rng as _;

use super::{Graph, NodeId, Tensor};
use crate::error::Result;
use crate::rng::{rng_from, Rng};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Maximum over coordinates of `|analytic - central difference| / max(1, |analytic|)`.
pub fn compare_with_central_differences(f: impl Fn(&Tensor) -> f64, analytic: &Tensor, x: &Tensor, h: f64) -> f64 {
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + h;
        let up = f(&probe);
        probe.data_mut()[j] = orig - h;
        let down = f(&probe);
        probe.data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[j];
        let err = (a - numeric).abs() / a.abs().max(1.0);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    worst
}

/// Checks the reverse-mode gradient of the scalar built by `build` against
/// central differences at `x`.
pub fn finite_difference_check<F>(build: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone());
    let out = build(&mut g, leaf)?;
    g.backward(out)?;
    let analytic = g.grad(leaf);

    let eval = |probe: &Tensor| -> f64 {
        let mut g = Graph::new();
        let leaf = g.constant(probe.clone());
        match build(&mut g, leaf) {
            Ok(out) => g.value(out).item(),
            Err(_) => f64::NAN,
        }
    };
    Ok(compare_with_central_differences(eval, &analytic, x, h))
}

pub(crate) fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

/// Reduces any node to a scalar through a fixed random weighting so that
/// every output coordinate contributes a distinct gradient.
pub(crate) fn weighted_sum(g: &mut Graph, node: NodeId, rng: &mut Rng) -> Result<NodeId> {
    let shape = g.value(node).shape().to_vec();
    let w = g.constant(uniform(rng, &shape, -1.0, 1.0));
    let prod = g.mul(node, w)?;
    Ok(g.sum(prod))
}

pub type CaseFn = fn(u64) -> Result<f64>;

fn dims(rng: &mut Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..=8),
        rng.random_range(1..=8),
        rng.random_range(1..=8),
    )
}

fn case_matmul_lhs(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, k, n) = dims(&mut rng);
    let a = uniform(&mut rng, &[m, k], -1.0, 1.0);
    let b = uniform(&mut rng, &[k, n], -1.0, 1.0);
    finite_difference_check(
        |g, x| {
            let bn = g.constant(b.clone());
            let y = g.matmul(x, bn)?;
            Ok(g.sum(y))
        },
        &a,
        DEFAULT_STEP,
    )
}

fn case_matmul_rhs(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, k, n) = dims(&mut rng);
    let a = uniform(&mut rng, &[m, k], -1.0, 1.0);
    let b = uniform(&mut rng, &[k, n], -1.0, 1.0);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let an = g.constant(a.clone());
            let y = g.matmul(an, x)?;
            weighted_sum(g, y, &mut rng_from(wseed))
        },
        &b,
        DEFAULT_STEP,
    )
}

fn case_elementwise(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -2.0, 2.0);
    let other = uniform(&mut rng, &[m, n], -1.0, 1.0);
    let bias = uniform(&mut rng, &[n], -1.0, 1.0);
    let col = uniform(&mut rng, &[m, 1], -1.0, 1.0);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let o = g.constant(other.clone());
            let b = g.constant(bias.clone());
            let c = g.constant(col.clone());
            let s = g.sigmoid(x);
            let t = g.tanh(x);
            let r = g.relu(x);
            let st = g.mul(s, t)?;
            let sto = g.add(st, o)?;
            let sr = g.add(sto, r)?;
            let bsr = g.add_row(sr, b)?;
            let scaled = g.scale(bsr, 0.7);
            let mc = g.mul_col(scaled, c)?;
            weighted_sum(g, mc, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_mul_col_weights(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let a = uniform(&mut rng, &[m, n], -1.0, 1.0);
    let w = uniform(&mut rng, &[m, 1], -1.0, 1.0);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let an = g.constant(a.clone());
            let y = g.mul_col(an, x)?;
            weighted_sum(g, y, &mut rng_from(wseed))
        },
        &w,
        DEFAULT_STEP,
    )
}

fn case_softmax(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -3.0, 3.0);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let p = g.softmax(x);
            weighted_sum(g, p, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_slice_concat_pick(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let m = rng.random_range(1..=8);
    let n = rng.random_range(2..=8);
    let x = uniform(&mut rng, &[m, n], -1.0, 1.0);
    let split = rng.random_range(1..n);
    let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let left = g.slice_cols(x, 0, split)?;
            let right = g.slice_cols(x, split, n)?;
            let tl = g.tanh(left);
            let cat = g.concat_cols(&[right, tl])?;
            let picked = g.pick_cols(x, &picks)?;
            let cat2 = g.concat_cols(&[cat, picked])?;
            let flat = g.reshape(cat2, &[m * (n + 1)])?;
            weighted_sum(g, flat, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_soft_ce_pred(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -3.0, 3.0);
    let target = super::kernels::softmax(&uniform(&mut rng, &[m, n], -2.0, 2.0));
    finite_difference_check(
        |g, x| {
            let p = g.softmax(x);
            let t = g.constant(target.clone());
            let l = g.soft_cross_entropy(p, t)?;
            Ok(g.mean(l))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_soft_ce_target(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -3.0, 3.0);
    let pred = super::kernels::softmax(&uniform(&mut rng, &[m, n], -2.0, 2.0));
    finite_difference_check(
        |g, x| {
            let t = g.softmax(x);
            let p = g.constant(pred.clone());
            let l = g.soft_cross_entropy(p, t)?;
            Ok(g.sum(l))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_kl(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -3.0, 3.0);
    let other = super::kernels::softmax(&uniform(&mut rng, &[m, n], -2.0, 2.0));
    let pred_side = rng.random_bool(0.5);
    finite_difference_check(
        |g, x| {
            let p = g.softmax(x);
            let o = g.constant(other.clone());
            let l = if pred_side {
                g.kl_divergence(o, p)?
            } else {
                g.kl_divergence(p, o)?
            };
            Ok(g.sum(l))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_entropy(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (m, n, _) = dims(&mut rng);
    let x = uniform(&mut rng, &[m, n], -3.0, 3.0);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let p = g.softmax(x);
            let e = g.entropy(p);
            weighted_sum(g, e, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_group_normalize(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let n = rng.random_range(1..=8);
    let x = uniform(&mut rng, &[n], 0.1, 3.0);
    let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let y = g.group_normalize(x, &groups)?;
            weighted_sum(g, y, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

/// matmul -> relu -> matmul -> softmax -> cross-entropy, gradient w.r.t. the
/// first weight matrix.
fn case_composite_chain(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let (b, d, h) = dims(&mut rng);
    let c = rng.random_range(1..=8);
    let xs = uniform(&mut rng, &[b, d], -1.0, 1.0);
    let w1 = uniform(&mut rng, &[d, h], -1.0, 1.0);
    let w2 = uniform(&mut rng, &[h, c], -1.0, 1.0);
    let target = super::kernels::softmax(&uniform(&mut rng, &[b, c], -2.0, 2.0));
    finite_difference_check(
        |g, w| {
            let x = g.constant(xs.clone());
            let w2n = g.constant(w2.clone());
            let z = g.matmul(x, w)?;
            let a = g.relu(z);
            let logits = g.matmul(a, w2n)?;
            let p = g.softmax(logits);
            let t = g.constant(target.clone());
            let l = g.soft_cross_entropy(p, t)?;
            Ok(g.mean(l))
        },
        &w1,
        DEFAULT_STEP,
    )
}

/// Every elementary operation of the graph, one randomized case each.
pub fn op_cases() -> Vec<(&'static str, CaseFn)> {
    vec![
        ("matmul/lhs", case_matmul_lhs as CaseFn),
        ("matmul/rhs", case_matmul_rhs),
        ("elementwise", case_elementwise),
        ("mul_col/weights", case_mul_col_weights),
        ("softmax", case_softmax),
        ("slice/concat/pick/reshape", case_slice_concat_pick),
        ("soft_ce/pred", case_soft_ce_pred),
        ("soft_ce/target", case_soft_ce_target),
        ("kl", case_kl),
        ("entropy", case_entropy),
        ("group_normalize", case_group_normalize),
        ("chain/matmul-relu-softmax-ce", case_composite_chain),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exactish() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let err = finite_difference_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                Ok(g.sum(sq))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn softmax_cross_entropy_self_check() {
        let mut rng = rng_from(11);
        let x = uniform(&mut rng, &[5], -2.0, 2.0);
        let target = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4, 0.0]);
        let err = finite_difference_check(
            |g, x| {
                let p = g.softmax(x);
                let t = g.constant(target.clone());
                let l = g.soft_cross_entropy(p, t)?;
                Ok(g.sum(l))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
        let f = |t: &Tensor| t.data().iter().map(|v| v * v).sum::<f64>();
        // d/dx x^2 is 2x; pretend it is x
        let wrong = x.clone();
        let err = compare_with_central_differences(f, &wrong, &x, DEFAULT_STEP);
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn every_op_passes_on_twenty_seeds() {
        for (name, case) in op_cases() {
            for seed in 0..20 {
                let err = case(seed).unwrap();
                assert!(err <= 1e-4, "{name} seed {seed}: {err}");
            }
        }
    }
}
