//! Finite-difference cases for the corrector.

use rand::Rng as _;

use super::{Corrector, CorrectorConfig, CorrectorNodes};
use crate::dynamics::{build_features_graph, FeatureMode, FeatureSpec, LossFeatures};
use crate::error::Result;
use crate::numcore::gradcheck::{finite_difference_check, CaseFn, DEFAULT_STEP};
use crate::numcore::{kernels, Graph, NodeId, Tensor};
use crate::rng::{rng_from, Rng};

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

fn weighted(g: &mut Graph, node: NodeId, rng: &mut Rng) -> Result<NodeId> {
    let w = uniform(rng, g.value(node).shape(), -1.0, 1.0);
    let wn = g.constant(w);
    let m = g.mul(node, wn)?;
    Ok(g.sum(m))
}

/// A small corrector with every parameter drawn uniformly, biases included.
fn random_net(rng: &mut Rng, mode: FeatureMode, hidden: usize, raw: bool, c: usize) -> Corrector {
    let cfg = CorrectorConfig {
        mode,
        hidden_size: hidden,
        decoder_hidden: Some(hidden + 1),
        include_raw_features: raw,
    };
    let width = FeatureSpec::new(mode, LossFeatures::Normalized).width(c);
    let mut net = Corrector::zeros(cfg, width, c).expect("valid config");
    for p in net.params_mut() {
        *p = uniform(rng, p.shape(), -0.8, 0.8);
    }
    net
}

/// Binds constants for every parameter except `k`, which becomes `x`.
fn bind_except(net: &Corrector, g: &mut Graph, k: usize, x: NodeId) -> CorrectorNodes {
    let params = net
        .params()
        .iter()
        .enumerate()
        .map(|(j, p)| if j == k { x } else { g.constant(p.clone()) })
        .collect();
    CorrectorNodes { params }
}

struct Batch {
    probs: Tensor,
    labels: Vec<usize>,
    h: Tensor,
    c: Tensor,
    prev: Tensor,
    target: Tensor,
}

fn random_batch(rng: &mut Rng, b: usize, c: usize, hidden: usize) -> Batch {
    let probs = kernels::softmax(&uniform(rng, &[b, c], -2.0, 2.0));
    let labels = (0..b).map(|_| rng.random_range(0..c)).collect();
    let h = uniform(rng, &[b, hidden], -0.9, 0.9);
    let cs = uniform(rng, &[b, hidden], -1.5, 1.5);
    let prev = kernels::softmax(&uniform(rng, &[b, c], -2.0, 2.0));
    let target = kernels::softmax(&uniform(rng, &[b, c], -2.0, 2.0));
    Batch {
        probs,
        labels,
        h,
        c: cs,
        prev,
        target,
    }
}

/// Features, one LSTM step, decoding and a KL loss, as one graph.
fn pipeline(g: &mut Graph, net: &Corrector, n: &CorrectorNodes, batch: &Batch, probs: NodeId) -> Result<NodeId> {
    let spec = FeatureSpec::new(net.mode(), LossFeatures::Normalized);
    let f = build_features_graph(g, probs, &batch.labels, spec)?;
    let h = g.constant(batch.h.clone());
    let c = g.constant(batch.c.clone());
    let (h1, _) = net.lstm_step_graph(g, n, f, h, c)?;
    let prev = g.constant(batch.prev.clone());
    let y = net.output_graph(g, n, h1, f, &batch.labels, probs, prev)?;
    let t = g.constant(batch.target.clone());
    let kl = g.kl_divergence(t, y)?;
    Ok(g.sum(kl))
}

fn check_lstm_param(seed: u64, k: usize) -> Result<f64> {
    let mut rng = rng_from(seed);
    let hidden = rng.random_range(1..=6);
    let net = random_net(&mut rng, FeatureMode::Standard, hidden, false, 3);
    let b = rng.random_range(1..=5);
    let f = uniform(&mut rng, &[b, net.feature_width()], -1.5, 1.5);
    let h = uniform(&mut rng, &[b, hidden], -0.9, 0.9);
    let c = uniform(&mut rng, &[b, hidden], -1.5, 1.5);
    let wseed = rng.random::<u64>();
    let x = net.params()[k].clone();
    finite_difference_check(
        |g, x| {
            let n = bind_except(&net, g, k, x);
            let (fi, hi, ci) = (g.constant(f.clone()), g.constant(h.clone()), g.constant(c.clone()));
            let (h1, c1) = net.lstm_step_graph(g, &n, fi, hi, ci)?;
            let both = g.concat_cols(&[h1, c1])?;
            weighted(g, both, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn case_lstm_w_input(seed: u64) -> Result<f64> {
    check_lstm_param(seed, 0)
}

fn case_lstm_w_hidden(seed: u64) -> Result<f64> {
    check_lstm_param(seed, 1)
}

fn case_lstm_bias(seed: u64) -> Result<f64> {
    check_lstm_param(seed, 2)
}

fn case_lstm_inputs(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let hidden = rng.random_range(1..=6);
    let net = random_net(&mut rng, FeatureMode::Standard, hidden, false, 3);
    let b = rng.random_range(1..=5);
    let fw = net.feature_width();
    let x = uniform(&mut rng, &[b, fw + 2 * hidden], -0.9, 0.9);
    let wseed = rng.random::<u64>();
    finite_difference_check(
        |g, x| {
            let n = net.bind(g, false);
            let f = g.slice_cols(x, 0, fw)?;
            let h = g.slice_cols(x, fw, fw + hidden)?;
            let c = g.slice_cols(x, fw + hidden, fw + 2 * hidden)?;
            let (h1, c1) = net.lstm_step_graph(g, &n, f, h, c)?;
            let both = g.concat_cols(&[h1, c1])?;
            weighted(g, both, &mut rng_from(wseed))
        },
        &x,
        DEFAULT_STEP,
    )
}

fn check_pipeline_param(seed: u64, mode: FeatureMode, raw: bool) -> Result<f64> {
    let mut rng = rng_from(seed);
    let hidden = rng.random_range(1..=8);
    let c = rng.random_range(2..=4);
    let net = random_net(&mut rng, mode, hidden, raw, c);
    let batch = random_batch(&mut rng, 4, c, hidden);
    let mut worst: f64 = 0.0;
    for k in 0..net.params().len() {
        let x = net.params()[k].clone();
        let err = finite_difference_check(
            |g, x| {
                let n = bind_except(&net, g, k, x);
                let p = g.constant(batch.probs.clone());
                pipeline(g, &net, &n, &batch, p)
            },
            &x,
            DEFAULT_STEP,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn case_pipeline_standard(seed: u64) -> Result<f64> {
    check_pipeline_param(seed, FeatureMode::Standard, false)
}

fn case_pipeline_standard_raw(seed: u64) -> Result<f64> {
    check_pipeline_param(seed, FeatureMode::Standard, true)
}

fn case_pipeline_mixing(seed: u64) -> Result<f64> {
    check_pipeline_param(seed, FeatureMode::Agnostic, false)
}

/// Gradient of the whole pipeline with respect to the classifier logits
/// that produce the features (and, in mixing mode, the current prediction).
fn case_pipeline_logits(seed: u64) -> Result<f64> {
    let mut rng = rng_from(seed);
    let mode = if seed.is_multiple_of(2) {
        FeatureMode::Standard
    } else {
        FeatureMode::Agnostic
    };
    let hidden = rng.random_range(1..=8);
    let c = rng.random_range(2..=4);
    let net = random_net(&mut rng, mode, hidden, false, c);
    let batch = random_batch(&mut rng, 4, c, hidden);
    let logits = uniform(&mut rng, &[4, c], -2.0, 2.0);
    finite_difference_check(
        |g, x| {
            let n = net.bind(g, false);
            let p = g.softmax(x);
            pipeline(g, &net, &n, &batch, p)
        },
        &logits,
        DEFAULT_STEP,
    )
}

/// Named corrector cases, each returning the worst relative error.
pub fn gradcheck_cases() -> Vec<(&'static str, CaseFn)> {
    vec![
        ("corrector/lstm.w_input", case_lstm_w_input as CaseFn),
        ("corrector/lstm.w_hidden", case_lstm_w_hidden),
        ("corrector/lstm.bias", case_lstm_bias),
        ("corrector/lstm.inputs", case_lstm_inputs),
        ("corrector/pipeline.standard", case_pipeline_standard),
        ("corrector/pipeline.standard+raw", case_pipeline_standard_raw),
        ("corrector/pipeline.mixing", case_pipeline_mixing),
        ("corrector/pipeline.logits", case_pipeline_logits),
    ]
}
