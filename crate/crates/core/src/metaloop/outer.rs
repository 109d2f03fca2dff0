//! Gradients of the meta-loss with respect to the corrector parameters.
//!
//! The direct update differentiates the query-set loss only through the
//! corrector's own forward pass. The lookahead update evaluates the query
//! loss after a virtual plain-gradient step of the base model on corrected
//! support targets, and differentiates through that step as well.

use crate::basemodel::Mlp;
use crate::corrector::CorrectorConfig;
use crate::corrector::{Corrector, CorrectorNodes};
use crate::dynamics::{build_features_graph, noisy_label_losses, FeatureSpec};
use crate::dynamics::{FeatureMode, LossFeatures};
use crate::error::{Error, Result};
use crate::numcore::gradcheck::{compare_with_central_differences, CaseFn, DEFAULT_STEP};
use crate::numcore::{kernels, Graph, NodeId, Tensor};
use crate::rng::{rng_from, Rng};
use rand::Rng as _;

/// Inputs for one corrector evaluation on a batch.
#[derive(Debug, Clone)]
pub struct MetaBatch {
    pub x: Tensor,
    pub noisy_labels: Vec<usize>,
    /// Recurrent state entering the step; zero when absent.
    pub state: Option<(Tensor, Tensor)>,
    /// Previous-epoch predictions for the mixing decoder; uniform when absent.
    pub prev: Option<Tensor>,
    /// Meta targets (only used on the query side).
    pub targets: Tensor,
}

fn state_nodes(g: &mut Graph, batch: &MetaBatch, rows: usize, hidden: usize) -> (NodeId, NodeId) {
    match &batch.state {
        Some((h, c)) => (g.constant(h.clone()), g.constant(c.clone())),
        None => (
            g.constant(Tensor::zeros(&[rows, hidden])),
            g.constant(Tensor::zeros(&[rows, hidden])),
        ),
    }
}

/// Corrected distribution for `batch` with features computed on the graph
/// from `probs`.
pub fn corrector_on_graph(
    g: &mut Graph,
    net: &Corrector,
    n: &CorrectorNodes,
    probs: NodeId,
    batch: &MetaBatch,
    spec: FeatureSpec,
) -> Result<NodeId> {
    let rows = batch.noisy_labels.len();
    let f = build_features_graph(g, probs, &batch.noisy_labels, spec)?;
    let (h, c) = state_nodes(g, batch, rows, net.hidden_size());
    let (h1, _) = net.lstm_step_graph(g, n, f, h, c)?;
    let prev = match &batch.prev {
        Some(p) => g.constant(p.clone()),
        None => {
            let cols = g.value(probs).cols();
            g.constant(Tensor::full(&[rows, cols], 1.0 / cols as f64))
        }
    };
    net.output_graph(g, n, h1, f, &batch.noisy_labels, probs, prev)
}

struct QueryPass {
    loss: f64,
    phi_grads: Vec<Tensor>,
    theta_grads: Vec<Tensor>,
}

/// Summed KL of the query batch at `model`, with gradients for the
/// corrector and (when `model_grads`) for the model parameters.
fn query_pass(
    model: &Mlp,
    net: &Corrector,
    spec: FeatureSpec,
    query: &MetaBatch,
    model_grads: bool,
) -> Result<QueryPass> {
    let mut g = Graph::new();
    let x = g.constant(query.x.clone());
    let fwd = model.forward(&mut g, x, model_grads)?;
    let n = net.bind(&mut g, true);
    let y = corrector_on_graph(&mut g, net, &n, fwd.probs, query, spec)?;
    let t = g.constant(query.targets.clone());
    let kl = g.kl_divergence(t, y)?;
    let loss = g.sum(kl);
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::contract(format!("non-finite meta loss {value}")));
    }
    g.backward(loss)?;
    Ok(QueryPass {
        loss: value,
        phi_grads: n.params.iter().map(|&p| g.grad(p)).collect(),
        theta_grads: if model_grads {
            fwd.params.iter().map(|&p| g.grad(p)).collect()
        } else {
            Vec::new()
        },
    })
}

/// Direct meta-gradient: `L = sum_i KL(target_i || yhat_i)` on the query
/// batch at the current model.
pub fn direct_meta_gradient(
    model: &Mlp,
    net: &Corrector,
    spec: FeatureSpec,
    query: &MetaBatch,
) -> Result<(f64, Vec<Tensor>)> {
    let pass = query_pass(model, net, spec, query, false)?;
    Ok((pass.loss, pass.phi_grads))
}

/// Corrected support distribution on a graph with trainable corrector
/// parameters; features come from the model's current predictions.
fn support_graph(
    g: &mut Graph,
    model: &Mlp,
    net: &Corrector,
    spec: FeatureSpec,
    support: &MetaBatch,
) -> Result<(NodeId, CorrectorNodes)> {
    let probs = model.predict_probs(&support.x)?;
    let n = net.bind(g, true);
    let p = g.constant(probs);
    let y = corrector_on_graph(g, net, &n, p, support, spec)?;
    Ok((y, n))
}

/// Gradient of the mean soft cross-entropy of the model on `x` against
/// `targets`.
fn base_gradient(model: &Mlp, x: &Tensor, targets: &Tensor) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let fwd = model.forward(&mut g, xn, true)?;
    let t = g.constant(targets.clone());
    let l = g.soft_cross_entropy(fwd.probs, t)?;
    let loss = g.mean(l);
    g.backward(loss)?;
    Ok(fwd.params.iter().map(|&p| g.grad(p)).collect())
}

fn virtual_step(model: &Mlp, grads: &[Tensor], alpha: f64) -> Result<Mlp> {
    let params = model
        .params()
        .iter()
        .zip(grads)
        .map(|(p, d)| p.zip_map(d, |a, b| a - alpha * b))
        .collect();
    Mlp::from_params(model.layer_sizes(), params)
}

/// Query loss after the virtual step, as a plain function of the corrector.
pub fn lookahead_objective(
    model: &Mlp,
    net: &Corrector,
    spec: FeatureSpec,
    support: &MetaBatch,
    query: &MetaBatch,
    alpha: f64,
) -> Result<f64> {
    let probs = model.predict_probs(&support.x)?;
    let losses = noisy_label_losses(&probs, &support.noisy_labels);
    let state = support.state.as_ref().map(|(h, c)| (h, c));
    let out = net.forward_batch(
        &probs,
        &losses,
        &support.noisy_labels,
        spec,
        state,
        support.prev.as_ref(),
    )?;
    let grads = base_gradient(model, &support.x, &out.corrected)?;
    let hat = virtual_step(model, &grads, alpha)?;
    Ok(query_pass(&hat, net, spec, query, false)?.loss)
}

/// Lookahead meta-gradient.
///
/// With `L_base = -(1/B) sum_ic yhat_ic(phi) ln p_ic(theta)` the virtual
/// step is `theta' = theta - alpha grad L_base`. Writing `v` for the
/// gradient of the query loss at `theta'`, the chain rule through the step
/// gives an extra term equal to backpropagating the seed
/// `(alpha / B) * (d ln p_ic / d theta . v)` from the support outputs.
/// The directional derivative is computed in forward mode.
pub fn lookahead_meta_gradient(
    model: &Mlp,
    net: &Corrector,
    spec: FeatureSpec,
    support: &MetaBatch,
    query: &MetaBatch,
    alpha: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let (y_support, n_support) = support_graph(&mut g, model, net, spec, support)?;
    let targets = g.value(y_support).clone();
    let grads = base_gradient(model, &support.x, &targets)?;
    let hat = virtual_step(model, &grads, alpha)?;
    let pass = query_pass(&hat, net, spec, query, true)?;
    let mut total = pass.phi_grads;
    if alpha != 0.0 {
        let (_, dlogp) = model.jvp_log_probs(&support.x, &pass.theta_grads)?;
        let b = support.noisy_labels.len() as f64;
        let seed = dlogp.map(|v| v * alpha / b);
        g.backward_with(y_support, &seed)?;
        for (acc, &p) in total.iter_mut().zip(&n_support.params) {
            acc.add_assign(&g.grad(p));
        }
    }
    Ok((pass.loss, total))
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape and data agree")
}

struct Toy {
    model: Mlp,
    net: Corrector,
    spec: FeatureSpec,
    support: MetaBatch,
    query: MetaBatch,
}

fn toy(seed: u64, mode: FeatureMode, stateful: bool) -> Toy {
    let mut rng = rng_from(seed);
    let c = 3;
    let model = Mlp::init(&[2, 5, c], seed).expect("valid toy configuration");
    let cfg = CorrectorConfig {
        mode,
        hidden_size: 2,
        decoder_hidden: Some(3),
        include_raw_features: false,
    };
    let spec = FeatureSpec::new(mode, LossFeatures::Normalized);
    let mut net = Corrector::zeros(cfg, spec.width(c), c).expect("valid toy configuration");
    for p in net.params_mut() {
        *p = uniform(&mut rng, p.shape(), -0.8, 0.8);
    }
    let mut batch = |b: usize| {
        let state = stateful.then(|| {
            (
                uniform(&mut rng, &[b, 2], -0.9, 0.9),
                uniform(&mut rng, &[b, 2], -1.0, 1.0),
            )
        });
        let prev = stateful.then(|| kernels::softmax(&uniform(&mut rng, &[b, c], -1.0, 1.0)));
        MetaBatch {
            x: uniform(&mut rng, &[b, 2], -2.0, 2.0),
            noisy_labels: (0..b).map(|_| rng.random_range(0..c)).collect(),
            state,
            prev,
            targets: kernels::softmax(&uniform(&mut rng, &[b, c], -2.0, 2.0)),
        }
    };
    let support = batch(5);
    let query = batch(4);
    Toy {
        model,
        net,
        spec,
        support,
        query,
    }
}

fn flat(ts: &[Tensor]) -> Tensor {
    Tensor::vector(ts.iter().flat_map(|t| t.data().to_vec()).collect())
}

fn unflat(net: &Corrector, x: &Tensor) -> Corrector {
    let mut out = net.clone();
    let mut off = 0;
    for p in out.params_mut() {
        let n = p.len();
        p.data_mut().copy_from_slice(&x.data()[off..off + n]);
        off += n;
    }
    out
}

fn lookahead_case(seed: u64, mode: FeatureMode, stateful: bool) -> Result<f64> {
    let t = toy(seed, mode, stateful);
    let alpha = 0.5;
    let (_, grads) = lookahead_meta_gradient(&t.model, &t.net, t.spec, &t.support, &t.query, alpha)?;
    let x = flat(t.net.params());
    let f = |x: &Tensor| {
        let net = unflat(&t.net, x);
        lookahead_objective(&t.model, &net, t.spec, &t.support, &t.query, alpha).unwrap_or(f64::NAN)
    };
    Ok(compare_with_central_differences(f, &flat(&grads), &x, DEFAULT_STEP))
}

/// Finite-difference checks of the lookahead gradient over every corrector
/// parameter on small random problems.
pub fn lookahead_gradcheck_cases() -> Vec<(&'static str, CaseFn)> {
    vec![
        (
            "lookahead/standard",
            (|s| lookahead_case(s, FeatureMode::Standard, true)) as CaseFn,
        ),
        ("lookahead/agnostic", |s| lookahead_case(s, FeatureMode::Agnostic, true)),
        ("lookahead/stateless", |s| {
            lookahead_case(s, FeatureMode::Standard, false)
        }),
    ]
}
