use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dynamics::{build_features, onehot_rows, DynamicsStore, FeatureMode, FeatureSpec};
use crate::error::{Error, Result};
use crate::numcore::{kernels, Graph, NodeId, Tensor};
use crate::rng::rng_from;

pub const PARAM_NAMES: [&str; 7] = [
    "lstm.w_input",
    "lstm.w_hidden",
    "lstm.bias",
    "decoder.w1",
    "decoder.b1",
    "decoder.w2",
    "decoder.b2",
];

fn default_hidden() -> usize {
    64
}

/// Shape of a corrector network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    #[serde(default)]
    pub mode: FeatureMode,
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    /// Width of the decoder's hidden layer; the LSTM width when absent.
    #[serde(default)]
    pub decoder_hidden: Option<usize>,
    /// Feed the current feature vector to the decoder next to `h`.
    #[serde(default)]
    pub include_raw_features: bool,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig {
            mode: FeatureMode::Standard,
            hidden_size: default_hidden(),
            decoder_hidden: None,
            include_raw_features: false,
        }
    }
}

impl CorrectorConfig {
    pub fn decoder_width(&self) -> usize {
        self.decoder_hidden.unwrap_or(self.hidden_size)
    }

    /// Decoder output width: the class count, or three mixing weights.
    pub fn output_width(&self, num_classes: usize) -> usize {
        match self.mode {
            FeatureMode::Standard => num_classes,
            FeatureMode::Agnostic => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.decoder_width() == 0 {
            return Err(Error::config("corrector widths must be positive"));
        }
        Ok(())
    }
}

/// Parameters of the recurrent corrector.
///
/// The LSTM gate blocks are laid out as `[input, forget, output, candidate]`
/// along the `4H` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    pub(crate) config: CorrectorConfig,
    pub(crate) feature_width: usize,
    pub(crate) c_out: usize,
    pub(crate) params: Vec<Tensor>,
}

/// Graph handles for the corrector parameters, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone)]
pub struct CorrectorNodes {
    pub params: Vec<NodeId>,
}

fn param_shapes(config: &CorrectorConfig, feature_width: usize, c_out: usize) -> Vec<Vec<usize>> {
    let h = config.hidden_size;
    let d = config.decoder_width();
    let dec_in = if config.include_raw_features {
        h + feature_width
    } else {
        h
    };
    vec![
        vec![feature_width, 4 * h],
        vec![h, 4 * h],
        vec![4 * h],
        vec![dec_in, d],
        vec![d],
        vec![d, c_out],
        vec![c_out],
    ]
}

impl Corrector {
    /// Glorot-uniform matrices and zero biases.
    pub fn init(config: CorrectorConfig, feature_width: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let mut net = Corrector::zeros(config, feature_width, num_classes)?;
        let mut rng = rng_from(seed);
        for p in net.params.iter_mut() {
            if p.shape().len() == 2 {
                let limit = (6.0 / (p.shape()[0] + p.shape()[1]) as f64).sqrt();
                for v in p.data_mut() {
                    *v = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(net)
    }

    pub fn zeros(config: CorrectorConfig, feature_width: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if feature_width == 0 || num_classes < 2 {
            return Err(Error::config(
                "corrector needs a feature width and at least two classes",
            ));
        }
        let c_out = config.output_width(num_classes);
        let params = param_shapes(&config, feature_width, c_out)
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        Ok(Corrector {
            config,
            feature_width,
            c_out,
            params,
        })
    }

    pub fn from_params(
        config: CorrectorConfig,
        feature_width: usize,
        c_out: usize,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(&config, feature_width, c_out);
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(Error::config("corrector parameters do not match the configuration"));
        }
        Ok(Corrector {
            config,
            feature_width,
            c_out,
            params,
        })
    }

    pub fn config(&self) -> &CorrectorConfig {
        &self.config
    }

    pub fn mode(&self) -> FeatureMode {
        self.config.mode
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> CorrectorNodes {
        let params = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    g.leaf(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect();
        CorrectorNodes { params }
    }

    /// One LSTM step for a batch: features `[B x F]`, states `[B x H]`.
    pub fn lstm_step_graph(
        &self,
        g: &mut Graph,
        n: &CorrectorNodes,
        f: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let width = self.hidden_size();
        if g.value(f).cols() != self.feature_width {
            return Err(Error::Dimension {
                op: "lstm_step",
                left: g.value(f).shape().to_vec(),
                right: vec![self.feature_width],
            });
        }
        let zx = g.matmul(f, n.params[0])?;
        let zh = g.matmul(h, n.params[1])?;
        let z = g.add(zx, zh)?;
        let z = g.add_row(z, n.params[2])?;
        let i = g.slice_cols(z, 0, width)?;
        let i = g.sigmoid(i);
        let fg = g.slice_cols(z, width, 2 * width)?;
        let fg = g.sigmoid(fg);
        let o = g.slice_cols(z, 2 * width, 3 * width)?;
        let o = g.sigmoid(o);
        let u = g.slice_cols(z, 3 * width, 4 * width)?;
        let u = g.tanh(u);
        let keep = g.mul(fg, c)?;
        let write = g.mul(i, u)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Decoder logits from the hidden state (and optionally the features).
    fn decoder_logits(&self, g: &mut Graph, n: &CorrectorNodes, h: NodeId, f: NodeId) -> Result<NodeId> {
        let input = if self.config.include_raw_features {
            g.concat_cols(&[h, f])?
        } else {
            h
        };
        let a = g.matmul(input, n.params[3])?;
        let a = g.add_row(a, n.params[4])?;
        let a = g.relu(a);
        let z = g.matmul(a, n.params[5])?;
        g.add_row(z, n.params[6])
    }

    /// `softmax(W2 relu(W1 h + b1) + b2)`.
    pub fn decode_graph(&self, g: &mut Graph, n: &CorrectorNodes, h: NodeId, f: NodeId) -> Result<NodeId> {
        if self.mode() != FeatureMode::Standard {
            return Err(Error::contract(
                "decode needs a standard-mode corrector; use decode_mixing",
            ));
        }
        let z = self.decoder_logits(g, n, h, f)?;
        Ok(g.softmax(z))
    }

    /// Convex combination of the noisy one-hot, the current prediction and
    /// the previous prediction, weighted by a softmax over three logits.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_mixing_graph(
        &self,
        g: &mut Graph,
        n: &CorrectorNodes,
        h: NodeId,
        f: NodeId,
        onehot: NodeId,
        probs_now: NodeId,
        probs_prev: NodeId,
    ) -> Result<NodeId> {
        if self.mode() != FeatureMode::Agnostic {
            return Err(Error::contract("decode_mixing needs an agnostic-mode corrector"));
        }
        let z = self.decoder_logits(g, n, h, f)?;
        let w = g.softmax(z);
        let mut terms = Vec::with_capacity(3);
        for (k, dist) in [onehot, probs_now, probs_prev].into_iter().enumerate() {
            let wk = g.slice_cols(w, k, k + 1)?;
            terms.push(g.mul_col(dist, wk)?);
        }
        let s = g.add(terms[0], terms[1])?;
        g.add(s, terms[2])
    }

    /// Corrected distribution on the graph, dispatching on the mode.
    #[allow(clippy::too_many_arguments)]
    pub fn output_graph(
        &self,
        g: &mut Graph,
        n: &CorrectorNodes,
        h: NodeId,
        f: NodeId,
        noisy_labels: &[usize],
        probs_now: NodeId,
        probs_prev: NodeId,
    ) -> Result<NodeId> {
        match self.mode() {
            FeatureMode::Standard => self.decode_graph(g, n, h, f),
            FeatureMode::Agnostic => {
                let c = g.value(probs_now).cols();
                let onehot = g.constant(onehot_rows(noisy_labels, c)?);
                self.decode_mixing_graph(g, n, h, f, onehot, probs_now, probs_prev)
            }
        }
    }

    pub fn lstm_step(&self, f: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let n = self.bind(&mut g, false);
        let (fi, hi, ci) = (g.constant(f.clone()), g.constant(h.clone()), g.constant(c.clone()));
        let (h2, c2) = self.lstm_step_graph(&mut g, &n, fi, hi, ci)?;
        Ok((g.value(h2).clone(), g.value(c2).clone()))
    }

    /// Standard-mode decoder for hidden states `[B x H]`. Raw features are
    /// needed only when the config includes them.
    pub fn decode(&self, h: &Tensor, f: Option<&Tensor>) -> Result<Tensor> {
        let mut g = Graph::new();
        let n = self.bind(&mut g, false);
        let hi = g.constant(h.clone());
        let fi = self.feature_node(&mut g, h, f)?;
        let y = self.decode_graph(&mut g, &n, hi, fi)?;
        Ok(g.value(y).clone())
    }

    pub fn decode_mixing(
        &self,
        h: &Tensor,
        f: Option<&Tensor>,
        noisy_onehot: &Tensor,
        probs_now: &Tensor,
        probs_prev: &Tensor,
    ) -> Result<Tensor> {
        let mut g = Graph::new();
        let n = self.bind(&mut g, false);
        let hi = g.constant(h.clone());
        let fi = self.feature_node(&mut g, h, f)?;
        let (o, pn, pp) = (
            g.constant(noisy_onehot.clone()),
            g.constant(probs_now.clone()),
            g.constant(probs_prev.clone()),
        );
        let y = self.decode_mixing_graph(&mut g, &n, hi, fi, o, pn, pp)?;
        Ok(g.value(y).clone())
    }

    fn feature_node(&self, g: &mut Graph, h: &Tensor, f: Option<&Tensor>) -> Result<NodeId> {
        match f {
            Some(f) => Ok(g.constant(f.clone())),
            None if self.config.include_raw_features => {
                Err(Error::contract("this corrector decodes from features as well as h"))
            }
            None => Ok(g.constant(Tensor::zeros(&[h.rows(), self.feature_width]))),
        }
    }

    /// Forward pass for a batch without gradients.
    ///
    /// Builds features from `probs` and `losses`, advances each sample's
    /// state from `state_in` and decodes. With `state_in == None` the step
    /// starts from zero state.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_batch(
        &self,
        probs: &Tensor,
        losses: &[f64],
        noisy_labels: &[usize],
        spec: FeatureSpec,
        state_in: Option<(&Tensor, &Tensor)>,
        probs_prev: Option<&Tensor>,
    ) -> Result<CorrectorOutput> {
        let features = build_features(losses, probs, noisy_labels, spec)?;
        let b = probs.rows();
        let width = self.hidden_size();
        if features.cols() != self.feature_width {
            return Err(Error::Dimension {
                op: "lstm_step",
                left: features.shape().to_vec(),
                right: vec![self.feature_width],
            });
        }
        let zeros = Tensor::zeros(&[b, width]);
        let (h0, c0) = state_in.unwrap_or((&zeros, &zeros));
        let uniform;
        let prev = match probs_prev {
            Some(p) => p,
            None => {
                uniform = Tensor::full(probs.shape(), 1.0 / probs.cols() as f64);
                &uniform
            }
        };
        if h0.shape() != [b, width] || c0.shape() != [b, width] || prev.shape() != probs.shape() {
            return Err(Error::Dimension {
                op: "forward_batch",
                left: h0.shape().to_vec(),
                right: vec![b, width],
            });
        }
        let mut h = Tensor::zeros(&[b, width]);
        let mut c = Tensor::zeros(&[b, width]);
        let mut corrected = Tensor::zeros(&[b, probs.cols()]);
        let mut scratch = RowScratch::new(self);
        for (r, &label_r) in noisy_labels.iter().enumerate().take(b) {
            self.step_row(
                &mut scratch,
                features.row(r),
                h0.row(r),
                c0.row(r),
                h.row_mut(r),
                c.row_mut(r),
            );
            let hr = h.row(r);
            let out = corrected.row_mut(r);
            match self.mode() {
                FeatureMode::Standard => {
                    self.decode_row(&mut scratch, hr, features.row(r), out);
                }
                FeatureMode::Agnostic => {
                    let mut w = [0.0; 3];
                    self.decode_row(&mut scratch, hr, features.row(r), &mut w);
                    let (now, before) = (probs.row(r), prev.row(r));
                    for (k, o) in out.iter_mut().enumerate() {
                        let label = if k == label_r { 1.0 } else { 0.0 };
                        *o = (label * w[0] + now[k] * w[1]) + before[k] * w[2];
                    }
                }
            }
        }
        Ok(CorrectorOutput {
            corrected,
            features,
            h,
            c,
        })
    }

    /// One LSTM step for a single sample, mirroring [`Self::lstm_step_graph`]
    /// operation for operation.
    fn step_row(&self, s: &mut RowScratch, f: &[f64], h: &[f64], c: &[f64], h_out: &mut [f64], c_out: &mut [f64]) {
        let width = self.hidden_size();
        row_times(f, &self.params[0], &mut s.zx);
        row_times(h, &self.params[1], &mut s.zh);
        let bias = self.params[2].data();
        for ((z, &zh), &bj) in s.zx.iter_mut().zip(&s.zh).zip(bias) {
            *z = (*z + zh) + bj;
        }
        for j in 0..width {
            let i = kernels::sigmoid(s.zx[j]);
            let fg = kernels::sigmoid(s.zx[width + j]);
            let o = kernels::sigmoid(s.zx[2 * width + j]);
            let u = s.zx[3 * width + j].tanh();
            let cn = fg * c[j] + i * u;
            c_out[j] = cn;
            h_out[j] = o * cn.tanh();
        }
    }

    /// Decoder softmax for a single sample.
    fn decode_row(&self, s: &mut RowScratch, h: &[f64], f: &[f64], out: &mut [f64]) {
        s.input.clear();
        s.input.extend_from_slice(h);
        if self.config.include_raw_features {
            s.input.extend_from_slice(f);
        }
        row_times(&s.input, &self.params[3], &mut s.hidden);
        for (a, b) in s.hidden.iter_mut().zip(self.params[4].data()) {
            let v = *a + b;
            *a = if v > 0.0 { v } else { 0.0 };
        }
        row_times(&s.hidden, &self.params[5], &mut s.logits);
        for (a, b) in s.logits.iter_mut().zip(self.params[6].data()) {
            *a += b;
        }
        kernels::softmax_into(&s.logits, out);
    }

    /// Full pipeline for the samples `indices`: reads their states from the
    /// store, corrects, and writes the advanced states back.
    pub fn correct_batch(
        &self,
        probs: &Tensor,
        losses: &[f64],
        noisy_labels: &[usize],
        indices: &[usize],
        store: &mut DynamicsStore,
        spec: FeatureSpec,
    ) -> Result<Tensor> {
        let (h, c) = store.get(indices)?;
        let prev = store.prev_probs(indices)?;
        let out = self.forward_batch(probs, losses, noisy_labels, spec, Some((&h, &c)), Some(&prev))?;
        store.update(indices, &out.h, &out.c)?;
        store.set_prev_probs(indices, probs)?;
        store.record(indices, &out.features, losses)?;
        Ok(out.corrected)
    }
}

struct RowScratch {
    zx: Vec<f64>,
    zh: Vec<f64>,
    input: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl RowScratch {
    fn new(net: &Corrector) -> Self {
        let gates = 4 * net.hidden_size();
        RowScratch {
            zx: vec![0.0; gates],
            zh: vec![0.0; gates],
            input: Vec::with_capacity(net.params[3].rows()),
            hidden: vec![0.0; net.config.decoder_width()],
            logits: vec![0.0; net.c_out],
        }
    }
}

/// `out = x W` for a row vector, accumulating in the same order as
/// [`Tensor::matmul`].
fn row_times(x: &[f64], w: &Tensor, out: &mut [f64]) {
    let n = w.cols();
    out.fill(0.0);
    for (p, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(&w.data()[p * n..(p + 1) * n]) {
            *o += a * b;
        }
    }
}

/// Result of [`Corrector::forward_batch`].
#[derive(Debug, Clone)]
pub struct CorrectorOutput {
    pub corrected: Tensor,
    pub features: Tensor,
    pub h: Tensor,
    pub c: Tensor,
}
