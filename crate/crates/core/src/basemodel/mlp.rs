use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{kernels, Graph, NodeId, Tensor};
use crate::rng::rng_from;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Fully connected classifier with ReLU hidden layers and a linear output
/// layer. Parameters are stored as `[W0, b0, W1, b1, ...]` with each `W`
/// shaped `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<Tensor>,
}

/// Nodes produced by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpForward {
    pub logits: NodeId,
    pub probs: NodeId,
    pub params: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layer_sizes: Vec<usize>,
    params: Vec<Vec<f64>>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("an MLP needs at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config(format!("zero-width layer in {layer_sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = rng_from(seed);
        let mut params = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, data)?);
            params.push(Tensor::zeros(&[fan_out]));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let params = layer_sizes
            .windows(2)
            .flat_map(|w| [Tensor::zeros(&[w[0], w[1]]), Tensor::zeros(&[w[1]])])
            .collect();
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<Tensor>) -> Result<Self> {
        let template = Mlp::zeros(layer_sizes)?;
        if params.len() != template.params.len()
            || params.iter().zip(&template.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::config(format!(
                "parameters do not match layer sizes {layer_sizes:?}"
            )));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
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

    /// Builds the forward pass on `g`. With `trainable` the parameters are
    /// differentiable leaves, otherwise constants.
    pub fn forward(&self, g: &mut Graph, x: NodeId, trainable: bool) -> Result<MlpForward> {
        if g.value(x).cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "mlp input",
                left: g.value(x).shape().to_vec(),
                right: vec![self.input_dim()],
            });
        }
        let ids: Vec<NodeId> = self
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
        let layers = ids.len() / 2;
        let mut a = x;
        for l in 0..layers {
            let z = g.matmul(a, ids[2 * l])?;
            let z = g.add_row(z, ids[2 * l + 1])?;
            a = if l + 1 < layers { g.relu(z) } else { z };
        }
        let probs = g.softmax(a);
        Ok(MlpForward {
            logits: a,
            probs,
            params: ids,
        })
    }

    /// Logits and row-wise probabilities for a batch `X` (B x d).
    pub fn forward_batch(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let out = self.forward(&mut g, xn, false)?;
        Ok((g.value(out.logits).clone(), g.value(out.probs).clone()))
    }

    pub fn predict_probs(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_batch(x)?.1)
    }

    /// Predicted class per row, ties to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let p = self.predict_probs(x)?;
        Ok((0..p.rows()).map(|r| kernels::argmax(p.row(r))).collect())
    }

    /// Forward-mode derivative of the clamped log-probabilities along a
    /// parameter-space direction. Returns `(probs, d ln p)`.
    pub fn jvp_log_probs(&self, x: &Tensor, tangent: &[Tensor]) -> Result<(Tensor, Tensor)> {
        if tangent.len() != self.params.len() || tangent.iter().zip(&self.params).any(|(t, p)| t.len() != p.len()) {
            return Err(Error::contract("tangent does not match the parameter layout"));
        }
        let layers = self.params.len() / 2;
        let mut a = x.clone().reshape(vec![x.rows(), x.cols()])?;
        let mut da = Tensor::zeros(a.shape());
        for l in 0..layers {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let (dw, db) = (&tangent[2 * l], &tangent[2 * l + 1]);
            let dw = dw.clone().reshape(w.shape().to_vec())?;
            let mut z = a.matmul(w)?;
            let mut dz = da.matmul(w)?;
            dz.add_assign(&a.matmul(&dw)?);
            let cols = z.cols();
            for (zr, dzr) in z
                .data_mut()
                .chunks_exact_mut(cols)
                .zip(dz.data_mut().chunks_exact_mut(cols))
            {
                for k in 0..cols {
                    zr[k] += b.data()[k];
                    dzr[k] += db.data()[k];
                }
            }
            if l + 1 < layers {
                for (zv, dzv) in z.data_mut().iter_mut().zip(dz.data_mut()) {
                    if *zv <= 0.0 {
                        *zv = 0.0;
                        *dzv = 0.0;
                    }
                }
            }
            a = z;
            da = dz;
        }
        let probs = kernels::softmax(&a);
        let mut dlogp = Tensor::zeros(a.shape());
        for r in 0..a.rows() {
            let p = probs.row(r);
            let dl = da.row(r);
            let mean: f64 = p.iter().zip(dl).map(|(pv, dv)| pv * dv).sum();
            for (c, o) in dlogp.row_mut(r).iter_mut().enumerate() {
                *o = if p[c] > kernels::LOG_CLAMP { dl[c] - mean } else { 0.0 };
            }
        }
        Ok((probs, dlogp))
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            params: self.params.iter().map(|p| p.data().to_vec()).collect(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                0,
                format!("unsupported checkpoint version {}", ck.version),
            ));
        }
        let template = Mlp::zeros(&ck.layer_sizes)?;
        if ck.params.len() != template.params.len() {
            return Err(Error::format(0, "checkpoint parameter count mismatch"));
        }
        let params = ck
            .params
            .into_iter()
            .zip(&template.params)
            .map(|(data, t)| {
                Tensor::new(t.shape().to_vec(), data)
                    .map_err(|_| Error::format(0, "checkpoint parameter shape mismatch"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp {
            layer_sizes: ck.layer_sizes,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json(&text)
    }
}

/// Row-wise soft cross-entropy between predicted probabilities and targets.
pub fn per_sample_losses(probs: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = g.constant(probs.clone());
    let t = g.constant(targets.clone());
    for r in 0..targets.rows() {
        kernels::check_simplex("loss target", targets.row(r))?;
    }
    let l = g.soft_cross_entropy(p, t)?;
    Ok(g.value(l).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{compare_with_central_differences, uniform};

    #[test]
    fn parameter_count_and_zero_bias() {
        let m = Mlp::init(&[2, 3], 1).unwrap();
        assert_eq!(m.params()[0].len(), 6);
        assert_eq!(m.params()[1].len(), 3);
        assert!(m.params()[1].data().iter().all(|&b| b == 0.0));
        assert_eq!(m, Mlp::init(&[2, 3], 1).unwrap());
        assert_ne!(m, Mlp::init(&[2, 3], 2).unwrap());
        assert!(Mlp::init(&[2, 0, 3], 1).is_err());
        assert!(Mlp::init(&[2], 1).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let m = Mlp::init(&[10, 20, 5], 4).unwrap();
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(m.params()[0].data().iter().all(|w| w.abs() <= lim));
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let m = Mlp::zeros(&[3, 4, 5]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]]).unwrap();
        let (_, p) = m.forward_batch(&x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_linear_layer_by_hand() {
        let w = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        let b = Tensor::vector(vec![0.1, -0.2]);
        let m = Mlp::from_params(&[2, 2], vec![w, b]).unwrap();
        let x = Tensor::from_rows(&[vec![2.0, 4.0]]).unwrap();
        let (logits, probs) = m.forward_batch(&x).unwrap();
        assert_eq!(logits.data(), &[2.0 + 2.0 + 0.1, -2.0 + 8.0 - 0.2]);
        let e = (5.8f64 - 4.1).exp();
        assert!((probs.get(0, 1) - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let m = Mlp::init(&[3, 2], 0).unwrap();
        let x = Tensor::zeros(&[4, 2]);
        assert!(matches!(m.forward_batch(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rows_sum_to_one() {
        let m = Mlp::init(&[4, 8, 6], 3).unwrap();
        let x = uniform(&mut rng_from(3), &[16, 4], -3.0, 3.0);
        let p = m.predict_probs(&x).unwrap();
        for r in 0..16 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn per_sample_loss_examples() {
        let onehot = Tensor::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(per_sample_losses(&onehot, &onehot).unwrap().data()[0] <= 1e-11);
        let uniform_p = Tensor::full(&[3, 4], 0.25);
        let t = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let l = per_sample_losses(&uniform_p, &t).unwrap();
        assert!(l.data().iter().all(|&v| (v - 4f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn batch_mean_is_the_training_loss() {
        let m = Mlp::init(&[2, 5, 3], 8).unwrap();
        let x = uniform(&mut rng_from(8), &[6, 2], -1.0, 1.0);
        let targets = kernels::softmax(&uniform(&mut rng_from(9), &[6, 3], -1.0, 1.0));
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let f = m.forward(&mut g, xn, true).unwrap();
        let t = g.constant(targets.clone());
        let l = g.soft_cross_entropy(f.probs, t).unwrap();
        let mean = g.mean(l);
        let direct = per_sample_losses(g.value(f.probs), &targets).unwrap();
        assert_eq!(g.value(mean).item(), direct.sum() / 6.0);
    }

    fn flat(params: &[Tensor]) -> Tensor {
        Tensor::vector(params.iter().flat_map(|p| p.data().to_vec()).collect())
    }

    fn unflat(template: &Mlp, v: &Tensor) -> Mlp {
        let mut m = template.clone();
        let mut k = 0;
        for p in m.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&v.data()[k..k + n]);
            k += n;
        }
        m
    }

    fn mean_loss(m: &Mlp, x: &Tensor, targets: &Tensor) -> f64 {
        let p = m.predict_probs(x).unwrap();
        per_sample_losses(&p, targets).unwrap().sum() / x.rows() as f64
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = rng_from(100 + seed);
            let sizes = [3, rng.random_range(1..=6), rng.random_range(2..=5)];
            let m = Mlp::init(&sizes, seed).unwrap();
            let b = rng.random_range(1..=8);
            let x = uniform(&mut rng, &[b, 3], -1.0, 1.0);
            let targets = kernels::softmax(&uniform(&mut rng, &[b, sizes[2]], -2.0, 2.0));

            let mut g = Graph::new();
            let xn = g.constant(x.clone());
            let f = m.forward(&mut g, xn, true).unwrap();
            let t = g.constant(targets.clone());
            let l = g.soft_cross_entropy(f.probs, t).unwrap();
            let mean = g.mean(l);
            g.backward(mean).unwrap();
            let analytic = flat(&f.params.iter().map(|&p| g.grad(p)).collect::<Vec<_>>());
            let err = compare_with_central_differences(
                |v| mean_loss(&unflat(&m, v), &x, &targets),
                &analytic,
                &flat(m.params()),
                1e-5,
            );
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let m = Mlp::init(&[2, 6, 3], 5).unwrap();
        let x = uniform(&mut rng_from(5), &[4, 2], -1.0, 1.0);
        let tangent: Vec<Tensor> = m
            .params()
            .iter()
            .enumerate()
            .map(|(i, p)| uniform(&mut rng_from(50 + i as u64), p.shape(), -1.0, 1.0))
            .collect();
        let (_, dlogp) = m.jvp_log_probs(&x, &tangent).unwrap();
        let h = 1e-6;
        let shifted = |s: f64| {
            let mut mm = m.clone();
            for (p, t) in mm.params_mut().iter_mut().zip(&tangent) {
                for (a, b) in p.data_mut().iter_mut().zip(t.data()) {
                    *a += s * b;
                }
            }
            mm.predict_probs(&x).unwrap().map(|v| v.ln())
        };
        let (up, down) = (shifted(h), shifted(-h));
        for k in 0..dlogp.len() {
            let fd = (up.data()[k] - down.data()[k]) / (2.0 * h);
            assert!((fd - dlogp.data()[k]).abs() < 1e-6, "{k}: {fd} vs {}", dlogp.data()[k]);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Mlp::init(&[2, 4, 3], 6).unwrap();
        let back = Mlp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        assert!(Mlp::from_json(r#"{"version":9,"layer_sizes":[2,3],"params":[]}"#).is_err());
    }
}
