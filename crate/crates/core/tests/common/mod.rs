//! Randomised simplex and normalization properties shared by the property
//! tests and the acceptance suite.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use tmlc_core::corrector::{Corrector, CorrectorConfig};
use tmlc_core::dynamics::{
    compute_cnl, compute_gnl, compute_pe, noisy_label_losses, onehot_rows, FeatureMode, FeatureSpec, LossFeatures,
};
use tmlc_core::metaloop::soften_label;
use tmlc_core::numcore::{softmax, Tensor};

pub const TOL: f64 = 1e-9;

/// One random batch: logits, a second set of logits, hidden states and
/// noisy labels, plus parameters for a random corrector.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rows: usize,
    pub classes: usize,
    pub hidden: usize,
    pub logits: Vec<f64>,
    pub logits_prev: Vec<f64>,
    pub h: Vec<f64>,
    pub labels: Vec<usize>,
    pub smoothing: f64,
    pub seed: u64,
}

pub fn batch(logit_range: f64) -> impl Strategy<Value = Batch> {
    (1usize..9, 2usize..7, 1usize..7).prop_flat_map(move |(b, c, hidden)| {
        (
            prop::collection::vec(-logit_range..logit_range, b * c),
            prop::collection::vec(-logit_range..logit_range, b * c),
            prop::collection::vec(-3.0f64..3.0, b * hidden),
            prop::collection::vec(0..c, b),
            0.0f64..1.0,
            any::<u64>(),
        )
            .prop_map(move |(logits, logits_prev, h, labels, smoothing, seed)| Batch {
                rows: b,
                classes: c,
                hidden,
                logits,
                logits_prev,
                h,
                labels,
                smoothing,
                seed,
            })
    })
}

fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

pub fn simplex_violation(row: &[f64]) -> f64 {
    let sum: f64 = row.iter().sum();
    let neg = row.iter().cloned().fold(0.0f64, |m, v| m.max(-v));
    (sum - 1.0).abs().max(neg)
}

fn check_rows(what: &str, t: &Tensor) -> Result<(), TestCaseError> {
    for r in 0..t.rows() {
        let v = simplex_violation(t.row(r));
        prop_assert!(v <= TOL, "{what} row {r}: {:?} off the simplex by {v}", t.row(r));
    }
    Ok(())
}

fn corrector(b: &Batch, mode: FeatureMode) -> Corrector {
    let cfg = CorrectorConfig {
        mode,
        hidden_size: b.hidden,
        ..CorrectorConfig::default()
    };
    let width = FeatureSpec::new(mode, LossFeatures::Normalized).width(b.classes);
    Corrector::init(cfg, width, b.classes, b.seed).unwrap()
}

pub fn softmax_is_simplex(b: &Batch) -> Result<(), TestCaseError> {
    check_rows("softmax", &softmax(&mat(b.rows, b.classes, &b.logits)))
}

pub fn decode_is_simplex(b: &Batch) -> Result<(), TestCaseError> {
    let net = corrector(b, FeatureMode::Standard);
    let y = net.decode(&mat(b.rows, b.hidden, &b.h), None).unwrap();
    check_rows("decode", &y)
}

pub fn decode_mixing_is_simplex(b: &Batch) -> Result<(), TestCaseError> {
    let net = corrector(b, FeatureMode::Agnostic);
    let onehot = onehot_rows(&b.labels, b.classes).unwrap();
    let now = softmax(&mat(b.rows, b.classes, &b.logits));
    let prev = softmax(&mat(b.rows, b.classes, &b.logits_prev));
    let y = net
        .decode_mixing(&mat(b.rows, b.hidden, &b.h), None, &onehot, &now, &prev)
        .unwrap();
    check_rows("decode_mixing", &y)
}

pub fn soften_label_is_simplex(b: &Batch) -> Result<(), TestCaseError> {
    for &y in &b.labels {
        let t = soften_label(y, b.smoothing, b.classes);
        let v = simplex_violation(&t);
        prop_assert!(v <= TOL, "soften_label({y}, {}) off by {v}", b.smoothing);
    }
    Ok(())
}

/// Every simplex property on one batch.
pub fn all_simplex(b: &Batch) -> Result<(), TestCaseError> {
    softmax_is_simplex(b)?;
    decode_is_simplex(b)?;
    decode_mixing_is_simplex(b)?;
    soften_label_is_simplex(b)
}

/// Batch-mean GNL and per-class-mean CNL equal one; entropy lies in
/// `[0, ln C]`. Logits must be moderate enough that some loss exceeds the
/// normalizer clamp.
pub fn nnp_identities(b: &Batch) -> Result<(), TestCaseError> {
    let probs = softmax(&mat(b.rows, b.classes, &b.logits));
    let losses = noisy_label_losses(&probs, &b.labels);
    let gnl = compute_gnl(&losses);
    let mean = gnl.iter().sum::<f64>() / gnl.len() as f64;
    prop_assert!((mean - 1.0).abs() <= TOL, "GNL mean {mean}");
    let cnl = compute_cnl(&losses, &b.labels);
    for k in 0..b.classes {
        let members: Vec<f64> = cnl
            .iter()
            .zip(&b.labels)
            .filter(|(_, &y)| y == k)
            .map(|(v, _)| *v)
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.iter().sum::<f64>() / members.len() as f64;
        prop_assert!((m - 1.0).abs() <= TOL, "CNL mean of class {k} is {m}");
    }
    let ln_c = (b.classes as f64).ln();
    for pe in compute_pe(&probs) {
        prop_assert!((-TOL..=ln_c + TOL).contains(&pe), "PE {pe} outside [0, {ln_c}]");
    }
    Ok(())
}

/// Runs `check` on `cases` random batches; the error names the failing
/// input after shrinking.
pub fn run_cases(cases: u32, logit_range: f64, check: fn(&Batch) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&batch(logit_range), |b| check(&b))
        .map_err(|e| e.to_string())
}
