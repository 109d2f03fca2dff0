use tmlc_core::baselines::{resolve_transition, run_ablation, run_ce, run_method, MethodSpec, TransitionSource};
use tmlc_core::basemodel::OptimizerConfig;
use tmlc_core::corrector::CorrectorConfig;
use tmlc_core::datagen::{gen_blobs, inject_noise, NoiseSpec, NoisyDataset};
use tmlc_core::metaloop::{MetaConfig, TrainConfig};
use tmlc_core::numcore::{kernels, Tensor};

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        hidden_layers: vec![16],
        optimizer: OptimizerConfig::sgd(0.1),
    }
}

fn meta() -> MetaConfig {
    MetaConfig {
        warmup_epochs: 1,
        corrector: CorrectorConfig {
            hidden_size: 4,
            ..CorrectorConfig::default()
        },
        ..MetaConfig::default()
    }
}

fn noisy(rate: f64, per_class: usize, seed: u64) -> (NoisyDataset, NoiseSpec) {
    let spec = NoiseSpec::symmetric(rate, seed + 50);
    (
        inject_noise(&gen_blobs(3, per_class, 2, 0.5, seed).unwrap(), &spec).unwrap(),
        spec,
    )
}

fn csv(m: &MethodSpec, ds: &NoisyDataset, noise: &NoiseSpec, seed: u64) -> String {
    let out = run_method(m, ds, None, Some(noise), &cfg(5), &meta(), seed).unwrap();
    out.log.to_csv_string().unwrap()
}

#[test]
fn identity_parameters_reduce_to_cross_entropy_bitwise() {
    let (ds, noise) = noisy(0.4, 60, 1);
    for seed in [3, 4] {
        let ce = csv(&MethodSpec::Ce, &ds, &noise, seed);
        assert_eq!(
            csv(&MethodSpec::LabelSmoothing { smoothing: 0.0 }, &ds, &noise, seed),
            ce
        );
        let fwd = MethodSpec::ForwardCorrection {
            transition: TransitionSource::Identity,
        };
        assert_eq!(csv(&fwd, &ds, &noise, seed), ce);
        assert_eq!(csv(&MethodSpec::Bootstrap { beta: 1.0 }, &ds, &noise, seed), ce);
        assert_ne!(csv(&MethodSpec::Bootstrap { beta: 0.5 }, &ds, &noise, seed), ce);
    }
}

#[test]
fn models_are_identical_under_identity_reductions() {
    let (ds, noise) = noisy(0.3, 40, 2);
    let a = run_method(&MethodSpec::Ce, &ds, None, Some(&noise), &cfg(4), &meta(), 9).unwrap();
    let b = run_method(
        &MethodSpec::ForwardCorrection {
            transition: TransitionSource::Identity,
        },
        &ds,
        None,
        Some(&noise),
        &cfg(4),
        &meta(),
        9,
    )
    .unwrap();
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn clean_blobs_are_learned() {
    let train = gen_blobs(3, 300, 2, 0.5, 5).unwrap();
    let test = gen_blobs(3, 200, 2, 0.5, 6).unwrap();
    let out = run_ce(&train, Some(&test), &cfg(100), 0).unwrap();
    let acc = out.log.last().unwrap().acc_test.unwrap();
    assert!(acc >= 0.95, "clean test accuracy {acc}");
}

#[test]
fn label_noise_is_measurable_in_training_accuracy() {
    let clean = gen_blobs(3, 200, 2, 1.2, 7).unwrap();
    let noisy = inject_noise(&clean, &NoiseSpec::symmetric(0.4, 8)).unwrap();
    let wide = TrainConfig {
        hidden_layers: vec![64, 64],
        ..cfg(150)
    };
    let a = run_ce(&clean, None, &wide, 1)
        .unwrap()
        .log
        .last()
        .unwrap()
        .acc_train_true;
    let b = run_ce(&noisy, None, &wide, 1)
        .unwrap()
        .log
        .last()
        .unwrap()
        .acc_train_true;
    assert!(b < a, "noisy {b} vs clean {a}");
}

#[test]
fn runs_are_deterministic() {
    let (ds, noise) = noisy(0.4, 40, 3);
    for m in [MethodSpec::Ce, MethodSpec::Bootstrap { beta: 0.7 }, MethodSpec::Tmlc] {
        assert_eq!(csv(&m, &ds, &noise, 2), csv(&m, &ds, &noise, 2));
    }
}

#[test]
fn smoothing_targets_have_the_expected_floor() {
    let (ds, noise) = noisy(0.4, 30, 4);
    let out = run_method(
        &MethodSpec::LabelSmoothing { smoothing: 0.3 },
        &ds,
        None,
        Some(&noise),
        &cfg(1),
        &meta(),
        1,
    )
    .unwrap();
    let min = out.corrected.data().iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((min - 0.1).abs() < 1e-12);
}

#[test]
fn forward_correction_uses_row_stochastic_matrices() {
    let q = resolve_transition(&TransitionSource::True, Some(&NoiseSpec::symmetric(0.4, 0)), 3).unwrap();
    assert!((q.get(0, 0) - 0.6).abs() < 1e-15 && (q.get(0, 1) - 0.2).abs() < 1e-15);
    let p = kernels::softmax(&Tensor::from_rows(&[vec![0.3, -1.0, 2.0], vec![5.0, 0.0, 0.0]]).unwrap());
    let mixed = p.matmul(&q).unwrap();
    for r in 0..2 {
        kernels::check_simplex("mixed", mixed.row(r)).unwrap();
    }
    let bad = TransitionSource::Matrix(vec![vec![0.5, 0.6, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    assert!(resolve_transition(&bad, None, 3).unwrap_err().is_config());
    let (ds, _) = noisy(0.2, 10, 5);
    let err = run_method(
        &MethodSpec::ForwardCorrection { transition: bad },
        &ds,
        None,
        None,
        &cfg(1),
        &meta(),
        0,
    )
    .unwrap_err();
    assert!(err.is_config());
    assert!(resolve_transition(&TransitionSource::True, None, 3)
        .unwrap_err()
        .is_config());
}

#[test]
fn invalid_parameters_are_config_errors() {
    assert!(MethodSpec::LabelSmoothing { smoothing: 1.0 }
        .validate()
        .unwrap_err()
        .is_config());
    assert!(MethodSpec::Bootstrap { beta: -0.1 }.validate().unwrap_err().is_config());
    assert!(MethodSpec::parse_name("mixup").unwrap_err().is_config());
    let (ds, _) = noisy(0.2, 10, 6);
    assert!(run_ablation(&MethodSpec::Ce, &ds, None, &cfg(2), &meta(), 0)
        .unwrap_err()
        .is_config());
}

#[test]
fn method_spec_json() {
    let m: MethodSpec = serde_json::from_str(r#"{"kind":"bootstrap","beta":0.8}"#).unwrap();
    assert_eq!(m, MethodSpec::Bootstrap { beta: 0.8 });
    let f: MethodSpec = serde_json::from_str(r#"{"kind":"forward_correction"}"#).unwrap();
    assert_eq!(
        f,
        MethodSpec::ForwardCorrection {
            transition: TransitionSource::True
        }
    );
    assert!(serde_json::from_str::<MethodSpec>(r#"{"kind":"ce","beta":1}"#).is_err());
    for name in [
        "ce",
        "label_smoothing",
        "forward_correction",
        "bootstrap",
        "tmlc",
        "tmlc_wo_nnp",
        "tmlc_wo_tse",
        "tmlc_wo_sd",
    ] {
        assert_eq!(MethodSpec::parse_name(name).unwrap().name(), name);
    }
}

#[test]
fn ablations_emit_complete_logs_and_hard_targets() {
    let (ds, _) = noisy(0.4, 30, 7);
    for m in [MethodSpec::TmlcWoNnp, MethodSpec::TmlcWoTse, MethodSpec::TmlcWoSd] {
        let out = run_ablation(&m, &ds, None, &cfg(4), &meta(), 1).unwrap();
        assert_eq!(out.log.rows.len(), 4);
        assert_eq!(out.metadata.method, m.name());
        assert!(out.snapshots.is_some());
    }
}

#[test]
fn bootstrap_targets_stay_on_simplex() {
    let (ds, noise) = noisy(0.4, 30, 8);
    for beta in [0.0, 0.3, 1.0] {
        let out = run_method(
            &MethodSpec::Bootstrap { beta },
            &ds,
            None,
            Some(&noise),
            &cfg(2),
            &meta(),
            1,
        )
        .unwrap();
        for r in 0..out.corrected.rows() {
            kernels::check_simplex("bootstrap", out.corrected.row(r)).unwrap();
        }
    }
}
