use rand::RngExt;

use super::*;
use crate::ingest::{synthesize, SynthConfig};

fn random_input(rng: &mut SeededRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
}

fn small_config() -> CnnConfig {
    CnnConfig {
        dropout_p: 0.0,
        dense_units: vec![7, 5],
        pool_w: 4,
        ..CnnConfig::default()
    }
}

/// Perturbs non-trivial BN parameters so their gradients are exercised.
fn jitter_params(model: &mut CnnModel, rng: &mut SeededRng) {
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v += (rng.random::<f64>() - 0.5) * 0.2;
        }
    }
}

fn train_loss(model: &CnnModel, x: &[f64], y: &[u8]) -> f64 {
    let mut rng = SeededRng::new(0);
    model.forward(x, Pass::Train(&mut rng)).unwrap().loss(y)
}

/// Central differences against the analytic gradient for the chosen
/// coordinates; returns the worst relative error.
fn worst_relative_error(model: &CnnModel, x: &[f64], y: &[u8], pick: impl Fn(usize, usize) -> bool) -> f64 {
    let mut rng = SeededRng::new(0);
    let cache = model.forward(x, Pass::Train(&mut rng)).unwrap();
    let grads = model.backward(x, y, &cache).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (ti, g) in grads.tensors().into_iter().enumerate() {
        for k in 0..g.len() {
            if !pick(ti, k) {
                continue;
            }
            let orig = probe.params.tensors()[ti][k];
            probe.params.tensors_mut()[ti][k] = orig + h;
            let up = train_loss(&probe, x, y);
            probe.params.tensors_mut()[ti][k] = orig - h;
            let down = train_loss(&probe, x, y);
            probe.params.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradient_check_small_network_every_parameter() {
    let mut rng = SeededRng::new(11);
    for (activation, pooling) in [
        (Activation::Elu, Pooling::Average),
        (Activation::Elu, Pooling::Max),
        (Activation::Relu, Pooling::Average),
    ] {
        for batchnorm in [true, false] {
            let cfg = CnnConfig {
                activation,
                pooling,
                batchnorm,
                ..small_config()
            };
            let mut model = CnnModel::new(&cfg, 3, 40).unwrap();
            jitter_params(&mut model, &mut rng);
            let x = random_input(&mut rng, 4 * 120, 3.0);
            let y = [1, 0, 0, 1];
            let worst = worst_relative_error(&model, &x, &y, |_, _| true);
            assert!(worst < 1e-4, "{activation:?} {pooling:?} bn={batchnorm}: {worst:e}");
        }
    }
}

#[test]
fn gradient_check_full_size_sampled() {
    let cfg = CnnConfig {
        dropout_p: 0.0,
        ..CnnConfig::default()
    };
    let mut rng = SeededRng::new(12);
    let mut model = CnnModel::new(&cfg, 3, 1200).unwrap();
    jitter_params(&mut model, &mut rng);
    let x = random_input(&mut rng, 4 * 3600, 10.0);
    let y = [0, 1, 1, 0];
    // every small tensor fully, large weight matrices on a stride
    let sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    let worst = worst_relative_error(&model, &x, &y, |ti, k| sizes[ti] < 1000 || k % 997 == 0);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn shape_chain_for_defaults() {
    let s = CnnConfig::default().shapes(3, 1200).unwrap();
    assert_eq!((s.conv_h, s.conv_w, s.maps), (1, 1198, 6));
    assert_eq!((s.conv_h, s.pooled_w, s.maps), (1, 149, 6));
    assert_eq!(s.flat, 894);
    assert_eq!(s.dense, vec![100]);
    assert_eq!(s.n_layers(), 9);
    let widths: Vec<usize> = (1..=9).map(|l| s.layer_width(l)).collect();
    assert_eq!(widths, vec![7188, 7188, 7188, 894, 894, 100, 100, 100, 2]);

    let model = CnnModel::new(&CnnConfig::default(), 3, 1200).unwrap();
    let x = vec![0.5; 2 * 3600];
    let cache = model.forward(&x, Pass::Eval).unwrap();
    for l in 1..=9 {
        assert_eq!(cache.layer(l).len(), 2 * widths[l - 1]);
    }
    assert_eq!(s.layer_grid(POOL_LAYER), (149, 6));
}

#[test]
fn zero_input_gives_even_odds() {
    let model = CnnModel::new(&CnnConfig::default(), 3, 1200).unwrap();
    let p = model.predict_proba(&vec![0.0; 3600]).unwrap();
    assert_eq!(p, vec![0.5, 0.5]);
}

#[test]
fn ones_filter_sums_the_input() {
    let cfg = CnnConfig {
        n_filters: 1,
        pool_w: 1,
        batchnorm: false,
        ..CnnConfig::default()
    };
    let mut model = CnnModel::new(&cfg, 3, 3).unwrap();
    model.params.conv_w = vec![1.0; 9];
    let x: Vec<f64> = (1..=9).map(|v| v as f64 * 0.5).collect();
    let cache = model.forward(&x, Pass::Eval).unwrap();
    assert_eq!(cache.layer(1), &[x.iter().sum::<f64>()]);
}

#[test]
fn output_gradient_is_p_minus_onehot() {
    let cfg = CnnConfig {
        dropout_p: 0.0,
        dense_units: vec![],
        ..small_config()
    };
    let mut rng = SeededRng::new(3);
    let model = CnnModel::new(&cfg, 3, 40).unwrap();
    let x = random_input(&mut rng, 2 * 120, 1.0);
    let y = [1u8, 0];
    let cache = model.forward(&x, Pass::Train(&mut rng)).unwrap();
    let g = model.backward(&x, &y, &cache).unwrap();
    let p = cache.probabilities();
    for o in 0..2 {
        let expected: f64 = (0..2)
            .map(|b| p[2 * b + o] - f64::from(u8::from(y[b] as usize == o)))
            .sum::<f64>()
            / 2.0;
        assert!((g.out_b[o] - expected).abs() < 1e-15);
    }
}

#[test]
fn duplicated_batch_leaves_gradients_unchanged() {
    let mut rng = SeededRng::new(4);
    let model = CnnModel::new(&small_config(), 3, 40).unwrap();
    let x = random_input(&mut rng, 3 * 120, 2.0);
    let y = [0u8, 1, 1];
    let mut x2 = x.clone();
    x2.extend_from_slice(&x);
    let y2 = [0u8, 1, 1, 0, 1, 1];
    let c1 = model.forward(&x, Pass::Train(&mut SeededRng::new(0))).unwrap();
    let g1 = model.backward(&x, &y, &c1).unwrap();
    let c2 = model.forward(&x2, Pass::Train(&mut SeededRng::new(0))).unwrap();
    let g2 = model.backward(&x2, &y2, &c2).unwrap();
    for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()), "{u} vs {v}");
        }
    }
}

#[test]
fn eval_is_deterministic_and_batch_invariant() {
    let mut rng = SeededRng::new(5);
    let mut model = CnnModel::new(&CnnConfig::default(), 3, 1200).unwrap();
    jitter_params(&mut model, &mut rng);
    model.running.conv.mean = vec![0.3; 6];
    model.running.conv.var = vec![2.0; 6];
    let x = random_input(&mut rng, 5 * 3600, 20.0);
    let batch = model.predict_proba(&x).unwrap();
    assert_eq!(batch, model.predict_proba(&x).unwrap());
    for (b, chunk) in x.chunks(3600).enumerate() {
        let single = model.predict_proba(chunk).unwrap();
        assert!((single[0] + single[1] - 1.0).abs() < 1e-9);
        for o in 0..2 {
            assert!((single[o] - batch[2 * b + o]).abs() < 1e-12);
        }
    }
}

#[test]
fn dropout_layer_is_unbiased() {
    let cfg = CnnConfig {
        batchnorm: false,
        ..CnnConfig::default()
    };
    let mut rng = SeededRng::new(6);
    let model = CnnModel::new(&cfg, 3, 1200).unwrap();
    let x = random_input(&mut rng, 3600, 10.0);
    let eval = model.forward(&x, Pass::Eval).unwrap().layer(3).to_vec();
    let draws = 10_000;
    let mut mean = vec![0.0; eval.len()];
    for _ in 0..draws {
        let c = model.forward(&x, Pass::Train(&mut rng)).unwrap();
        mean.iter_mut().zip(c.layer(3)).for_each(|(m, v)| *m += v / draws as f64);
    }
    let num: f64 = mean.iter().zip(&eval).map(|(m, e)| (m - e).abs()).sum();
    let den: f64 = eval.iter().map(|e| e.abs()).sum();
    assert!(num / den < 0.02, "{}", num / den);
}

#[test]
fn overflow_names_the_layer() {
    let mut model = CnnModel::new(&CnnConfig::default(), 3, 1200).unwrap();
    model.params.dense[0].b[0] = f64::MAX;
    model.params.dense[0].w[0..894].iter_mut().for_each(|w| *w = f64::MAX);
    let x = vec![50.0; 3600];
    let err = model.forward(&x, Pass::Eval).unwrap_err();
    assert!(matches!(err, Error::NumericOverflow { layer: 6 }), "{err}");
}

#[test]
fn layer_outputs_of_identical_inputs() {
    let set = synthesize(&SynthConfig {
        n_epochs: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let one = set.subset(&[0]);
    let four = set.subset(&[0, 0, 0, 0]);
    let model = CnnModel::new(&CnnConfig::default(), 3, 1200).unwrap();
    let a = layer_outputs(&model, &one, POOL_LAYER).unwrap();
    let b = layer_outputs(&model, &four, POOL_LAYER).unwrap();
    assert_eq!((a.rows(), a.cols()), (149, 6));
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-12);
    }
    assert!(matches!(layer_outputs(&model, &one, 10), Err(Error::InvalidLayer { .. })));
    assert!(matches!(layer_outputs(&model, &one, 0), Err(Error::InvalidLayer { .. })));
}

#[test]
fn training_is_deterministic_and_restores_best() {
    let set = synthesize(&SynthConfig {
        n_epochs: 120,
        n_samples: 300,
        p300_latency_ms: 60.0,
        noise_std_uv: 6.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let train = set.subset(&(0..90).collect::<Vec<_>>());
    let val = set.subset(&(90..120).collect::<Vec<_>>());
    let cfg = CnnConfig {
        max_epochs: 6,
        patience: 2,
        seed: 9,
        ..CnnConfig::default()
    };
    let a = train_cnn(&train, &val, &cfg).unwrap();
    let b = train_cnn(&train, &val, &cfg).unwrap();
    assert_eq!(a.training_log, b.training_log);
    assert_eq!(a.params, b.params);
    let min = a
        .training_log
        .iter()
        .filter_map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert!((a.eval_loss(&val).unwrap() - min).abs() < 1e-12);
}

#[test]
fn empty_validation_runs_all_epochs() {
    let set = synthesize(&SynthConfig {
        n_epochs: 40,
        n_samples: 100,
        p300_latency_ms: 50.0,
        prestim_ms: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = CnnConfig {
        max_epochs: 3,
        ..CnnConfig::default()
    };
    let m = train_cnn(&set, &set.same_shape_empty(), &cfg).unwrap();
    assert_eq!(m.training_log.len(), 3);
    assert!(m.training_log.iter().all(|e| e.val_loss.is_none()));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cnn.json");
    let mut rng = SeededRng::new(8);
    let mut model = CnnModel::new(&small_config(), 3, 40).unwrap();
    jitter_params(&mut model, &mut rng);
    model.save_json(&path).unwrap();
    let back = CnnModel::load_json(&path).unwrap();
    assert_eq!(back, model);
}
