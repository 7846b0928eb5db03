use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn class_spec(input_dim: usize, hidden: Vec<usize>, m: usize) -> ModelSpec {
    ModelSpec::new(input_dim, hidden, 0.0, Head::Classification { num_beams: m }).unwrap()
}

fn reg_spec(input_dim: usize, hidden: Vec<usize>, m: usize) -> ModelSpec {
    ModelSpec::new(input_dim, hidden, 0.0, Head::Regression { num_beams: m }).unwrap()
}

fn random_inputs(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> Array3<f64> {
    Array3::from_shape_fn((b, t, d), |_| rng.random_range(-1.0..1.0))
}

/// Independent scalar re-implementation of the stacked LSTM + dense head,
/// using nothing but nested loops over plain Vecs. Serves as the oracle for
/// the batched ndarray forward pass.
#[allow(clippy::needless_range_loop)]
fn scalar_forward(params: &Parameters, spec: &ModelSpec, inputs: &Array3<f64>) -> Vec<Vec<f64>> {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (batch, steps, _) = inputs.dim();
    let mut outputs = Vec::with_capacity(batch);
    for bi in 0..batch {
        let mut x_seq: Vec<Vec<f64>> = (0..steps)
            .map(|t| {
                (0..spec.input_dim)
                    .map(|d| inputs[[bi, t, d]])
                    .collect()
            })
            .collect();
        for (l, lp) in params.layers.iter().enumerate() {
            let h = spec.hidden_dims[l];
            let d = spec.layer_input_dim(l);
            let mut hidden = vec![0.0; h];
            let mut cell = vec![0.0; h];
            let mut out_seq = Vec::with_capacity(steps);
            for x in &x_seq {
                let mut z = vec![0.0; 4 * h];
                for (col, zc) in z.iter_mut().enumerate() {
                    let mut acc = lp.b[col];
                    for row in 0..d {
                        acc += x[row] * lp.w_x[[row, col]];
                    }
                    for row in 0..h {
                        acc += hidden[row] * lp.w_h[[row, col]];
                    }
                    *zc = acc;
                }
                let mut new_h = vec![0.0; h];
                for u in 0..h {
                    let gi = sig(z[u]);
                    let gf = sig(z[h + u]);
                    let gg = z[2 * h + u].tanh();
                    let go = sig(z[3 * h + u]);
                    cell[u] = gf * cell[u] + gi * gg;
                    new_h[u] = go * cell[u].tanh();
                }
                hidden = new_h.clone();
                out_seq.push(new_h);
            }
            x_seq = out_seq;
        }
        let last = x_seq.last().unwrap();
        let m = spec.output_dim();
        let mut row = vec![0.0; m];
        for (j, r) in row.iter_mut().enumerate() {
            let mut acc = params.head_b[j];
            for (u, hv) in last.iter().enumerate() {
                acc += hv * params.head_w[[u, j]];
            }
            *r = acc;
        }
        outputs.push(row);
    }
    outputs
}

fn loss_of(spec: &ModelSpec, params: &Parameters, batch: &SequenceBatch) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = forward(params, spec, &batch.inputs, false, &mut rng).unwrap();
    loss(&out, &batch.targets, &spec.head).unwrap()
}

/// Central finite differences over every parameter, step 1e-5.
fn numeric_grad(spec: &ModelSpec, params: &Parameters, batch: &SequenceBatch) -> Vec<f64> {
    let base = params.to_flat();
    let step = 1e-5;
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            plus[k] += step;
            let mut minus = base.clone();
            minus[k] -= step;
            let lp = loss_of(spec, &Parameters::from_flat(spec, &plus).unwrap(), batch);
            let lm = loss_of(spec, &Parameters::from_flat(spec, &minus).unwrap(), batch);
            (lp - lm) / (2.0 * step)
        })
        .collect()
}

fn random_batch(rng: &mut ChaCha8Rng, spec: &ModelSpec, b: usize, t: usize) -> SequenceBatch {
    let inputs = random_inputs(rng, b, t, spec.input_dim);
    let m = spec.output_dim();
    let targets = match spec.head {
        Head::Classification { .. } => {
            Targets::Classes((0..b).map(|_| rng.random_range(0..m)).collect())
        }
        Head::Regression { .. } => {
            Targets::Gains(Array2::from_shape_fn((b, m), |_| rng.random_range(-1.0..1.0)))
        }
    };
    SequenceBatch::new(inputs, targets).unwrap()
}

#[test]
fn zero_params_output_equals_head_bias() {
    let spec = reg_spec(3, vec![4], 5);
    let mut params = Parameters::zeros(&spec);
    for (j, v) in params.head_b.iter_mut().enumerate() {
        *v = j as f64 * 0.5 - 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = random_inputs(&mut rng, 2, 3, 3);
    let (out, cache) = forward(&params, &spec, &inputs, false, &mut rng).unwrap();
    // Gates are all sigma(0) = 0.5 but c stays 0, so h = 0 and the head
    // passes its bias through.
    assert!(cache.head_input.iter().all(|&v| v == 0.0));
    for row in out.outer_iter() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, params.head_b[j]);
        }
    }
}

#[test]
fn dropout_zero_training_flag_is_inert() {
    let spec = class_spec(3, vec![6], 4);
    let params = Parameters::init(&spec, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = random_inputs(&mut rng, 4, 3, 3);
    let (a, _) = forward(&params, &spec, &inputs, true, &mut rng).unwrap();
    let (b, _) = forward(&params, &spec, &inputs, false, &mut rng).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forward_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for hidden in [vec![4], vec![4, 3]] {
        let spec = reg_spec(3, hidden, 4);
        let params = Parameters::init(&spec, 11).unwrap();
        let inputs = random_inputs(&mut rng, 3, 2, 3);
        let (out, _) = forward(&params, &spec, &inputs, false, &mut rng).unwrap();
        let oracle = scalar_forward(&params, &spec, &inputs);
        for (bi, row) in oracle.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(
                    (out[[bi, j]] - v).abs() < 1e-12,
                    "mismatch at ({bi},{j}): {} vs {v}",
                    out[[bi, j]]
                );
            }
        }
    }
}

#[test]
fn forward_rejects_wrong_input_dim() {
    let spec = class_spec(3, vec![4], 4);
    let params = Parameters::init(&spec, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = random_inputs(&mut rng, 2, 2, 5);
    assert!(matches!(
        forward(&params, &spec, &inputs, false, &mut rng),
        Err(Error::Shape(_))
    ));
}

#[test]
fn loss_uniform_logits_is_ln_m() {
    for m in [2usize, 5, 16] {
        let outputs = Array2::<f64>::zeros((3, m));
        let targets = Targets::Classes(vec![0, m - 1, m / 2]);
        let head = Head::Classification { num_beams: m };
        let l = loss(&outputs, &targets, &head).unwrap();
        assert!((l - (m as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn loss_regression_zero_when_equal() {
    let outputs = Array2::from_shape_fn((2, 3), |(i, j)| (i + j) as f64);
    let head = Head::Regression { num_beams: 3 };
    let l = loss(&outputs, &Targets::Gains(outputs.clone()), &head).unwrap();
    assert_eq!(l, 0.0);
}

#[test]
fn loss_matches_scalar_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = 5;
    let b = 4;
    let outputs = Array2::from_shape_fn((b, m), |_| rng.random_range(-2.0..2.0));

    let classes: Vec<usize> = (0..b).map(|_| rng.random_range(0..m)).collect();
    let head = Head::Classification { num_beams: m };
    let got = loss(&outputs, &Targets::Classes(classes.clone()), &head).unwrap();
    let mut expect = 0.0;
    for (row, &c) in outputs.outer_iter().zip(classes.iter()) {
        let denom: f64 = row.iter().map(|&v| v.exp()).sum();
        expect += -(row[c].exp() / denom).ln();
    }
    expect /= b as f64;
    assert!((got - expect).abs() < 1e-12);

    let gains = Array2::from_shape_fn((b, m), |_| rng.random_range(-2.0..2.0));
    let head = Head::Regression { num_beams: m };
    let got = loss(&outputs, &Targets::Gains(gains.clone()), &head).unwrap();
    let mut expect = 0.0;
    for i in 0..b {
        for j in 0..m {
            let d = outputs[[i, j]] - gains[[i, j]];
            expect += d * d;
        }
    }
    expect /= (b * m) as f64;
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn loss_rejects_out_of_range_class() {
    let outputs = Array2::<f64>::zeros((1, 3));
    let head = Head::Classification { num_beams: 3 };
    assert!(loss(&outputs, &Targets::Classes(vec![3]), &head).is_err());
}

#[test]
fn backward_zero_loss_gives_zero_head_grads() {
    let spec = reg_spec(2, vec![3], 4);
    let params = Parameters::zeros(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = random_inputs(&mut rng, 3, 2, 2);
    // Zero params give zero outputs; zero targets make the loss exactly 0.
    let batch = SequenceBatch::new(inputs, Targets::Gains(Array2::zeros((3, 4)))).unwrap();
    let (out, cache) = forward(&params, &spec, &batch.inputs, false, &mut rng).unwrap();
    assert_eq!(loss(&out, &batch.targets, &spec.head).unwrap(), 0.0);
    let grads = backward(&params, &spec, &batch, &cache).unwrap();
    assert!(grads.head_w.iter().all(|&v| v == 0.0));
    assert!(grads.head_b.iter().all(|&v| v == 0.0));
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for trial in 0..6 {
        let spec = if trial % 2 == 0 {
            class_spec(3, vec![4], 5)
        } else {
            reg_spec(3, vec![4, 3], 5)
        };
        let params = Parameters::init(&spec, 100 + trial).unwrap();
        let batch = random_batch(&mut rng, &spec, 3, 3);
        let (_, cache) = forward(
            &params,
            &spec,
            &batch.inputs,
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let analytic = backward(&params, &spec, &batch, &cache).unwrap().to_flat();
        let numeric = numeric_grad(&spec, &params, &batch);
        for (k, (a, n)) in analytic.iter().zip(numeric.iter()).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel <= 1e-4, "trial {trial} param {k}: analytic {a} numeric {n}");
        }
    }
}

#[test]
fn duplicated_batch_gives_identical_mean_gradients() {
    let spec = class_spec(2, vec![4], 3);
    let params = Parameters::init(&spec, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(&mut rng, &spec, 3, 2);
    let doubled = {
        let idx: Vec<usize> = (0..3).chain(0..3).collect();
        batch.select(&idx)
    };
    let zero_rng = || ChaCha8Rng::seed_from_u64(0);
    let (_, c1) = forward(&params, &spec, &batch.inputs, false, &mut zero_rng()).unwrap();
    let (_, c2) = forward(&params, &spec, &doubled.inputs, false, &mut zero_rng()).unwrap();
    let g1 = backward(&params, &spec, &batch, &c1).unwrap().to_flat();
    let g2 = backward(&params, &spec, &doubled, &c2).unwrap().to_flat();
    for (a, b) in g1.iter().zip(g2.iter()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn backward_rejects_stale_cache() {
    let spec = reg_spec(2, vec![3], 2);
    let params = Parameters::init(&spec, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch_a = random_batch(&mut rng, &spec, 2, 2);
    let batch_b = random_batch(&mut rng, &spec, 2, 2);
    let (_, cache) = forward(&params, &spec, &batch_a.inputs, false, &mut rng).unwrap();
    assert!(matches!(
        backward(&params, &spec, &batch_b, &cache),
        Err(Error::InvalidState(_))
    ));
}

#[test]
fn train_learns_separable_toy_task() {
    // Class 0 windows hover around +0.6, class 1 around -0.6.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 40;
    let (t, d) = (4, 2);
    let inputs = Array3::from_shape_fn((n, t, d), |(i, _, _)| {
        let base = if i % 2 == 0 { 0.6 } else { -0.6 };
        base + rng.random_range(-0.2..0.2)
    });
    let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let batch = SequenceBatch::new(inputs, Targets::Classes(classes.clone())).unwrap();
    let spec = class_spec(d, vec![8], 2);
    let params = Parameters::init(&spec, 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        epochs: 50,
        seed: 9,
        ..TrainConfig::default()
    };
    let out = train(params, &spec, &cfg, &batch).unwrap();
    let mut correct = 0;
    for (i, &class) in classes.iter().enumerate() {
        let window = batch.inputs.index_axis(ndarray::Axis(0), i).to_owned();
        let scores = predict(&out.params, &spec, &window).unwrap();
        if crate::metrics::argmax(&scores) == class {
            correct += 1;
        }
    }
    assert!(
        correct as f64 / n as f64 >= 0.95,
        "training accuracy {}/{n}",
        correct
    );
}

#[test]
fn train_lr_zero_leaves_params_unchanged() {
    let spec = reg_spec(2, vec![3], 2);
    let params = Parameters::init(&spec, 4).unwrap();
    let before = params.to_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = random_batch(&mut rng, &spec, 6, 2);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        batch_size: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(params, &spec, &cfg, &batch).unwrap();
    assert_eq!(out.params.to_flat(), before);
}

#[test]
fn train_is_deterministic_per_seed() {
    let spec = class_spec(2, vec![4], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = random_batch(&mut rng, &spec, 12, 3);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 4,
        seed: 21,
        ..TrainConfig::default()
    };
    let run = || {
        let params = Parameters::init(&spec, 2).unwrap();
        train(params, &spec, &cfg, &batch).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.params.to_flat(), b.params.to_flat());
}

#[test]
fn train_diverges_with_huge_sgd_rate() {
    let spec = reg_spec(2, vec![4], 3);
    let params = Parameters::init(&spec, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = random_batch(&mut rng, &spec, 8, 2);
    let cfg = TrainConfig {
        learning_rate: 1e12,
        optimizer: OptimizerKind::Sgd,
        gradient_clip_norm: None,
        epochs: 40,
        batch_size: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    match train(params, &spec, &cfg, &batch) {
        Err(Error::TrainingDiverged { last_good, .. }) => {
            assert!(last_good.to_flat().iter().all(|v| v.is_finite()));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn train_loss_decreases_on_regression_task() {
    let spec = reg_spec(2, vec![6], 2);
    let params = Parameters::init(&spec, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Learnable mapping: targets are the window-mean of each input channel.
    let n = 32;
    let inputs = random_inputs(&mut rng, n, 4, 2);
    let targets = Array2::from_shape_fn((n, 2), |(i, j)| {
        (0..4).map(|t| inputs[[i, t, j]]).sum::<f64>() / 4.0
    });
    let batch = SequenceBatch::new(inputs, Targets::Gains(targets)).unwrap();
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        epochs: 40,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(params, &spec, &cfg, &batch).unwrap();
    assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
}

#[test]
fn predict_is_pure_and_softmax_normalizes() {
    let spec = class_spec(3, vec![5], 6);
    let params = Parameters::init(&spec, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let window = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    let a = predict(&params, &spec, &window).unwrap();
    let b = predict(&params, &spec, &window).unwrap();
    assert_eq!(a, b);
    let p = softmax(&a);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    // Shifting all logits leaves probabilities and argmax unchanged.
    let shifted: Vec<f64> = a.iter().map(|v| v + 3.25).collect();
    let q = softmax(&shifted);
    for (x, y) in p.iter().zip(q.iter()) {
        assert!((x - y).abs() < 1e-9);
    }
    assert_eq!(crate::metrics::argmax(&a), crate::metrics::argmax(&shifted));
}

#[test]
fn dropout_expectation_matches_clean_activation() {
    // Single layer, so the pre-head activation is the dropped hidden state
    // and inverted scaling makes its expectation the clean activation.
    let spec = ModelSpec::new(3, vec![4], 0.4, Head::Regression { num_beams: 2 }).unwrap();
    let params = Parameters::init(&spec, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inputs = random_inputs(&mut rng, 1, 2, 3);
    let (_, clean) = forward(&params, &spec, &inputs, false, &mut rng).unwrap();
    let base = clean.head_input.clone();

    let draws = 20_000;
    let mut mean = Array2::<f64>::zeros(base.dim());
    for _ in 0..draws {
        let (_, c) = forward(&params, &spec, &inputs, true, &mut rng).unwrap();
        mean += &c.head_input;
    }
    mean /= draws as f64;
    let num = (&mean - &base).mapv(|v| v * v).sum().sqrt();
    let den = base.mapv(|v| v * v).sum().sqrt();
    assert!(num / den < 0.02, "relative deviation {}", num / den);
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let spec = ModelSpec::new(4, vec![5, 3], 0.25, Head::Classification { num_beams: 7 }).unwrap();
    let params = Parameters::init(&spec, 31).unwrap();
    save_checkpoint(&path, &spec, &params, 31, 12).unwrap();
    let (spec2, params2, seed, epochs) = load_checkpoint(&path).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(seed, 31);
    assert_eq!(epochs, 12);
    let a = params.to_flat();
    let b = params2.to_flat();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn checkpoint_rejects_foreign_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("not_a_checkpoint.bin");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn spec_param_count_matches_parameters() {
    let spec = ModelSpec::new(16, vec![128, 128], 0.2, Head::Classification { num_beams: 64 })
        .unwrap();
    let params = Parameters::init(&spec, 0).unwrap();
    assert_eq!(params.num_params(), spec.num_params());
    assert_eq!(params.to_flat().len(), spec.num_params());
}
