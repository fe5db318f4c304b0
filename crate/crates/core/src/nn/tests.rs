use super::*;
use approx::assert_relative_eq;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use Stance::*;

pub(crate) fn small_layout() -> BlockLayout {
    BlockLayout::new(vec![(Block::Neural, 12), (Block::Statistical, 16), (Block::External, 5)]).unwrap()
}

/// Branch widths 8/4 (neural), 8/4 (statistical), 4 (external).
pub(crate) fn small_arch(keep: f64, l2: f64) -> Architecture {
    Architecture::from_layout(&small_layout(), |block| {
        let mut h = BranchHyper::default_for(block);
        h.widths = match block {
            Block::Neural | Block::Statistical => vec![8, 4],
            Block::External => vec![4],
        };
        if h.first_dropout_rate > 0.0 {
            h.first_dropout_rate = 1.0 - keep;
            h.first_l2 = l2;
        }
        h
    })
    .unwrap()
}

/// Default dropout and L2 with branch widths 16/8, 16/8, 8: wide enough
/// that no branch bottlenecks a 4-class problem.
pub(crate) fn training_arch() -> Architecture {
    Architecture::from_layout(&small_layout(), |block| {
        let mut h = BranchHyper::default_for(block);
        h.widths = match block {
            Block::Neural | Block::Statistical => vec![16, 8],
            Block::External => vec![8],
        };
        h
    })
    .unwrap()
}

fn random_inputs(rng: &mut ChaCha8Rng, rows: usize) -> Vec<Array2<f64>> {
    small_layout()
        .entries()
        .iter()
        .map(|&(_, w)| Array2::from_shape_fn((rows, w), |_| rng.random_range(-1.5..1.5)))
        .collect()
}

fn views(m: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
    m.iter().map(|a| a.view()).collect()
}

fn infer_loss(model: &MlpModel, inputs: &[Array2<f64>], golds: &[Stance]) -> f64 {
    let cache = model.forward(&views(inputs), Mode::Infer, Execution::Sequential).unwrap();
    model.loss(cache.probabilities(), golds)
}

#[test]
fn default_architecture_matches_table_widths() {
    let layout = BlockLayout::for_blocks(&Block::ALL, 4800, 5000).unwrap();
    let arch = Architecture::default_for(&layout).unwrap();
    let neural = &arch.branches[0].layers;
    assert_eq!((neural[0].inputs, neural[0].outputs, neural[1].outputs), (9600, 500, 100));
    assert_eq!(neural[0].activation, Activation::Sigmoid);
    assert_relative_eq!(neural[0].dropout_keep, 0.8);
    assert_eq!(neural[0].l2, 1e-8);
    assert_eq!((neural[1].dropout_keep, neural[1].l2), (1.0, 0.0));
    let stat = &arch.branches[1].layers;
    assert_eq!((stat[0].inputs, stat[0].outputs, stat[1].outputs), (10000, 500, 50));
    assert_relative_eq!(stat[0].dropout_keep, 0.6);
    assert_eq!(stat[0].l2, 5e-5);
    let ext = &arch.branches[2].layers;
    assert_eq!((ext.len(), ext[0].inputs, ext[0].outputs), (1, 50, 50));
    assert_eq!(ext[0].activation, Activation::Relu);
    assert_eq!((arch.head.inputs, arch.head.outputs), (200, 4));
    assert_eq!(arch.head.activation, Activation::Softmax);
}

#[test]
fn architecture_validation() {
    let mut arch = small_arch(1.0, 0.0);
    arch.head.inputs = 11;
    assert!(arch.validate().is_err());
    let mut arch = small_arch(1.0, 0.0);
    arch.branches[0].layers[1].activation = Activation::Softmax;
    assert!(arch.validate().is_err());
    let mut arch = small_arch(1.0, 0.0);
    arch.branches.swap(0, 1);
    assert!(arch.validate().is_err());
}

#[test]
fn zero_model_is_uniform() {
    let model = MlpModel::zeros(&small_arch(0.8, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_inputs(&mut rng, 3);
    let p = model.predict_proba(&views(&x), Execution::Sequential).unwrap();
    assert!(p.iter().all(|&v| v == 0.25));
    assert_relative_eq!(model.loss(&p, &[Agree, Discuss, Unrelated]), 4f64.ln(), epsilon = 1e-12);
}

#[test]
fn shape_errors_name_the_branch() {
    let model = MlpModel::zeros(&small_arch(1.0, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = random_inputs(&mut rng, 2);
    x[1] = Array2::zeros((2, 15));
    match model.forward(&views(&x), Mode::Infer, Execution::Sequential) {
        Err(Error::Shape { branch, expected, actual }) => {
            assert_eq!(branch, "stat");
            assert_eq!((expected, actual), (16, 15));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn probabilities_normalize_and_inference_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = MlpModel::init(&small_arch(0.6, 1e-3), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 50);
    let p1 = model.predict_proba(&views(&x), Execution::Sequential).unwrap();
    let p2 = model.predict_proba(&views(&x), Execution::Parallel).unwrap();
    assert_eq!(p1, p2);
    for row in p1.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn loss_with_certain_prediction_is_zero() {
    let model = MlpModel::zeros(&small_arch(1.0, 0.5)).unwrap();
    let p = array![[0.0, 1.0, 0.0, 0.0]];
    assert_eq!(model.loss(&p, &[Disagree]), 0.0);
    // Clamped, not infinite.
    assert_relative_eq!(model.loss(&p, &[Agree]), -(1e-12f64).ln());
}

#[test]
fn loss_includes_hand_computed_l2() {
    // External-only: x=1 -> identity layer (w=2, l2=0.1) -> head with
    // weights [1,0,0,0]. Logits [2,0,0,0].
    let layout = BlockLayout::new(vec![(Block::External, 1)]).unwrap();
    let arch = Architecture {
        branches: vec![BranchSpec {
            block: Block::External,
            layers: vec![LayerSpec::new(1, 1, Activation::Identity).with_l2(0.1)],
        }],
        head: LayerSpec::new(1, 4, Activation::Softmax),
    };
    assert_eq!(arch.layout(), layout);
    let mut model = MlpModel::zeros(&arch).unwrap();
    model.branches[0].layers[0].weights[[0, 0]] = 2.0;
    model.head.weights[[0, 0]] = 1.0;
    let x = array![[1.0]];
    let cache = model.forward(&[x.view()], Mode::Infer, Execution::Sequential).unwrap();
    let e2 = 2f64.exp();
    assert_relative_eq!(cache.probabilities()[[0, 0]], e2 / (e2 + 3.0), epsilon = 1e-15);
    let expected = -(e2 / (e2 + 3.0)).ln() + 0.1 * 4.0;
    assert_relative_eq!(model.loss(cache.probabilities(), &[Agree]), expected, epsilon = 1e-12);
}

#[test]
fn head_bias_gradient_is_p_minus_onehot() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = MlpModel::init(&small_arch(1.0, 0.0), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 1);
    let cache = model.forward(&views(&x), Mode::Infer, Execution::Sequential).unwrap();
    let grads = model.backward(&cache, &[Discuss], Execution::Sequential).unwrap();
    let mut expected = cache.probabilities().row(0).to_owned();
    expected[Discuss.index()] -= 1.0;
    assert_eq!(grads.0.last().unwrap().bias, expected);
}

/// Central differences over every parameter of every layer (the model is
/// small enough), with dropout-declaring layers run in Infer mode.
pub(crate) fn max_fd_relative_error(model: &MlpModel, inputs: &[Array2<f64>], golds: &[Stance], sample: Option<(usize, u64)>) -> (f64, usize) {
    let cache = model.forward(&views(inputs), Mode::Infer, Execution::Sequential).unwrap();
    let grads = model.backward(&cache, golds, Execution::Sequential).unwrap();

    let mut coords = Vec::new();
    for (li, layer) in model.layers().enumerate() {
        for idx in 0..layer.num_parameters() {
            coords.push((li, idx));
        }
    }
    if let Some((n, seed)) = sample {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(n);
    }

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &(li, idx) in &coords {
        let bump = |delta: f64| {
            let mut m = model.clone();
            let layer = m.layers_mut().nth(li).unwrap();
            let n_w = layer.weights.len();
            if idx < n_w {
                let cols = layer.weights.ncols();
                layer.weights[[idx / cols, idx % cols]] += delta;
            } else {
                layer.bias[idx - n_w] += delta;
            }
            infer_loss(&m, inputs, golds)
        };
        let numeric = (bump(h) - bump(-h)) / (2.0 * h);
        let g = &grads.0[li];
        let analytic = if idx < g.weights.len() {
            g.weights.as_slice().unwrap()[idx]
        } else {
            g.bias[idx - g.weights.len()]
        };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    (worst, coords.len())
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = MlpModel::init(&small_arch(0.8, 1e-2), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 6);
    let golds = [Agree, Disagree, Discuss, Unrelated, Discuss, Agree];
    let (worst, checked) = max_fd_relative_error(&model, &x, &golds, None);
    assert!(checked > 300);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn batch_gradient_is_mean_of_sample_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = MlpModel::init(&small_arch(1.0, 0.0), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 2);
    let golds = [Agree, Unrelated];
    let batch = model
        .backward(&model.forward(&views(&x), Mode::Infer, Execution::Sequential).unwrap(), &golds, Execution::Sequential)
        .unwrap();
    let single = |i: usize| {
        let xi: Vec<Array2<f64>> = x.iter().map(|m| m.select(Axis(0), &[i])).collect();
        let c = model.forward(&views(&xi), Mode::Infer, Execution::Sequential).unwrap();
        model.backward(&c, &golds[i..=i], Execution::Sequential).unwrap()
    };
    let (a, b) = (single(0), single(1));
    for ((gb, ga), gc) in batch.0.iter().zip(&a.0).zip(&b.0) {
        let mean_w = (&ga.weights + &gc.weights) / 2.0;
        let mean_b = (&ga.bias + &gc.bias) / 2.0;
        assert!((&gb.weights - &mean_w).iter().all(|d| d.abs() < 1e-14));
        assert!((&gb.bias - &mean_b).iter().all(|d| d.abs() < 1e-14));
    }

    // Two copies of one sample: same as that sample alone.
    let dup: Vec<Array2<f64>> = x.iter().map(|m| m.select(Axis(0), &[0, 0])).collect();
    let d = model
        .backward(&model.forward(&views(&dup), Mode::Infer, Execution::Sequential).unwrap(), &[Agree, Agree], Execution::Sequential)
        .unwrap();
    for (gd, ga) in d.0.iter().zip(&a.0) {
        assert!((&gd.weights - &ga.weights).iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = MlpModel::init(&small_arch(1.0, 0.0), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 2);
    let cache = model.forward(&views(&x), Mode::Infer, Execution::Sequential).unwrap();
    assert!(model.backward(&cache, &[Agree], Execution::Sequential).is_err());
    let other = MlpModel::zeros(&Architecture::from_layout(&small_layout(), BranchHyper::default_for).unwrap()).unwrap();
    assert!(other.backward(&cache, &[Agree, Agree], Execution::Sequential).is_err());
}

#[test]
fn inverted_dropout_preserves_expectation() {
    // Single neural layer with keep 0.8 feeding the next layer; compare the
    // next layer's pre-activation averaged over masks with inference.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = MlpModel::init(&small_arch(0.8, 0.0), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 1);
    let first = &model.branches[0].layers[0];
    let second = &model.branches[0].layers[1];
    let mut infer_mode = Mode::Infer;
    let (h_infer, _) = layer_forward(first, x[0].clone(), &mut infer_mode, Execution::Sequential);
    let z_infer = affine(second, h_infer.view(), Execution::Sequential);

    let trials = 200_000;
    let mut sum = Array2::<f64>::zeros(z_infer.raw_dim());
    let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..trials {
        let mut mode = Mode::Train(&mut mask_rng);
        let (h, _) = layer_forward(first, x[0].clone(), &mut mode, Execution::Sequential);
        sum += &affine(second, h.view(), Execution::Sequential);
    }
    let mean = sum / trials as f64;
    for (m, z) in mean.iter().zip(z_infer.iter()) {
        assert!((m - z).abs() <= 0.02 * z.abs().max(0.05), "mean {m} vs {z}");
    }
}

#[test]
fn adam_first_step_hand_trace() {
    let arch = Architecture {
        branches: vec![BranchSpec {
            block: Block::External,
            layers: vec![LayerSpec::new(1, 1, Activation::Identity)],
        }],
        head: LayerSpec::new(1, 4, Activation::Softmax),
    };
    let mut model = MlpModel::zeros(&arch).unwrap();
    let mut state = AdamState::new(&model, 0.001);
    let mut grads = Gradients(
        model
            .layers()
            .map(|l| LayerGradient {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect(),
    );
    grads.0[0].weights[[0, 0]] = 2.0;
    adam_step(&mut model, &grads, &mut state).unwrap();
    // m = 0.2, v = 0.004; m̂ = 2, v̂ = 4; Δ = -0.001 · 2 / (2 + 1e-8).
    let expected = -0.001 * 2.0 / (2.0 + 1e-8);
    assert_eq!(model.branches[0].layers[0].weights[[0, 0]], expected);
    assert_eq!(state.step_count(), 1);
    // Zero-gradient parameters did not move.
    assert!(model.head.weights.iter().all(|&w| w == 0.0));

    let zero = Gradients(grads.0.iter().map(|g| LayerGradient { weights: g.weights.mapv(|_| 0.0), bias: g.bias.mapv(|_| 0.0) }).collect());
    let mut fresh = MlpModel::zeros(&arch).unwrap();
    let mut fresh_state = AdamState::new(&fresh, 0.001);
    for _ in 0..5 {
        adam_step(&mut fresh, &zero, &mut fresh_state).unwrap();
    }
    assert_eq!(fresh, MlpModel::zeros(&arch).unwrap());
    assert_eq!(fresh_state.step_count(), 5);

    grads.0[1].bias[2] = f64::NAN;
    let before = model.clone();
    match adam_step(&mut model, &grads, &mut state) {
        Err(Error::NonFinite(layer)) => assert_eq!(layer, "head"),
        other => panic!("{other:?}"),
    }
    assert_eq!(model, before);
    assert_eq!(state.step_count(), 1);
}

#[test]
fn small_learning_rate_step_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = MlpModel::init(&small_arch(1.0, 1e-3), &mut rng).unwrap();
    let x = random_inputs(&mut rng, 20);
    let golds: Vec<Stance> = (0..20).map(|i| Stance::ALL[i % 4]).collect();
    let before = infer_loss(&model, &x, &golds);
    let cache = model.forward(&views(&x), Mode::Infer, Execution::Sequential).unwrap();
    let grads = model.backward(&cache, &golds, Execution::Sequential).unwrap();
    let mut state = AdamState::new(&model, 1e-5);
    adam_step(&mut model, &grads, &mut state).unwrap();
    assert!(infer_loss(&model, &x, &golds) <= before);
}

#[test]
fn predict_tie_breaks_by_label_order() {
    assert_eq!(argmax_stance(&[0.7, 0.1, 0.1, 0.1]), Agree);
    assert_eq!(argmax_stance(&[0.25; 4]), Agree);
    assert_eq!(argmax_stance(&[0.1, 0.4, 0.4, 0.1]), Disagree);
    assert_eq!(argmax_stance(&[0.1, 0.2, 0.3, 0.4]), Unrelated);
    let logits = [0.3, -1.0, 2.5, 2.4];
    let scaled: Vec<f64> = logits.iter().map(|x| (3.0 * x + 1.0f64).exp()).collect();
    assert_eq!(argmax_stance(&logits), argmax_stance(&scaled));
}

/// Four well-separated clusters in every block.
pub(crate) fn separable(rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Stance> = (0..rows).map(|i| Stance::ALL[i % 4]).collect();
    let inputs = small_layout()
        .entries()
        .iter()
        .map(|&(_, w)| {
            Array2::from_shape_fn((rows, w), |(r, c)| {
                let class = labels[r].index();
                let signal = if c % 4 == class { 1.0 } else { 0.0 };
                signal + rng.random_range(-0.3..0.3)
            })
        })
        .collect();
    Dataset::new(inputs, labels).unwrap()
}

fn accuracy(model: &MlpModel, data: &Dataset) -> f64 {
    let preds = model.predict(&data.views(), Execution::Parallel).unwrap();
    preds.iter().zip(&data.labels).filter(|(p, g)| p == g).count() as f64 / data.len() as f64
}

#[test]
fn trains_on_separable_data() {
    let data = separable(200, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = MlpModel::init(&training_arch(), &mut rng).unwrap();
    let config = TrainConfig {
        patience: 50,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(model, &data, &data, &config, Execution::Parallel).unwrap();
    assert!(accuracy(&out.model, &data) >= 0.95, "accuracy {}", accuracy(&out.model, &data));
    assert!(out.history.len() <= 50);
}

#[test]
fn early_stop_with_constant_score() {
    let data = separable(40, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = MlpModel::init(&small_arch(1.0, 0.0), &mut rng).unwrap();
    let config = TrainConfig {
        patience: 1,
        ..TrainConfig::default()
    };
    let out = train_with_scorer(model, &data, &config, Execution::Sequential, |_| Ok(Some(0.5))).unwrap();
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_is_deterministic_across_execution_modes() {
    let data = separable(120, 9);
    let val = separable(40, 10);
    let config = TrainConfig {
        max_epochs: 4,
        batch_size: 32,
        seed: 17,
        ..TrainConfig::default()
    };
    let run = |exec| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::init(&small_arch(0.7, 1e-3), &mut rng).unwrap();
        train(model, &data, &val, &config, exec).unwrap()
    };
    let a = run(Execution::Sequential);
    let b = run(Execution::Parallel);
    let c = run(Execution::Parallel);
    assert_eq!(a.history, b.history);
    assert_eq!(b.history, c.history);
    assert_eq!(a.model, c.model);
}

#[test]
fn empty_training_set_is_an_error() {
    let model = MlpModel::zeros(&small_arch(1.0, 0.0)).unwrap();
    let empty = Dataset::new(small_layout().entries().iter().map(|&(_, w)| Array2::zeros((0, w))).collect(), vec![]).unwrap();
    assert!(matches!(
        train(model, &empty, &empty, &TrainConfig::default(), Execution::Sequential),
        Err(Error::Empty(_))
    ));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = MlpModel::init(&small_arch(0.8, 1e-8), &mut rng).unwrap();
    let bytes = write_checkpoint(&model);
    assert!(bytes.starts_with(b"MLPCKPT1\nbranch neural 12\nlayer neural 12 8 sigmoid 0.8 0.00000001\n"));
    assert_eq!(read_checkpoint(&bytes).unwrap(), model);

    assert!(read_checkpoint(&bytes[..bytes.len() - 8]).is_err());
    assert!(read_checkpoint(b"MLPCKPT2\n").is_err());

    let ext_only = Architecture::from_layout(&BlockLayout::new(vec![(Block::External, 50)]).unwrap(), BranchHyper::default_for).unwrap();
    let text = String::from_utf8_lossy(&write_checkpoint(&MlpModel::zeros(&ext_only).unwrap())).to_string();
    assert!(!text.contains("stat"));
    assert!(text.contains("head 50 4 softmax 1 0\nend\n"));
}

