use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use texvib_core::codec::CodecConfig;
use texvib_core::dataset::{compute_norm_stats, synthesize_dataset, SyntheticSpec};
use texvib_core::gan::*;
use texvib_core::label::LabelVector;
use texvib_core::CoreError;
use texvib_nn::gradcheck::{away_from_zero, FD_STEP_F64};
use texvib_nn::layers::*;
use texvib_nn::{Initializer, Layer, Sequential, Tensor};

fn one_hot_rows(n: usize, dim: usize) -> Tensor {
    one_hot_batch(&(0..n).map(|i| i % dim).collect::<Vec<_>>(), dim)
}

/// Parameters of the generator and discriminator, summed over the declared
/// layer shapes.
fn closed_form_counts(a: &GanArch) -> (usize, usize) {
    let conv = |cin: usize, cout: usize, bias: bool| 9 * cin * cout + if bias { cout } else { 0 };
    let bn = |c: usize| 2 * c;
    let c0 = a.base_channels;
    let mut g = (a.noise_dim + a.label_dim) * c0 * a.base_size * a.base_size + c0 * a.base_size * a.base_size;
    g += bn(c0);
    g += a.residual_blocks * 2 * (conv(c0, c0, false) + bn(c0));
    let mut c = c0;
    for &next in &a.upsample_channels {
        g += conv(c, 4 * next, true);
        c = next;
    }
    g += conv(c, 1, true);

    let mut d = 0;
    let mut cin = 1;
    for &cout in &a.disc_channels {
        d += conv(cin, cout, true);
        cin = cout;
    }
    let s = a.output_size() >> a.disc_channels.len();
    let f = cin * s * s;
    d += f + 1 + f * a.label_dim + a.label_dim;
    (g, d)
}

#[test]
fn reference_architecture_shapes_and_parameter_count() {
    let arch = GanArch::reference(9, 50);
    assert_eq!(arch.output_size(), 128);
    assert_eq!(arch.disc_final_size(), 4);
    let mut init = Initializer::new(1);
    let g = build_generator(&arch, &mut init).unwrap();
    let d = Discriminator::build(&arch, &mut init).unwrap();
    let (g_expected, d_expected) = closed_form_counts(&arch);
    assert_eq!(param_count(&g), g_expected);
    assert_eq!(d.param_count(), d_expected);

    let z = noise(2, 50, 3);
    let out = generator_forward(&g, &z, &one_hot_rows(2, 9)).unwrap();
    assert_eq!(out.shape(), &[2, 1, 128, 128]);
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let dout = d.infer(&out).unwrap();
    assert_eq!(dout.real_logit.shape(), &[2, 1]);
    assert_eq!(dout.class_logits.shape(), &[2, 9]);
    assert!(dout.prob_real().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn desk_architecture_parameter_count_and_batch_of_64() {
    let arch = GanArch::desk(9, 50);
    let mut init = Initializer::new(2);
    let g = build_generator(&arch, &mut init).unwrap();
    let d = Discriminator::build(&arch, &mut init).unwrap();
    let (g_expected, d_expected) = closed_form_counts(&arch);
    assert_eq!(param_count(&g), g_expected);
    assert_eq!(d.param_count(), d_expected);
    let out = generator_forward(&g, &noise(64, 50, 4), &one_hot_rows(64, 9)).unwrap();
    assert_eq!(out.shape(), &[64, 1, 128, 128]);
}

#[test]
fn generator_is_deterministic_and_checks_labels() {
    let arch = GanArch::desk(9, 50);
    let g = build_generator(&arch, &mut Initializer::new(5)).unwrap();
    let z = noise(3, 50, 6);
    let c = one_hot_rows(3, 9);
    assert_eq!(generator_forward(&g, &z, &c).unwrap(), generator_forward(&g, &z, &c).unwrap());

    let mut bad = c.clone();
    bad.data_mut()[0] = 0.9;
    let err = generator_forward(&g, &z, &bad).err().unwrap();
    assert!(matches!(err, CoreError::LabelNotSimplex(_)), "{err}");
    let short = one_hot_rows(2, 9);
    assert!(generator_forward(&g, &z, &short).is_err());
}

#[test]
fn discriminator_rejects_out_of_range_input() {
    let arch = GanArch::desk(9, 50);
    let d = Discriminator::build(&arch, &mut Initializer::new(7)).unwrap();
    let mut x = Tensor::full(&[1, 1, 128, 128], 0.5);
    x.data_mut()[10] = 1.0 + 1e-5;
    assert!(matches!(d.infer(&x).err().unwrap(), CoreError::Range(_)));
    x.data_mut()[10] = 1.0 + 1e-7;
    assert!(d.infer(&x).is_ok());
}

fn linear_disc(weights: Vec<f64>) -> (Sequential<f64>, Sequential<f64>) {
    let f = weights.len();
    let mut trunk = Sequential::default();
    trunk.push(Reshape::new(ReshapeConfig { shape: vec![f] }).unwrap());
    let mut dense = Dense::new(DenseConfig { inputs: f, outputs: 1 }, &mut Initializer::new(0)).unwrap();
    dense.weight_mut().value = Tensor::new(vec![1, f], weights).unwrap();
    let mut head = Sequential::default();
    head.push(dense);
    (trunk, head)
}

#[test]
fn penalty_vanishes_for_unit_gradient_norm() {
    let w: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut trunk, mut head) = linear_disc(w.iter().map(|v| v / norm).collect());
    let x = away_from_zero::<f64>(&[3, 1, 4, 4], 0.0, 9);
    let out = gradient_penalty(&mut trunk, &mut head, &x, 10.0).unwrap();
    assert!(out.value.abs() < 1e-6, "{}", out.value);
    assert!(out.grad_norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
}

#[test]
fn penalty_equals_lambda_for_constant_discriminator() {
    let (mut trunk, mut head) = linear_disc(vec![0.0; 16]);
    let x = away_from_zero::<f64>(&[4, 1, 4, 4], 0.0, 10);
    let out = gradient_penalty(&mut trunk, &mut head, &x, 10.0).unwrap();
    assert_eq!(out.value, 10.0);
    // The zero-weight f32 discriminator through the public entry point.
    let arch = GanArch::desk(9, 50);
    let mut d = Discriminator::build(&arch, &mut Initializer::new(11)).unwrap();
    for p in d.real_head.params_mut() {
        p.value.data_mut().fill(0.0);
    }
    let real = Tensor::full(&[2, 1, 128, 128], 0.25);
    let out = dragan_penalty(&mut d, &real, 7.5, 0.5, 3).unwrap();
    assert!((out.value - 7.5).abs() < 1e-12, "{}", out.value);
}

fn tiny_disc(init: &mut Initializer) -> (Sequential<f64>, Sequential<f64>) {
    let mut trunk = Sequential::default();
    trunk.push(Conv2d::new(Conv2dConfig::same3x3(1, 3, 2), init).unwrap());
    trunk.push(LeakyRelu::new(LeakyReluConfig { slope: 0.2 }).unwrap());
    trunk.push(Conv2d::new(Conv2dConfig::same3x3(3, 2, 2), init).unwrap());
    trunk.push(LeakyRelu::new(LeakyReluConfig { slope: 0.2 }).unwrap());
    trunk.push(Reshape::new(ReshapeConfig { shape: vec![8] }).unwrap());
    let mut head = Sequential::default();
    head.push(Dense::new(DenseConfig { inputs: 8, outputs: 1 }, init).unwrap());
    (trunk, head)
}

#[test]
fn penalty_parameter_gradient_matches_finite_differences() {
    let (mut trunk, mut head) = tiny_disc(&mut Initializer::new(12));
    let x = away_from_zero::<f64>(&[3, 1, 8, 8], 0.05, 13);
    let lambda = 10.0;
    trunk.zero_grad();
    head.zero_grad();
    gradient_penalty(&mut trunk, &mut head, &x, lambda).unwrap();
    let analytic: Vec<f64> = trunk
        .params()
        .iter()
        .chain(head.params().iter())
        .flat_map(|p| p.grad.clone())
        .collect();

    let value = |t: &mut Sequential<f64>, h: &mut Sequential<f64>| gradient_penalty(t, h, &x, lambda).unwrap().value;
    let step = FD_STEP_F64;
    let mut numeric = Vec::new();
    let trunk_params = trunk.params().len();
    for pi in 0..trunk_params + head.params().len() {
        let len = if pi < trunk_params {
            trunk.params()[pi].value.len()
        } else {
            head.params()[pi - trunk_params].value.len()
        };
        for j in 0..len {
            let nudge = |t: &mut Sequential<f64>, h: &mut Sequential<f64>, delta: f64| {
                let p = if pi < trunk_params {
                    &mut t.params_mut()[pi].value
                } else {
                    &mut h.params_mut()[pi - trunk_params].value
                };
                p.data_mut()[j] += delta;
            };
            nudge(&mut trunk, &mut head, step);
            let plus = value(&mut trunk, &mut head);
            nudge(&mut trunk, &mut head, -2.0 * step);
            let minus = value(&mut trunk, &mut head);
            nudge(&mut trunk, &mut head, step);
            numeric.push((plus - minus) / (2.0 * step));
        }
    }
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
        assert!(err < 1e-3, "parameter element {i}: analytic {a}, numeric {n}");
    }
    assert!(analytic.iter().any(|g| g.abs() > 1e-3), "penalty gradient should not vanish");
}

#[test]
fn perturbation_scales_with_batch_spread() {
    let x = Tensor::<f64>::new(vec![2, 1, 1, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let p = perturb(&x, 0.5, 1);
    // σ = 0.5, so each element moves by 0.25·u with u in [0, 1].
    for (a, b) in x.data().iter().zip(p.data()) {
        assert!(*b >= *a && *b <= a + 0.25, "{a} → {b}");
    }
    assert_ne!(p, x);
    assert_eq!(perturb(&x, 0.5, 1), p);
    let flat = Tensor::<f64>::full(&[2, 1, 2, 2], 0.3);
    assert_eq!(perturb(&flat, 0.5, 1), flat);
}

fn small_data(classes: usize, per_class: usize) -> GanData {
    let d = synthesize_dataset(&SyntheticSpec::standard(classes, per_class), 3).unwrap();
    let stats = compute_norm_stats(&d).unwrap();
    GanData::from_dataset(&d, &stats).unwrap()
}

fn small_cfg(steps: u64) -> GanTrainConfig {
    GanTrainConfig {
        batch_size: 4,
        steps,
        seed: 17,
        ..GanTrainConfig::default()
    }
}

#[test]
fn first_discriminator_loss_matches_analytic_value_at_half() {
    let arch = GanArch::desk(9, 50);
    let cfg = small_cfg(1);
    let mut state = GanState::new(&arch, &cfg).unwrap();
    for p in state
        .discriminator
        .real_head
        .params_mut()
        .into_iter()
        .chain(state.discriminator.aux_head.params_mut())
    {
        p.value.data_mut().fill(0.0);
    }
    let data = small_data(9, 1);
    let batch: Vec<_> = data.specs.iter().take(4).collect();
    let real = stack_spectrograms(&batch).unwrap();
    let m = gan_train_step(&mut state, &real, &data.labels[..4]).unwrap();
    // Zero heads: every logit is 0, so each BCE term is ln 2 and each class
    // term ln 9; the input gradient vanishes and the penalty equals lambda.
    let expected = 2.0 * 2f64.ln() + 2.0 * 9f64.ln();
    assert_eq!(m.penalty, cfg.dragan_lambda);
    let adversarial = m.d_loss - m.penalty;
    assert!((adversarial - expected).abs() <= 0.2 * expected, "{adversarial} vs {expected}");
    assert!((m.g_loss - (2f64.ln() + 9f64.ln())).abs() <= 0.2 * (2f64.ln() + 9f64.ln()));
}

#[test]
fn identical_seeds_give_bit_identical_metric_streams() {
    let data = small_data(9, 1);
    let arch = GanArch::desk(9, 50);
    let run = || train_gan(&data, &arch, &small_cfg(3), None, |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.metrics.len(), 3);
    let c = LabelVector::one_hot(4, 9).unwrap();
    assert_eq!(
        sample(&a.checkpoint, &c, 1, 2).unwrap(),
        sample(&b.checkpoint, &c, 1, 2).unwrap()
    );
    let other = train_gan(
        &data,
        &arch,
        &GanTrainConfig {
            seed: 18,
            ..small_cfg(3)
        },
        None,
        |_| {},
    )
    .unwrap();
    assert_ne!(other.metrics, a.metrics);
}

#[test]
fn zero_steps_yield_a_valid_initial_checkpoint() {
    let data = small_data(9, 1);
    let arch = GanArch::desk(9, 50);
    let dir = tempfile::tempdir().unwrap();
    let trained = train_gan(&data, &arch, &small_cfg(0), Some(dir.path()), |_| {}).unwrap();
    assert!(trained.metrics.is_empty());
    let ckpt = GanCheckpoint::load(&dir.path().join("gan.tnn")).unwrap();
    assert_eq!(ckpt.step, 0);
    assert_eq!(ckpt.class_names, data.class_names);
    assert_eq!(ckpt.stats, data.stats);
    assert_eq!(ckpt.codec, data.codec);

    // Freshly initialized weights from the same seed.
    let mut init = Initializer::new(17);
    let g = build_generator(&arch, &mut init).unwrap();
    let c = LabelVector::one_hot(2, 9).unwrap();
    let z = noise(2, 50, 8);
    let labels = one_hot_batch(&[2, 2], 9);
    let fresh = generator_forward(&g, &z, &labels).unwrap();
    let loaded = generator_forward(&ckpt.generator, &z, &labels).unwrap();
    assert_eq!(fresh, loaded);

    let samples = sample(&ckpt, &c, 8, 2).unwrap();
    assert_eq!(samples.len(), 2);
    assert!(samples.iter().all(|s| (s.rows, s.cols) == (128, 128)));
    assert_eq!(samples[0].data, loaded.sample(0));
}

#[test]
fn class_count_must_match_label_dimension() {
    let data = small_data(3, 2);
    let err = train_gan(&data, &GanArch::desk(9, 50), &small_cfg(1), None, |_| {})
        .err()
        .unwrap();
    assert!(matches!(err, CoreError::ClassMismatch(_)), "{err}");
}

#[test]
fn checkpoints_round_trip_and_reject_garbage() {
    let data = small_data(9, 1);
    let trained = train_gan(&data, &GanArch::desk(9, 50), &small_cfg(1), None, |_| {}).unwrap();
    let mut bytes = Vec::new();
    trained.checkpoint.write(&mut bytes).unwrap();
    let back = GanCheckpoint::read(bytes.as_slice()).unwrap();
    assert_eq!(back.step, 1);
    let c = LabelVector::new(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(sample(&back, &c, 2, 3).unwrap(), sample(&trained.checkpoint, &c, 2, 3).unwrap());
    assert!(GanCheckpoint::read(&b"TNN1garbage"[..]).is_err());
    assert!(GanCheckpoint::read(&bytes[..bytes.len() / 2]).is_err());
    let wrong_dim = LabelVector::one_hot(0, 3).unwrap();
    assert!(matches!(sample(&back, &wrong_dim, 0, 1).err().unwrap(), CoreError::ClassMismatch(_)));
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let data = small_data(9, 1);
    let ckpt = train_gan(&data, &GanArch::desk(9, 50), &small_cfg(0), None, |_| {})
        .unwrap()
        .checkpoint;
    let c = LabelVector::one_hot(7, 9).unwrap();
    let a = sample(&ckpt, &c, 42, 3).unwrap();
    assert_eq!(a, sample(&ckpt, &c, 42, 3).unwrap());
    assert_ne!(a, sample(&ckpt, &c, 43, 3).unwrap());
    assert_ne!(a[0], a[1]);
}

#[test]
fn presets_resolve_by_name() {
    assert_eq!(GanArch::preset("desk", 9, 50).unwrap(), GanArch::desk(9, 50));
    assert_eq!(GanArch::preset("reference", 9, 50).unwrap(), GanArch::reference(9, 50));
    assert!(GanArch::preset("huge", 9, 50).is_err());
    let mut arch = GanArch::desk(9, 50);
    arch.upsample_channels.pop();
    assert!(arch.check_codec(&CodecConfig::default()).is_err());
}

fn micro_arch() -> GanArch {
    GanArch {
        label_dim: 3,
        noise_dim: 4,
        base_size: 2,
        base_channels: 4,
        residual_blocks: 1,
        upsample_channels: vec![4, 2],
        disc_channels: vec![2, 2],
        leaky_slope: 0.2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_output_stays_in_unit_range_for_any_weights(seed in any::<u64>(), gain in 0.1f32..50.0) {
        let arch = micro_arch();
        let mut g = build_generator(&arch, &mut Initializer::new(seed)).unwrap();
        for p in g.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v *= gain);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Tensor::randn(&[3, 4], &mut rng);
        let out = generator_forward(&g, &z, &one_hot_rows(3, 3)).unwrap();
        prop_assert_eq!(out.shape(), &[3, 1, 8, 8]);
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
