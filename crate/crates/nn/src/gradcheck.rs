use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layer::Layer;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest norm-wise relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
    /// over the input gradient and every parameter gradient.
    pub max_rel_error: f64,
    /// Which gradient produced `max_rel_error`.
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when a non-finite value stopped the check.
    pub failure: Option<String>,
    /// Coordinates left out because the step straddled a kink (the two
    /// one-sided differences disagree). More than a tenth of any gradient
    /// block fails the check.
    pub kinks_skipped: usize,
}

/// One-sided differences may disagree by this many tolerances (relative)
/// before the coordinate is treated as straddling a kink.
const KINK_RATIO: f64 = 10.0;
const MAX_KINK_FRACTION: f64 = 0.1;

fn objective<T: Scalar>(y: &Tensor<T>, weights: &[T]) -> f64 {
    y.data()
        .iter()
        .zip(weights)
        .map(|(&a, &b)| a.as_f64() * b.as_f64())
        .sum()
}

/// Baseline objective plus the rounding noise expected in it.
struct Baseline {
    value: f64,
    noise: f64,
}

impl Baseline {
    fn new<T: Scalar>(y: &Tensor<T>, weights: &Tensor<T>) -> Self {
        let magnitude: f64 = y
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| (a.as_f64() * b.as_f64()).abs())
            .sum();
        Self {
            value: objective(y, weights.data()),
            noise: 4.0 * T::epsilon().as_f64() * magnitude,
        }
    }

    fn sample(&self, analytic: f64, plus: f64, minus: f64, hi: f64, lo: f64, orig: f64) -> Sample {
        Sample {
            analytic,
            central: (plus - minus) / (hi - lo),
            forward: (plus - self.value) / (hi - orig),
            backward: (self.value - minus) / (orig - lo),
            noise: self.noise / (hi - orig).min(orig - lo),
        }
    }
}

/// Finite differences of one coordinate.
struct Sample {
    analytic: f64,
    central: f64,
    forward: f64,
    backward: f64,
    noise: f64,
}

/// Compares one tensor's analytic gradient with its finite differences.
///
/// A coordinate whose one-sided differences disagree by more than
/// `KINK_RATIO · tolerance` times the block's RMS gradient (plus rounding
/// noise) has a kink inside its step and is left out: central differences
/// are meaningless there, while smooth curvature moves the one-sided
/// differences apart only by `O(step)`.
fn block_error(samples: &[Sample], tolerance: f64) -> (f64, usize) {
    if samples.is_empty() {
        return (0.0, 0);
    }
    let rms = (samples.iter().map(|s| s.central * s.central).sum::<f64>() / samples.len() as f64).sqrt();
    let (mut analytic, mut numeric, mut skipped) = (Vec::new(), Vec::new(), 0);
    for s in samples {
        if (s.forward - s.backward).abs() > KINK_RATIO * tolerance * rms + s.noise {
            skipped += 1;
        } else {
            analytic.push(s.analytic);
            numeric.push(s.central);
        }
    }
    if skipped as f64 > MAX_KINK_FRACTION * samples.len() as f64 {
        return (f64::INFINITY, skipped);
    }
    (rel_error(&analytic, &numeric), skipped)
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a - n).powi(2);
        na += a * a;
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale < 1e-10 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

fn failure<T: Scalar>(layer: &dyn Layer<T>, tolerance: f64, what: String) -> GradCheckReport {
    GradCheckReport {
        max_rel_error: f64::INFINITY,
        worst: layer.kind().to_string(),
        tolerance,
        passed: false,
        failure: Some(format!("layer `{}`: {what}", layer.kind())),
        kinks_skipped: 0,
    }
}

/// Compares analytic gradients of `Σ r ⊙ layer(input)` (random `r` from
/// `seed`) against central differences with step `step`, for the input and
/// for every parameter.
pub fn grad_check<T: Scalar>(
    layer: &mut dyn Layer<T>,
    input: &Tensor<T>,
    tolerance: f64,
    step: f64,
    seed: u64,
) -> GradCheckReport {
    // Decorrelated from inputs a caller may have drawn with the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F0B_1EC7);
    layer.zero_grad();
    let y = match layer.forward(input) {
        Ok(y) => y,
        Err(e) => return failure(layer, tolerance, e.to_string()),
    };
    if !y.is_finite() {
        return failure(layer, tolerance, "non-finite forward output".into());
    }
    let weights = Tensor::randn(y.shape(), &mut rng);
    let dx = match layer.backward(&weights) {
        Ok(d) => d,
        Err(e) => return failure(layer, tolerance, e.to_string()),
    };
    if !dx.is_finite() {
        return failure(layer, tolerance, "non-finite input gradient".into());
    }
    let analytic_params: Vec<(String, Vec<T>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();
    let base = Baseline::new(&y, &weights);
    let h = T::of(step);

    let eval = |layer: &mut dyn Layer<T>, x: &Tensor<T>| -> Option<f64> {
        let y = layer.forward(x).ok()?;
        y.is_finite().then(|| objective(&y, weights.data()))
    };

    let mut blocks = Vec::new();
    let mut block = Vec::with_capacity(input.len());
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = eval(layer, &x);
        x.data_mut()[i] = orig - h;
        let minus = eval(layer, &x);
        x.data_mut()[i] = orig;
        let (hi, lo) = ((orig + h).as_f64(), (orig - h).as_f64());
        match (plus, minus) {
            (Some(p), Some(m)) => block.push(base.sample(dx.data()[i].as_f64(), p, m, hi, lo, orig.as_f64())),
            _ => return failure(layer, tolerance, format!("non-finite output perturbing input[{i}]")),
        }
    }
    blocks.push(("input".to_string(), block));

    for (pi, (name, analytic)) in analytic_params.iter().enumerate() {
        let mut block = Vec::with_capacity(analytic.len());
        for (j, &a) in analytic.iter().enumerate() {
            let orig = layer.params()[pi].value.data()[j];
            layer.params_mut()[pi].value.data_mut()[j] = orig + h;
            let plus = eval(layer, input);
            layer.params_mut()[pi].value.data_mut()[j] = orig - h;
            let minus = eval(layer, input);
            layer.params_mut()[pi].value.data_mut()[j] = orig;
            let (hi, lo) = ((orig + h).as_f64(), (orig - h).as_f64());
            match (plus, minus) {
                (Some(p), Some(m)) => block.push(base.sample(a.as_f64(), p, m, hi, lo, orig.as_f64())),
                _ => return failure(layer, tolerance, format!("non-finite output perturbing {name}[{j}]")),
            }
        }
        blocks.push((name.clone(), block));
    }
    // Leave the layer's cache consistent with the unperturbed input.
    let _ = layer.forward(input);

    let mut worst = (String::new(), 0.0f64);
    let mut kinks = 0;
    for (name, samples) in &blocks {
        let (e, skipped) = block_error(samples, tolerance);
        kinks += skipped;
        if e > worst.1 || worst.0.is_empty() {
            worst = (name.clone(), e);
        }
    }
    GradCheckReport {
        max_rel_error: worst.1,
        worst: worst.0,
        tolerance,
        passed: worst.1 <= tolerance,
        failure: None,
        kinks_skipped: kinks,
    }
}

/// Central-difference check of a scalar loss `f(x)` against its analytic
/// gradient, norm-wise relative.
pub fn loss_check<T: Scalar>(
    f: impl Fn(&[T]) -> crate::Result<(f64, Vec<T>)>,
    x: &[T],
    tolerance: f64,
    step: f64,
) -> crate::Result<GradCheckReport> {
    let (_, analytic) = f(x)?;
    let mut xs = x.to_vec();
    let mut numeric = Vec::with_capacity(x.len());
    let h = T::of(step);
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let hi = xs[i].as_f64();
        let plus = f(&xs)?.0;
        xs[i] = orig - h;
        let lo = xs[i].as_f64();
        let minus = f(&xs)?.0;
        xs[i] = orig;
        numeric.push((plus - minus) / (hi - lo));
    }
    let analytic: Vec<f64> = analytic.iter().map(|v| v.as_f64()).collect();
    let err = rel_error(&analytic, &numeric);
    Ok(GradCheckReport {
        max_rel_error: err,
        worst: "loss input".into(),
        tolerance,
        passed: err <= tolerance,
        failure: None,
        kinks_skipped: 0,
    })
}

/// Tolerance for single layers and losses.
pub const LAYER_TOLERANCE: f64 = 1e-4;
/// Tolerance for composed blocks and batch norm.
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;
/// Step for single-precision checks.
pub const FD_STEP: f64 = 1e-3;
/// Step for double-precision checks: truncation and kink crossings both
/// vanish while rounding noise stays near 1e-10 relative.
pub const FD_STEP_F64: f64 = 1e-6;

/// Uniform input in `±1` whose entries stay at least `margin` away from
/// zero, so piecewise-linear kinks are not straddled by a finite-difference
/// step.
pub fn away_from_zero<T: Scalar>(shape: &[usize], margin: f32, seed: u64) -> Tensor<T> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| {
            let v: f32 = rng.random_range(-1.0..1.0);
            T::of(if v.abs() < margin { v.signum() * margin + v } else { v } as f64)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and buffer agree")
}

/// Gradient check of every layer kind and loss, one named report each.
///
/// Layers and losses are checked in `f64`, which keeps rounding noise far
/// below the tolerances; the conv layer is additionally checked in `f32`,
/// the precision training uses.
pub fn standard_suite(seed: u64) -> crate::Result<Vec<(String, GradCheckReport)>> {
    use crate::layer::Initializer;
    use crate::layers::*;
    use crate::loss::{bce, bce_with_logits, cross_entropy, ClassTarget};
    use crate::Sequential;

    let mut init = Initializer::new(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, layer: &mut dyn Layer<f64>, x: &Tensor<f64>, tol: f64| {
        out.push((name.to_string(), grad_check(layer, x, tol, FD_STEP_F64, seed)));
    };

    let x_img = away_from_zero(&[2, 3, 8, 8], 0.05, seed);
    run(
        "dense",
        &mut Dense::new(DenseConfig { inputs: 12, outputs: 5 }, &mut init)?,
        &away_from_zero(&[3, 12], 0.05, seed + 1),
        LAYER_TOLERANCE,
    );
    run(
        "conv2d",
        &mut Conv2d::new(Conv2dConfig::same3x3(3, 4, 1), &mut init)?,
        &x_img,
        LAYER_TOLERANCE,
    );
    run(
        "conv2d_stride2",
        &mut Conv2d::new(Conv2dConfig::same3x3(3, 2, 2), &mut init)?,
        &x_img,
        LAYER_TOLERANCE,
    );
    run("relu", &mut Relu::new(), &x_img, LAYER_TOLERANCE);
    run(
        "leaky_relu",
        &mut LeakyRelu::new(LeakyReluConfig { slope: 0.2 })?,
        &x_img,
        LAYER_TOLERANCE,
    );
    run("sigmoid", &mut Sigmoid::new(), &x_img, LAYER_TOLERANCE);
    run(
        "softmax",
        &mut Softmax::new(),
        &away_from_zero(&[4, 9], 0.0, seed + 2),
        LAYER_TOLERANCE,
    );
    run(
        "pixel_shuffle",
        &mut PixelShuffle::new(PixelShuffleConfig { factor: 2 })?,
        &away_from_zero(&[2, 8, 3, 3], 0.0, seed + 3),
        LAYER_TOLERANCE,
    );
    run(
        "reshape",
        &mut Reshape::new(ReshapeConfig { shape: vec![192] })?,
        &x_img,
        LAYER_TOLERANCE,
    );
    run("global_avg_pool", &mut GlobalAvgPool::new(), &x_img, LAYER_TOLERANCE);
    run(
        "batch_norm",
        &mut BatchNorm::new(BatchNormConfig::new(3))?,
        &x_img,
        COMPOSITE_TOLERANCE,
    );
    run(
        "residual_block",
        &mut ResidualBlock::new(
            ResidualBlockConfig {
                in_channels: 3,
                out_channels: 3,
                stride: 1,
                branch_relu: true,
                output_relu: false,
            },
            &mut init,
        )?,
        &x_img,
        COMPOSITE_TOLERANCE,
    );
    run(
        "residual_block_projection",
        &mut ResidualBlock::new(
            ResidualBlockConfig {
                in_channels: 3,
                out_channels: 4,
                stride: 2,
                branch_relu: false,
                output_relu: true,
            },
            &mut init,
        )?,
        &x_img,
        COMPOSITE_TOLERANCE,
    );
    let mut stack = Sequential::new(vec![
        Box::new(Conv2d::new(Conv2dConfig::same3x3(3, 4, 2), &mut init)?),
        Box::new(LeakyRelu::new(LeakyReluConfig { slope: 0.2 })?),
        Box::new(Reshape::new(ReshapeConfig { shape: vec![64] })?),
        Box::new(Dense::new(DenseConfig { inputs: 64, outputs: 2 }, &mut init)?),
    ]);
    run("conv_leaky_dense_stack", &mut stack, &x_img, COMPOSITE_TOLERANCE);

    let mut conv32: Conv2d<f32> = Conv2d::new(Conv2dConfig::same3x3(3, 4, 1), &mut init)?;
    out.push((
        "conv2d_f32".into(),
        grad_check(&mut conv32, &x_img.cast(), LAYER_TOLERANCE, FD_STEP, seed),
    ));

    let probs: Vec<f64> = away_from_zero::<f64>(&[8], 0.0, seed + 4)
        .data()
        .iter()
        .map(|&v| sigmoid(v))
        .collect();
    let targets = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
    out.push((
        "bce".into(),
        loss_check(|p| bce(p, &targets), &probs, LAYER_TOLERANCE, FD_STEP_F64)?,
    ));
    let logits = away_from_zero::<f64>(&[8], 0.0, seed + 5);
    out.push((
        "bce_with_logits".into(),
        loss_check(
            |z| bce_with_logits(z, &targets),
            logits.data(),
            LAYER_TOLERANCE,
            FD_STEP_F64,
        )?,
    ));
    let class_logits = away_from_zero::<f64>(&[4, 9], 0.0, seed + 6);
    let labels = [0usize, 8, 3, 3];
    out.push((
        "cross_entropy".into(),
        loss_check(
            |z| {
                let t = Tensor::new(vec![4, 9], z.to_vec())?;
                let (l, g) = cross_entropy(&t, ClassTarget::Index(&labels))?;
                Ok((l, g.into_data()))
            },
            class_logits.data(),
            LAYER_TOLERANCE,
            FD_STEP_F64,
        )?,
    ));
    let soft = Tensor::new(
        vec![4, 9],
        (0..36).map(|i| if i % 9 == i / 9 { 0.6 } else { 0.05 }).collect(),
    )?;
    out.push((
        "cross_entropy_soft".into(),
        loss_check(
            |z| {
                let t = Tensor::new(vec![4, 9], z.to_vec())?;
                let (l, g) = cross_entropy(&t, ClassTarget::Soft(&soft))?;
                Ok((l, g.into_data()))
            },
            class_logits.data(),
            LAYER_TOLERANCE,
            FD_STEP_F64,
        )?,
    ));
    Ok(out)
}
