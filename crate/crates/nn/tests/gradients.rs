use texvib_nn::gradcheck::{away_from_zero, standard_suite, FD_STEP, LAYER_TOLERANCE};
use texvib_nn::layers::{Dense, DenseConfig};
use texvib_nn::{grad_check, Initializer, Layer, LayerSpec, Param, Result, Tensor};

#[test]
fn every_layer_and_loss_passes_finite_differences() {
    let reports = standard_suite(11).unwrap();
    for (name, r) in &reports {
        println!(
            "{name:<28} rel err {:.3e} (tol {:.0e}, {} kink coords skipped)",
            r.max_rel_error, r.tolerance, r.kinks_skipped
        );
    }
    for (name, r) in &reports {
        assert!(r.passed, "{name}: {r:?}");
    }
}

/// Dense layer whose backward pass returns twice the true input gradient.
struct DoubledBackward(Dense<f64>);

impl Layer<f64> for DoubledBackward {
    fn kind(&self) -> &'static str {
        "doubled_dense"
    }

    fn spec(&self) -> LayerSpec {
        self.0.spec()
    }

    fn forward(&mut self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.0.forward(x)
    }

    fn infer(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.0.infer(x)
    }

    fn backward(&mut self, grad: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(self.0.backward(grad)?.map(|v| 2.0 * v))
    }

    fn params(&self) -> Vec<&Param<f64>> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.0.params_mut()
    }
}

#[test]
fn corrupted_backward_is_caught() {
    let mut init = Initializer::new(4);
    let x = away_from_zero(&[3, 6], 0.05, 4);
    let mut good = Dense::new(DenseConfig { inputs: 6, outputs: 4 }, &mut init).unwrap();
    assert!(grad_check(&mut good, &x, LAYER_TOLERANCE, FD_STEP, 4).passed);

    let mut bad = DoubledBackward(Dense::new(DenseConfig { inputs: 6, outputs: 4 }, &mut init).unwrap());
    let report = grad_check(&mut bad, &x, LAYER_TOLERANCE, FD_STEP, 4);
    assert!(!report.passed);
    assert_eq!(report.worst, "input");
    assert!((report.max_rel_error - 0.5).abs() < 1e-3, "{report:?}");
}
