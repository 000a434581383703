use crate::error::{CoreError, Result};

/// Default simplex tolerance for label vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;

/// Nonnegative class weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector(Vec<f32>);

impl LabelVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        Self::with_tolerance(values, SIMPLEX_TOLERANCE)
    }

    pub fn with_tolerance(values: Vec<f32>, tolerance: f64) -> Result<Self> {
        check_simplex(&values, tolerance)?;
        Ok(Self(values))
    }

    pub fn one_hot(class: usize, dim: usize) -> Result<Self> {
        if class >= dim {
            return Err(CoreError::LabelNotSimplex(format!("class {class} out of range for dimension {dim}")));
        }
        let mut v = vec![0.0; dim];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn argmax(&self) -> usize {
        texvib_nn::loss::argmax(&self.0)
    }
}

pub fn check_simplex(values: &[f32], tolerance: f64) -> Result<()> {
    if values.is_empty() {
        return Err(CoreError::LabelNotSimplex("empty label".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || (**v as f64) < -tolerance) {
        return Err(CoreError::LabelNotSimplex(format!("entry {v} is negative or not finite")));
    }
    let sum: f64 = values.iter().map(|v| *v as f64).sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(CoreError::LabelNotSimplex(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}
