use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerSpec};
use crate::scalar::Scalar;
use crate::tensor::{Param, Tensor};

/// Ordered chain of layers; also the unit a checkpoint stores.
pub struct Sequential<T: Scalar = f32> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl Sequential {
    pub const KIND: &'static str = "sequential";
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    /// Input gradients at every layer boundary for upstream gradient `grad`;
    /// index 0 is the gradient with respect to the network input and the
    /// last entry is `grad` itself. Parameter gradients are untouched.
    pub fn boundary_grads(&self, grad: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut out = vec![grad.clone()];
        for layer in self.layers.iter().rev() {
            let g = layer.input_grad(out.last().expect("non-empty"))?;
            out.push(g);
        }
        out.reverse();
        Ok(out)
    }

    /// Pushes the tangent `a_in` forward through the chain while adding the
    /// second-order parameter contributions against `boundary` (as returned
    /// by [`boundary_grads`](Self::boundary_grads)). Returns the output tangent.
    pub fn propagate_second_order(&mut self, a_in: &Tensor<T>, boundary: &[Tensor<T>]) -> Result<Tensor<T>> {
        if boundary.len() != self.layers.len() + 1 {
            return Err(NnError::shape(
                Sequential::KIND,
                format!("{} boundary gradients for {} layers", boundary.len(), self.layers.len()),
            ));
        }
        let mut a = a_in.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.accumulate_second_order(&a, &boundary[i + 1])?;
            a = layer.tangent(&a)?;
        }
        Ok(a)
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn kind(&self) -> &'static str {
        Sequential::KIND
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::new(Sequential::KIND, self.specs())
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn buffers(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    fn input_grad(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad.clone();
        for layer in self.layers.iter().rev() {
            g = layer.input_grad(&g)?;
        }
        Ok(g)
    }

    fn tangent(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let mut t = a.clone();
        for layer in &self.layers {
            t = layer.tangent(&t)?;
        }
        Ok(t)
    }

    fn accumulate_second_order(&mut self, a_in: &Tensor<T>, u_out: &Tensor<T>) -> Result<()> {
        let boundary = self.boundary_grads(u_out)?;
        self.propagate_second_order(a_in, &boundary)?;
        Ok(())
    }
}

impl<T: Scalar> Sequential<T> {
    /// Qualifies parameter names with `prefix` and the layer index so
    /// diagnostics can point at a specific tensor.
    pub fn named(mut self, prefix: &str) -> Self {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for p in layer.params_mut() {
                p.name = format!("{prefix}.{i}.{}", p.name);
            }
        }
        self
    }
}
