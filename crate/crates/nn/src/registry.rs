use std::collections::BTreeMap;

use crate::error::{NnError, Result};
use crate::layer::{Initializer, Layer, LayerSpec};
use crate::layers::*;
use crate::scalar::Scalar;
use crate::sequential::Sequential;

/// Builds a layer of one kind from its serialized hyperparameters.
pub trait LayerFactory<T: Scalar = f32>: Send + Sync {
    fn build(&self, spec: &LayerSpec, init: &mut Initializer) -> Result<Box<dyn Layer<T>>>;
}

impl<T: Scalar, F> LayerFactory<T> for F
where
    F: Fn(&LayerSpec, &mut Initializer) -> Result<Box<dyn Layer<T>>> + Send + Sync,
{
    fn build(&self, spec: &LayerSpec, init: &mut Initializer) -> Result<Box<dyn Layer<T>>> {
        self(spec, init)
    }
}

/// Layer kinds by name. Checkpoint loading resolves every stored
/// [`LayerSpec`] through a registry.
pub struct LayerRegistry<T: Scalar = f32> {
    factories: BTreeMap<String, Box<dyn LayerFactory<T>>>,
}

impl<T: Scalar> Default for LayerRegistry<T> {
    fn default() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> LayerRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding every layer kind this crate ships.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register(Dense::KIND, |s: &LayerSpec, i: &mut Initializer| {
            Ok(Box::new(Dense::<T>::new(s.parse_config()?, i)?) as Box<dyn Layer<T>>)
        });
        r.register(Conv2d::KIND, |s: &LayerSpec, i: &mut Initializer| {
            Ok(Box::new(Conv2d::<T>::new(s.parse_config()?, i)?) as Box<dyn Layer<T>>)
        });
        r.register(BatchNorm::KIND, |s: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(BatchNorm::<T>::new(s.parse_config()?)?) as Box<dyn Layer<T>>)
        });
        r.register(LeakyRelu::KIND, |s: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(LeakyRelu::<T>::new(s.parse_config()?)?) as Box<dyn Layer<T>>)
        });
        r.register(Relu::KIND, |_: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(Relu::<T>::new()) as Box<dyn Layer<T>>)
        });
        r.register(Sigmoid::KIND, |_: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(Sigmoid::<T>::new()) as Box<dyn Layer<T>>)
        });
        r.register(Softmax::KIND, |_: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(Softmax::<T>::new()) as Box<dyn Layer<T>>)
        });
        r.register(PixelShuffle::KIND, |s: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(PixelShuffle::<T>::new(s.parse_config()?)?) as Box<dyn Layer<T>>)
        });
        r.register(Reshape::KIND, |s: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(Reshape::<T>::new(s.parse_config()?)?) as Box<dyn Layer<T>>)
        });
        r.register(GlobalAvgPool::KIND, |_: &LayerSpec, _: &mut Initializer| {
            Ok(Box::new(GlobalAvgPool::<T>::new()) as Box<dyn Layer<T>>)
        });
        r.register(ResidualBlock::KIND, |s: &LayerSpec, i: &mut Initializer| {
            Ok(Box::new(ResidualBlock::<T>::new(s.parse_config()?, i)?) as Box<dyn Layer<T>>)
        });
        r
    }

    pub fn register<F: LayerFactory<T> + 'static>(&mut self, kind: &str, factory: F) {
        self.factories.insert(kind.to_string(), Box::new(factory));
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &LayerSpec, init: &mut Initializer) -> Result<Box<dyn Layer<T>>> {
        let factory = self
            .factories
            .get(&spec.kind)
            .ok_or_else(|| NnError::UnknownLayer(spec.kind.clone()))?;
        factory.build(spec, init)
    }

    pub fn build_sequential(&self, specs: &[LayerSpec], init: &mut Initializer) -> Result<Sequential<T>> {
        let layers = specs.iter().map(|s| self.build(s, init)).collect::<Result<Vec<_>>>()?;
        Ok(Sequential::new(layers))
    }
}
