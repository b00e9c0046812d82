use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, LayerParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::IdnConfig;

/// All layer parameters of one network, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    config: IdnConfig,
    layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Every weight and bias zero.
    pub fn zeros(config: IdnConfig) -> Result<Self> {
        config.validate()?;
        let layers = config.layers().iter().map(|(_, s)| LayerParams::zeros(s)).collect();
        Ok(Self { config, layers })
    }

    /// Wraps layers, checking them against the config's shapes.
    pub fn from_layers(config: IdnConfig, layers: Vec<LayerParams<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        if specs.len() != layers.len() {
            return Err(Error::shape(format!("expected {} layers, got {}", specs.len(), layers.len())));
        }
        for ((name, spec), p) in specs.iter().zip(&layers) {
            p.check(spec).map_err(|e| Error::shape(format!("{name}: {e}")))?;
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &IdnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    pub fn names(&self) -> Vec<String> {
        self.config.layers().into_iter().map(|(n, _)| n).collect()
    }

    pub fn specs(&self) -> Vec<ConvSpec> {
        self.config.layers().into_iter().map(|(_, s)| s).collect()
    }

    pub fn get(&self, name: &str) -> Option<&LayerParams<T>> {
        self.config.layers().iter().position(|(n, _)| n == name).map(|i| &self.layers[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut LayerParams<T>> {
        let i = self.config.layers().iter().position(|(n, _)| n == name)?;
        Some(&mut self.layers[i])
    }

    pub fn rblock_mut(&mut self) -> &mut LayerParams<T> {
        let i = self.config.rblock_index();
        &mut self.layers[i]
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { config: self.config, layers: self.layers.iter().map(LayerParams::cast).collect() }
    }
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
///
/// Values are drawn in `f64` in canonical layer order so `f32` and `f64`
/// initialisations from one seed agree up to rounding.
pub fn init_params<T: Scalar>(config: &IdnConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layers()
        .iter()
        .map(|(_, spec)| {
            let std = (2.0 / spec.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite standard deviation");
            let shape = spec.weight_shape();
            let data = (0..shape.len()).map(|_| T::lit(normal.sample(&mut rng))).collect();
            LayerParams {
                weight: Tensor::from_vec(shape, data).expect("length matches shape"),
                bias: Tensor::zeros(spec.bias_shape()).expect("validated spec"),
            }
        })
        .collect();
    Ok(ModelParams { config: *config, layers })
}

/// Total scalar parameters, weights plus biases.
pub fn count_params<T: Scalar>(params: &ModelParams<T>) -> usize {
    params.layers().iter().map(LayerParams::param_count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_count() {
        let p = ModelParams::<f32>::zeros(IdnConfig::default()).unwrap();
        assert_eq!(count_params(&p), 552_769);
        assert_eq!(p.layers().len(), 31);
    }

    #[test]
    fn tiny_count_by_hand() {
        let c = IdnConfig { scale: 2, num_dblocks: 1, d3: 8, d: 2, s: 4, groups: 2, feat_channels: 8, ..Default::default() };
        // D1=6 D2=4 D3=8 D4=8 D5=6 D6=10, slice 2/6, groups 2.
        let fblock = (9 * 8 + 8) + (8 * 8 * 9 + 8);
        let enh = (8 * 6 * 9 + 6) + (3 * 4 * 9 + 4) + (4 * 8 * 9 + 8) + (3 * 8 * 9 + 8) + (8 * 6 * 9 + 6) + (6 * 10 * 9 + 10);
        let comp = 10 * 8 + 8;
        let rblock = 8 * 17 * 17 + 1;
        let p = ModelParams::<f64>::zeros(c).unwrap();
        assert_eq!(count_params(&p), fblock + enh + comp + rblock);
    }

    #[test]
    fn init_statistics_and_determinism() {
        let c = IdnConfig::default();
        let a = init_params::<f64>(&c, 5).unwrap();
        let b = init_params::<f64>(&c, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.layers().iter().all(|l| l.bias.data().iter().all(|&v| v == 0.0)));

        let w = &a.get("fblock.conv2").unwrap().weight;
        assert_eq!(w.len(), 36_864);
        let mean = w.data().iter().sum::<f64>() / w.len() as f64;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 576.0;
        assert!((var - target).abs() < 0.1 * target, "variance {var} vs {target}");

        let f = init_params::<f32>(&c, 5).unwrap();
        assert_eq!(f, a.cast::<f32>());
    }

    #[test]
    fn from_layers_checks_shapes() {
        let c = IdnConfig::default();
        let mut layers = ModelParams::<f32>::zeros(c).unwrap().layers().to_vec();
        layers.swap(0, 1);
        assert!(matches!(ModelParams::from_layers(c, layers), Err(Error::Shape(_))));
    }
}
