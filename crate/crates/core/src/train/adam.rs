use crate::error::{Error, Result};
use crate::nn::LayerParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// First and second moments for every weight and bias tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub(crate) m: Vec<Tensor<T>>,
    pub(crate) v: Vec<Tensor<T>>,
}

fn flatten<T>(layers: &[LayerParams<T>]) -> impl Iterator<Item = &Tensor<T>> {
    layers.iter().flat_map(|l| [&l.weight, &l.bias])
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[LayerParams<T>], config: AdamConfig) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::from_parts(t.shape(), vec![T::zero(); t.len()]);
        let m: Vec<_> = flatten(params).map(zeros).collect();
        Self { config, t: 0, v: m.clone(), m }
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    pub(crate) fn from_moments(config: AdamConfig, t: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Self {
        Self { config, t, m, v }
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [LayerParams<T>], grads: &[LayerParams<T>]) -> Result<()> {
        if grads.len() != params.len() || 2 * params.len() != self.m.len() {
            return Err(Error::State(format!(
                "{} gradients for {} layers ({} moment slots)",
                grads.len(),
                params.len(),
                self.m.len()
            )));
        }
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let t = self.t + 1;
        let c1 = 1.0 - beta1.powf(t as f64);
        let c2 = 1.0 - beta2.powf(t as f64);

        let targets = params.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]);
        for (k, (p, g)) in targets.zip(flatten(grads)).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if g.shape() != p.shape() || m.shape() != p.shape() {
                return Err(Error::State(format!("gradient {} for parameter {}", g.shape(), p.shape())));
            }
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let pi = pd[i].as_f64();
                let gi = g.data()[i].as_f64() + weight_decay * pi;
                let mi = beta1 * md[i].as_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * vd[i].as_f64() + (1.0 - beta2) * gi * gi;
                md[i] = T::lit(mi);
                vd[i] = T::lit(vi);
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                pd[i] = T::lit(pi - lr * m_hat / (v_hat.sqrt() + eps));
            }
        }
        self.t = t;
        Ok(())
    }
}
