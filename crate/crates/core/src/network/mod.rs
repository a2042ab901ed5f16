//! Dense ReLU regressor mapping a stabilizer triple to a field magnitude.

mod dataset;
mod train;

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;

pub use dataset::{Dataset, DatasetMeta, Row};
pub use train::{gradient_check, train, LossRecord, TrainParams, TrainReport};

pub const DEFAULT_LAYERS: [usize; 5] = [3, 128, 150, 128, 1];
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMetadata {
    pub seed: u64,
    /// Lattice size of the training data.
    pub k: Option<usize>,
    pub b_max: Option<f64>,
    pub steps: usize,
    pub best_step: usize,
    pub train_loss: Option<f64>,
    pub eval_loss: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

/// One fully connected layer, `y = W x + b` with `W` row-major `n_out × n_in`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for ((yo, row), bo) in y.iter_mut().zip(self.w.chunks_exact(self.n_in)).zip(&self.b) {
            *yo = bo + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressorModel {
    pub(crate) layers: Vec<Dense>,
    pub activation: Activation,
    pub metadata: ModelMetadata,
}

impl RegressorModel {
    /// He-uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn init(layer_sizes: &[usize], seed: Seed) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let mut rng = seed.rng();
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / n_in as f64).sqrt();
                Dense {
                    n_in,
                    n_out,
                    w: (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect(),
                    b: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(RegressorModel {
            layers,
            activation: Activation::Relu,
            metadata: ModelMetadata {
                seed: seed.0,
                ..Default::default()
            },
        })
    }

    pub fn default_init(seed: Seed) -> Self {
        Self::init(&DEFAULT_LAYERS, seed).expect("default layer sizes are valid")
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_in)
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Network output for one input. The output is not clamped.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs() {
            return Err(Error::InvalidArgument(format!(
                "expected {} inputs, got {}",
                self.n_inputs(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite input {x:?}")));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (j, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            layer.forward(&a, &mut z);
            if j < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a[0]
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFile {
            version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            weights: self.layers.iter().map(|l| l.w.clone()).collect(),
            biases: self.layers.iter().map(|l| l.b.clone()).collect(),
            activation: self.activation,
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        let sizes = &file.layer_sizes;
        let n = sizes.len().saturating_sub(1);
        if n == 0 || file.weights.len() != n || file.biases.len() != n {
            return Err(Error::Format("layer count mismatch".into()));
        }
        let layers = (0..n)
            .map(|j| {
                let (n_in, n_out) = (sizes[j], sizes[j + 1]);
                if file.weights[j].len() != n_in * n_out || file.biases[j].len() != n_out {
                    return Err(Error::Format(format!("layer {j} has the wrong shape")));
                }
                Ok(Dense {
                    n_in,
                    n_out,
                    w: file.weights[j].clone(),
                    b: file.biases[j].clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(RegressorModel {
            layers,
            activation: file.activation,
            metadata: file.metadata,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    metadata: ModelMetadata,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let a = RegressorModel::default_init(Seed(1));
        assert_eq!(a, RegressorModel::default_init(Seed(1)));
        assert_ne!(a.layers, RegressorModel::default_init(Seed(2)).layers);
        assert_eq!(a.layer_sizes(), DEFAULT_LAYERS);
        assert!(a.forward(&[0.3, -0.2, 0.9]).unwrap().is_finite());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = RegressorModel::default_init(Seed(1));
        for l in &mut m.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(m.forward(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = RegressorModel::default_init(Seed(1));
        assert!(m.forward(&[1.0, f64::NAN, 0.0]).is_err());
        assert!(m.forward(&[1.0, 0.0]).is_err());
        assert!(RegressorModel::init(&[3], Seed(0)).is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let mut m = RegressorModel::default_init(Seed(9));
        m.metadata.k = Some(3);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = RegressorModel::load(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.metadata.seed, 9);
        let x = [0.7, 0.4, 0.35];
        assert_eq!(back.forward(&x).unwrap().to_bits(), m.forward(&x).unwrap().to_bits());
    }

    #[test]
    fn load_rejects_truncated_and_foreign_files() {
        let m = RegressorModel::default_init(Seed(9));
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert!(RegressorModel::load(&buf[..buf.len() / 2]).is_err());
        let text = String::from_utf8(buf).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(
            RegressorModel::load(text.as_bytes()),
            Err(Error::Format(_))
        ));
    }
}
