//! Piecewise-linear networks: affine layers with ReLU in between.

mod mnist;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::{AffineError, AffineFunction, Matrix};

pub use mnist::{load_idx_images, load_idx_labels, load_mnist, LabeledDataset, MnistError, Split};
pub use train::{gradient, gradient_check, train, GradCheck, LayerGradient, Optimizer, TrainConfig, TrainError, Trained};

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error("network needs at least one layer")]
    Empty,
    #[error("layer {index} expects input dimension {expected} but the previous layer outputs {got}")]
    Chain { index: usize, expected: usize, got: usize },
    #[error("weight file: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight json: {0}")]
    Json(#[from] serde_json::Error),
}

/// `α_{l+1} ∘ φ ∘ α_l ∘ … ∘ φ ∘ α_1` with `φ` the ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Plnn {
    layers: Vec<AffineFunction>,
}

pub fn relu(v: &mut [f64]) {
    for x in v {
        if *x <= 0.0 {
            *x = 0.0;
        }
    }
}

/// Smallest index of a maximal entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl Plnn {
    pub fn new(layers: Vec<AffineFunction>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(NetError::Chain { index: i + 1, expected: pair[1].input_dim(), got: pair[0].output_dim() });
            }
        }
        Ok(Plnn { layers })
    }

    pub fn layers(&self) -> &[AffineFunction] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Total neuron count: the sum of every layer's output dimension.
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(AffineFunction::output_dim).sum()
    }

    /// Neurons behind a ReLU.
    pub fn hidden_neurons(&self) -> usize {
        self.neuron_count() - self.output_dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut h = self.layers[0].eval(x)?;
        for layer in &self.layers[1..] {
            relu(&mut h);
            h = layer.eval(&h)?;
        }
        Ok(h)
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize, NetError> {
        Ok(argmax(&self.eval(x)?))
    }

    /// The network `self ∘ pre`, folding `pre` into the first layer.
    pub fn precompose(&self, pre: &AffineFunction) -> Result<Plnn, NetError> {
        let mut layers = self.layers.clone();
        layers[0] = layers[0].compose(pre)?;
        Ok(Plnn { layers })
    }

    pub fn to_json(&self) -> String {
        let file = WeightFile {
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    rows: l.output_dim(),
                    cols: l.input_dim(),
                    weight: l.weight().as_slice().to_vec(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: WeightFile = serde_json::from_str(text)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| AffineFunction::new(Matrix::new(l.rows, l.cols, l.weight)?, l.bias))
            .collect::<Result<Vec<_>, _>>()?;
        Plnn::new(layers)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Plnn::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn abs_net() -> Plnn {
        let a1 = AffineFunction::new(Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap(), vec![0.0, 0.0]).unwrap();
        let a2 = AffineFunction::new(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(), vec![0.0]).unwrap();
        Plnn::new(vec![a1, a2]).unwrap()
    }

    #[test]
    fn abs_net_eval() {
        assert_eq!(abs_net().eval(&[3.0, 1.0]).unwrap(), vec![2.0]);
        assert_eq!(abs_net().eval(&[1.0, 3.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let net = Plnn::new(vec![
            AffineFunction::new(Matrix::zeros(3, 2), vec![1.0, -1.0, 2.0]).unwrap(),
            AffineFunction::new(Matrix::zeros(2, 3), vec![0.5, -0.25]).unwrap(),
        ])
        .unwrap();
        assert_eq!(net.eval(&[7.0, -3.0]).unwrap(), vec![0.5, -0.25]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
        let net = Plnn::new(vec![AffineFunction::new(Matrix::zeros(3, 2), vec![1.0; 3]).unwrap()]).unwrap();
        assert_eq!(net.classify(&[5.0, -5.0]).unwrap(), 0);
    }

    #[test]
    fn chain_checked() {
        let err = Plnn::new(vec![AffineFunction::zero(2, 3), AffineFunction::zero(2, 1)]).unwrap_err();
        assert!(matches!(err, NetError::Chain { index: 1, expected: 2, got: 3 }));
    }

    #[test]
    fn neuron_bookkeeping() {
        let net =
            Plnn::new(vec![AffineFunction::zero(784, 10), AffineFunction::zero(10, 10), AffineFunction::zero(10, 3)]).unwrap();
        assert_eq!(net.neuron_count(), 23);
        assert_eq!(net.hidden_neurons(), 20);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let a = AffineFunction::new(Matrix::new(1, 2, vec![0.1 + 0.2, -1.0 / 3.0]).unwrap(), vec![1e-300]).unwrap();
        let net = Plnn::new(vec![a]).unwrap();
        let back = Plnn::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json(), net.to_json());
    }

    #[test]
    fn precompose_folds_into_first_layer() {
        let pre = AffineFunction::translation(vec![1.0, 0.0]).unwrap();
        let net = abs_net().precompose(&pre).unwrap();
        assert_eq!(net.eval(&[2.0, 1.0]).unwrap(), vec![2.0]);
    }
}
