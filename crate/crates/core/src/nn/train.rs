//! Minibatch training with softmax cross-entropy.
//!
//! Softmax exists only here; trained networks are classified by raw-logit argmax.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use thiserror::Error;

use crate::affine::{AffineFunction, Matrix};

use super::{LabeledDataset, Plnn};

/// Samples per gradient chunk; chunk sums are reduced in a fixed order.
const CHUNK: usize = 50;

/// Mean batch loss beyond which training counts as diverged.
const DIVERGED_LOSS: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Hidden layer widths; the output layer has `classes` units.
    pub layer_widths: Vec<usize>,
    pub classes: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 300,
            learning_rate: 1e-3,
            seed: 0,
            layer_widths: vec![10; 5],
            classes: 10,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.classes == 0 {
            return Err(TrainError::Config("epochs, batch size and classes must be positive".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(TrainError::Config("layer widths must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning rate {} not positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: Plnn,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer { rows: self.rows, cols: self.cols, w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()] }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(self.b.iter())
    }
}

fn layers_of(net: &Plnn) -> Vec<Layer> {
    net.layers()
        .iter()
        .map(|l| Layer { rows: l.output_dim(), cols: l.input_dim(), w: l.weight().as_slice().to_vec(), b: l.bias().to_vec() })
        .collect()
}

fn net_of(layers: &[Layer]) -> Plnn {
    Plnn::new(
        layers
            .iter()
            .map(|l| {
                AffineFunction::new(Matrix::new(l.rows, l.cols, l.w.clone()).expect("shape kept"), l.b.clone())
                    .expect("shape kept")
            })
            .collect(),
    )
    .expect("chain kept")
}

/// Forward pass keeping every preactivation; returns them with the last one as logits.
fn forward(layers: &[Layer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut pre = Vec::with_capacity(layers.len());
    let mut a: Vec<f64> = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        let mut z = l.b.clone();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &l.w[r * l.cols..(r + 1) * l.cols];
            *zr += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
        }
        if i + 1 < layers.len() {
            a = z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect();
        }
        pre.push(z);
    }
    pre
}

fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut d: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    d[label] -= 1.0;
    (loss, d)
}

/// Adds the loss gradient at one sample into `grads` and returns the loss.
fn accumulate(layers: &[Layer], x: &[f64], label: usize, grads: &mut [Layer]) -> f64 {
    let pre = forward(layers, x);
    let (loss, mut dz) = cross_entropy(pre.last().expect("non-empty"), label);
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        let g = &mut grads[i];
        let input: Vec<f64> =
            if i == 0 { x.to_vec() } else { pre[i - 1].iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect() };
        for (r, &d) in dz.iter().enumerate() {
            g.b[r] += d;
            if d == 0.0 {
                continue;
            }
            for (gw, a) in g.w[r * l.cols..(r + 1) * l.cols].iter_mut().zip(&input) {
                *gw += d * a;
            }
        }
        if i > 0 {
            let mut da = vec![0.0; l.cols];
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (v, w) in da.iter_mut().zip(&l.w[r * l.cols..(r + 1) * l.cols]) {
                    *v += d * w;
                }
            }
            for (v, z) in da.iter_mut().zip(&pre[i - 1]) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            dz = da;
        }
    }
    loss
}

/// Gradient of one layer: `(weight, bias)` with the weight in row-major order.
pub type LayerGradient = (Vec<f64>, Vec<f64>);

/// Loss and its gradient for one labeled point, one entry per layer.
pub fn gradient(net: &Plnn, x: &[f64], label: usize) -> (f64, Vec<LayerGradient>) {
    let layers = layers_of(net);
    let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
    let loss = accumulate(&layers, x, label, &mut grads);
    (loss, grads.into_iter().map(|g| (g.w, g.b)).collect())
}

fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    dims.windows(2)
        .map(|d| {
            let (cols, rows) = (d[0], d[1]);
            let std = (2.0 / cols as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let w = (0..rows * cols).map(|_| normal.sample(rng)).collect();
            let bound = 1.0 / (cols as f64).sqrt();
            let uni = Uniform::new(-bound, bound).expect("non-empty range");
            let b = (0..rows).map(|_| uni.sample(rng)).collect();
            Layer { rows, cols, w, b }
        })
        .collect()
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains a fresh network on `data`, optionally through a frozen affine `encoder`.
///
/// With an encoder the returned network takes encoded inputs; the deployed
/// classifier is `net ∘ encoder`.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig, encoder: Option<&AffineFunction>) -> Result<Trained, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Shape("empty dataset".into()));
    }
    if let Some(label) = data.labels().iter().find(|l| **l >= cfg.classes) {
        return Err(TrainError::Shape(format!("label {label} outside 0..{}", cfg.classes)));
    }
    let encoded;
    let data = match encoder {
        Some(e) => {
            encoded = data.encode(e).map_err(|err| TrainError::Shape(err.to_string()))?;
            &encoded
        }
        None => data,
    };
    let mut dims = vec![data.dim()];
    dims.extend(&cfg.layer_widths);
    dims.push(cfg.classes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = init(&dims, &mut rng);
    let mut adam =
        Adam { m: layers.iter().map(Layer::zeros_like).collect(), v: layers.iter().map(Layer::zeros_like).collect(), t: 0 };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let partials: Vec<(f64, Vec<Layer>)> = idx
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
                    let mut loss = 0.0;
                    for i in chunk {
                        loss += accumulate(&layers, data.input(*i), data.label(*i), &mut g);
                    }
                    (loss, g)
                })
                .collect();
            let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
            let mut loss = 0.0;
            for (l, g) in partials {
                loss += l;
                for (acc, part) in grads.iter_mut().zip(g) {
                    for (a, p) in acc.params_mut().zip(part.params()) {
                        *a += p;
                    }
                }
            }
            let n = idx.len() as f64;
            loss /= n;
            if !loss.is_finite() || loss > DIVERGED_LOSS {
                return Err(TrainError::Divergence { epoch, batch, loss });
            }
            epoch_loss += loss * n;
            step(&mut layers, &grads, 1.0 / n, cfg, &mut adam);
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    if layers.iter().any(|l| l.params().any(|p| !p.is_finite())) {
        return Err(TrainError::Divergence { epoch: cfg.epochs, batch: 0, loss: f64::NAN });
    }
    Ok(Trained { net: net_of(&layers), epoch_losses })
}

fn step(layers: &mut [Layer], grads: &[Layer], scale: f64, cfg: &TrainConfig, adam: &mut Adam) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (l, g) in layers.iter_mut().zip(grads) {
                for (p, g) in l.params_mut().zip(g.params()) {
                    *p -= lr * g * scale;
                }
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - BETA1.powi(adam.t);
            let c2 = 1.0 - BETA2.powi(adam.t);
            for (((l, g), m), v) in layers.iter_mut().zip(grads).zip(&mut adam.m).zip(&mut adam.v) {
                for (((p, g), m), v) in l.params_mut().zip(g.params()).zip(m.params_mut()).zip(v.params_mut()) {
                    let g = g * scale;
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum GradCheck {
    Checked {
        max_relative_error: f64,
    },
    /// A hidden preactivation is too close to the ReLU kink.
    Skipped {
        layer: usize,
        neuron: usize,
        preactivation: f64,
    },
}

const KINK_GAP: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

/// Compares the analytic loss gradient with central differences over every parameter.
///
/// The relative error of one entry is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(net: &Plnn, x: &[f64], label: usize) -> GradCheck {
    let layers = layers_of(net);
    let pre = forward(&layers, x);
    for (li, z) in pre[..pre.len() - 1].iter().enumerate() {
        for (ni, v) in z.iter().enumerate() {
            if v.abs() < KINK_GAP {
                return GradCheck::Skipped { layer: li, neuron: ni, preactivation: *v };
            }
        }
    }
    let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
    accumulate(&layers, x, label, &mut grads);
    let loss_at = |ls: &[Layer]| cross_entropy(forward(ls, x).last().expect("non-empty"), label).0;

    let mut worst = 0.0f64;
    let mut probe = layers.clone();
    for li in 0..layers.len() {
        let count = layers[li].w.len() + layers[li].b.len();
        for pi in 0..count {
            let original = *param(&mut probe[li], pi);
            *param(&mut probe[li], pi) = original + FD_STEP;
            let up = loss_at(&probe);
            *param(&mut probe[li], pi) = original - FD_STEP;
            let down = loss_at(&probe);
            *param(&mut probe[li], pi) = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = *grads[li].params().nth(pi).expect("index in range");
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    GradCheck::Checked { max_relative_error: worst }
}

fn param(l: &mut Layer, i: usize) -> &mut f64 {
    let nw = l.w.len();
    if i < nw {
        &mut l.w[i]
    } else {
        &mut l.b[i - nw]
    }
}
