//! Generators and independent oracles shared by the integration suites and the
//! acceptance runner.
#![allow(dead_code)]

pub mod checks;
pub mod props;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tads::affine::{AffineFunction, Matrix};
use tads::nn::Plnn;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_affine(rng: &mut impl Rng, input: usize, output: usize) -> AffineFunction {
    let scale = 1.0 / (input as f64).sqrt();
    let w = uniform_vec(rng, input * output, -scale * 1.5, scale * 1.5);
    let b = uniform_vec(rng, output, -0.5, 0.5);
    AffineFunction::new(Matrix::new(output, input, w).unwrap(), b).unwrap()
}

pub fn random_net(rng: &mut impl Rng, input: usize, hidden: &[usize], output: usize) -> Plnn {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(output);
    let layers = widths.windows(2).map(|w| random_affine(rng, w[0], w[1])).collect();
    Plnn::new(layers).unwrap()
}

/// Hidden widths for at most `max_layers` affine layers and at most `max_hidden` ReLUs.
pub fn random_hidden(rng: &mut impl Rng, max_layers: usize, max_hidden: usize) -> Vec<usize> {
    let hidden_layers = rng.random_range(0..max_layers);
    let mut left = max_hidden;
    let mut out = Vec::new();
    for i in 0..hidden_layers {
        let reserve = hidden_layers - i - 1;
        if left <= reserve {
            break;
        }
        let w = rng.random_range(1..=(left - reserve).min(6));
        out.push(w);
        left -= w;
    }
    out
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Uniform point of the closed box `center ± radius`.
pub fn sample_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    center.iter().map(|c| c + rng.random_range(-radius..=radius)).collect()
}

/// Solves the square system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (v, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *v -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Halfspaces `⟨a,x⟩ + b ≤ 0` of a closed bounded polytope.
pub type Halfspace = (Vec<f64>, f64);

/// Vertices of a bounded polytope by brute force over every `d`-subset of facets.
pub fn vertices(hs: &[Halfspace], d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    if hs.len() < d {
        return out;
    }
    loop {
        let a = idx.iter().map(|&i| hs[i].0.clone()).collect();
        let b = idx.iter().map(|&i| -hs[i].1).collect();
        if let Some(x) = solve(a, b) {
            let inside = hs.iter().all(|(n, o)| {
                let scale = n.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
                n.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + o <= 1e-9 * scale
            });
            if inside {
                out.push(x);
            }
        }
        if !next_combination(&mut idx, hs.len()) {
            return out;
        }
    }
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let d = idx.len();
    for i in (0..d).rev() {
        if idx[i] < n - d + i {
            idx[i] += 1;
            for j in i + 1..d {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Verdict of the exhaustive activation-pattern search over an ℓ∞ ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternVerdict {
    /// `max` over the ball of `max_{c≠t} (ν_c − ν_t)`; positive means not robust.
    pub margin: f64,
    pub feasible_patterns: usize,
    pub argmax_point: Vec<f64>,
}

/// Enumerates all `2^h` ReLU on/off patterns, keeps those whose closed region meets
/// the ball, and maximises every wrong-class logit gap over each region's vertices.
///
/// The network is continuous, so the maximum over the closures equals the maximum
/// over the ball; no LP solver is involved.
pub fn pattern_oracle(net: &Plnn, center: &[f64], eps: f64, target: usize) -> PatternVerdict {
    let d = net.input_dim();
    let layers = net.layers();
    let hidden: Vec<usize> = layers[..layers.len() - 1].iter().map(|l| l.output_dim()).collect();
    let h: usize = hidden.iter().sum();
    let mut ball: Vec<Halfspace> = Vec::new();
    for i in 0..d {
        let mut up = vec![0.0; d];
        up[i] = 1.0;
        ball.push((up, -(center[i] + eps)));
        let mut down = vec![0.0; d];
        down[i] = -1.0;
        ball.push((down, center[i] - eps));
    }
    let mut best = PatternVerdict { margin: f64::NEG_INFINITY, feasible_patterns: 0, argmax_point: center.to_vec() };
    for pattern in 0u64..(1u64 << h) {
        let mut hs = ball.clone();
        // current map x ↦ m x + c, rows as vectors
        let mut m: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut r = vec![0.0; d];
                r[i] = 1.0;
                r
            })
            .collect();
        let mut c = vec![0.0; d];
        let mut bit = 0;
        let mut logits = None;
        for (li, layer) in layers.iter().enumerate() {
            let w = layer.weight();
            let mut nm = Vec::with_capacity(layer.output_dim());
            let mut nc = Vec::with_capacity(layer.output_dim());
            for r in 0..layer.output_dim() {
                let row = w.row(r);
                let lin: Vec<f64> = (0..d).map(|j| row.iter().zip(&m).map(|(a, mr)| a * mr[j]).sum()).collect();
                let off = row.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + layer.bias()[r];
                nm.push(lin);
                nc.push(off);
            }
            if li + 1 == layers.len() {
                logits = Some((nm, nc));
                break;
            }
            for r in 0..nm.len() {
                let on = pattern >> bit & 1 == 1;
                bit += 1;
                if on {
                    hs.push((nm[r].iter().map(|v| -v).collect(), -nc[r]));
                } else {
                    hs.push((nm[r].clone(), nc[r]));
                    nm[r].iter_mut().for_each(|v| *v = 0.0);
                    nc[r] = 0.0;
                }
            }
            m = nm;
            c = nc;
        }
        let verts = vertices(&hs, d);
        if verts.is_empty() {
            continue;
        }
        best.feasible_patterns += 1;
        let (lm, lc) = logits.expect("output layer");
        let value = |k: usize, x: &[f64]| lm[k].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + lc[k];
        for v in &verts {
            let t = value(target, v);
            for k in (0..lm.len()).filter(|k| *k != target) {
                let g = value(k, v) - t;
                if g > best.margin {
                    best.margin = g;
                    best.argmax_point = v.clone();
                }
            }
        }
    }
    best
}
