//! Principal component analysis with encode/decode as affine maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::{dot, norm, AffineFunction, Matrix, Norm};
use crate::nn::LabeledDataset;

/// Gap under which neighbouring eigenvalues count as tied.
pub const TIE_GAP: f64 = 1e-9;
const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;
const ROWS_PER_CHUNK: usize = 1000;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("cannot keep {k} components of {n}-dimensional data")]
    TooManyComponents { k: usize, n: usize },
    #[error("need at least {k} samples, got {got}")]
    TooFewSamples { k: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("pca json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pca file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal components, highest variance first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Indices `i` with `λ_i − λ_{i+1} < TIE_GAP`: directions there are not unique.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ties: Vec<usize>,
}

/// Sample covariance `(Σ x xᵀ − N μ μᵀ) / (N − 1)`, skipping zero entries.
fn covariance(data: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let count = data.len() / n;
    let partial = |rows: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut sum = vec![0.0; n];
        let mut moment = vec![0.0; n * n];
        let mut nz: Vec<(usize, f64)> = Vec::with_capacity(n);
        for x in rows.chunks_exact(n) {
            nz.clear();
            nz.extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)));
            for (a, (i, xi)) in nz.iter().enumerate() {
                sum[*i] += xi;
                let row = &mut moment[i * n..(i + 1) * n];
                for (j, xj) in &nz[a..] {
                    row[*j] += xi * xj;
                }
            }
        }
        (sum, moment)
    };
    let parts: Vec<(Vec<f64>, Vec<f64>)> = data.par_chunks(ROWS_PER_CHUNK * n).map(partial).collect();
    let mut sum = vec![0.0; n];
    let mut moment = vec![0.0; n * n];
    for (s, m) in parts {
        sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        moment.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let denom = (count.max(2) - 1) as f64;
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (moment[i * n + j] - count as f64 * mean[i] * mean[j]) / denom;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    (mean, cov)
}

/// Cyclic Jacobi; returns eigenvalues and eigenvectors as rows, unsorted.
fn jacobi(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), PcaError> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_TOL * frob.max(1.0);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };
    let mut converged = off(&a) < tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(PcaError::NoConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    a[p * n + k] = c * akp - s * akq;
                    a[q * n + k] = s * akp + c * akq;
                }
                for k in 0..n {
                    a[k * n + p] = a[p * n + k];
                    a[k * n + q] = a[q * n + k];
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vp = v[p * n + k];
                    let vq = v[q * n + k];
                    v[p * n + k] = c * vp - s * vq;
                    v[q * n + k] = s * vp + c * vq;
                }
            }
        }
        converged = off(&a) < tol;
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = v.chunks_exact(n).map(<[f64]>::to_vec).collect();
    Ok((values, vectors))
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl PcaModel {
    pub fn fit(data: &LabeledDataset, k: usize) -> Result<PcaModel, PcaError> {
        let flat: Vec<f64> = data.inputs().flatten().copied().collect();
        PcaModel::fit_flat(&flat, data.dim(), k)
    }

    pub fn fit_rows(rows: &[Vec<f64>], k: usize) -> Result<PcaModel, PcaError> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(PcaError::Dimension { expected: n, got: bad.len() });
        }
        PcaModel::fit_flat(&rows.concat(), n, k)
    }

    /// Fits on `data`, a flat block of rows of length `n`, keeping `k` components.
    pub fn fit_flat(data: &[f64], n: usize, k: usize) -> Result<PcaModel, PcaError> {
        if k == 0 || k > n {
            return Err(PcaError::TooManyComponents { k, n });
        }
        let count = data.len() / n;
        if count < k.max(1) {
            return Err(PcaError::TooFewSamples { k, got: count });
        }
        let (mean, cov) = covariance(data, n);
        let (values, vectors) = jacobi(cov, n)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
        let eigenvalues: Vec<f64> = order[..k].iter().map(|i| values[*i]).collect();
        let components: Vec<Vec<f64>> = order[..k]
            .iter()
            .map(|i| {
                let mut v = vectors[*i].clone();
                fix_sign(&mut v);
                v
            })
            .collect();
        let ties = (0..n - 1).filter(|i| values[order[*i]] - values[order[i + 1]] < TIE_GAP).filter(|i| *i < k).collect();
        Ok(PcaModel { mean, components, eigenvalues, ties })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn stored(&self) -> usize {
        self.components.len()
    }

    /// Number of kept components whose variance is negligible against the first.
    pub fn zero_variance_components(&self) -> usize {
        let scale = self.eigenvalues.first().map_or(0.0, |v| v.abs()).max(1e-300);
        self.eigenvalues.iter().filter(|v| v.abs() <= 1e-12 * scale.max(1.0)).count()
    }

    fn check_k(&self, k: usize) -> Result<(), PcaError> {
        if k == 0 || k > self.stored() {
            Err(PcaError::TooManyComponents { k, n: self.stored() })
        } else {
            Ok(())
        }
    }

    /// The matrix with `p_1 … p_k` as rows.
    pub fn projection(&self, k: usize) -> Result<Matrix, PcaError> {
        self.check_k(k)?;
        Ok(Matrix::from_rows(&self.components[..k]).expect("equal-length finite components"))
    }

    /// `ρ_k(x) = P (x − μ)`.
    pub fn encoder(&self, k: usize) -> Result<AffineFunction, PcaError> {
        let p = self.projection(k)?;
        let shift = p.matvec(&self.mean).expect("mean has model dimension");
        Ok(AffineFunction::new(p, shift.iter().map(|v| -v).collect()).expect("shapes agree"))
    }

    /// `θ_k(r) = μ + Pᵀ r`.
    pub fn decoder(&self, k: usize) -> Result<AffineFunction, PcaError> {
        let pt = self.projection(k)?.transpose();
        Ok(AffineFunction::new(pt, self.mean.clone()).expect("shapes agree"))
    }

    pub fn encode(&self, x: &[f64], k: usize) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.dim() {
            return Err(PcaError::Dimension { expected: self.dim(), got: x.len() });
        }
        self.check_k(k)?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components[..k].iter().map(|p| dot(p, &centered)).collect())
    }

    pub fn decode(&self, r: &[f64]) -> Result<Vec<f64>, PcaError> {
        self.check_k(r.len())?;
        let mut x = self.mean.clone();
        for (ri, p) in r.iter().zip(&self.components) {
            for (xj, pj) in x.iter_mut().zip(p) {
                *xj += ri * pj;
            }
        }
        Ok(x)
    }

    /// `max_{i ≤ k} ‖p_i‖₁`: an ε-ball in input space maps into a ball of radius ε times this.
    pub fn neighborhood_bound(&self, k: usize) -> Result<f64, PcaError> {
        self.check_k(k)?;
        Ok(self.components[..k].iter().map(|p| norm(p, Norm::One)).fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<PcaModel, PcaError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Sum over `data` of `‖x − μ − FᵀF(x − μ)‖₂²` for an orthonormal frame `F` given as rows.
pub fn reconstruction_error(mean: &[f64], frame: &[Vec<f64>], data: &LabeledDataset) -> f64 {
    data.inputs()
        .map(|x| {
            let c: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
            let mut r = c.clone();
            for f in frame {
                let w = dot(f, &c);
                r.iter_mut().zip(f).for_each(|(ri, fi)| *ri -= w * fi);
            }
            dot(&r, &r)
        })
        .sum()
}

/// Gram–Schmidt orthonormalization of `k` standard normal vectors in `R^n`.
pub fn random_frame(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(k);
    while frame.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for f in &frame {
            let d = dot(f, &v);
            v.iter_mut().zip(f).for_each(|(a, b)| *a -= d * b);
        }
        let l = norm(&v, Norm::Two);
        if l > 1e-8 {
            frame.push(v.into_iter().map(|a| a / l).collect());
        }
    }
    frame
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub pca_error: f64,
    /// Smallest `baseline − pca` over all trials.
    pub worst_margin: f64,
    pub violations: usize,
}

/// Compares the PCA reconstruction error against `trials` random orthonormal `k`-frames.
pub fn reconstruction_optimality_check(
    m: &PcaModel,
    data: &LabeledDataset,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport, PcaError> {
    m.check_k(k)?;
    let pca_error = reconstruction_error(&m.mean, &m.components[..k], data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let frame = random_frame(m.dim(), k, &mut rng);
        let margin = reconstruction_error(&m.mean, &frame, data) - pca_error;
        if margin < -1e-8 {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok(OptimalityReport { pca_error, worst_margin: worst, violations })
}
