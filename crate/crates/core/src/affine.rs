//! Dense linear algebra, affine functions in canonical `(W, b)` form, oriented
//! linear predicates and polytopes.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; matrices are dense and row-major.
//! Everything is 64-bit floating point.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Significant decimal digits kept by canonical keys.
pub const KEY_DIGITS: usize = 12;

/// Relative size under which a substituted normal is treated as the zero vector.
const ZERO_NORMAL_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("shape mismatch: {op} got {left:?} and {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("entry count {entries} does not match {rows}x{cols}")]
    EntryCount { rows: usize, cols: usize, entries: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty vector or matrix")]
    Empty,
    #[error("linear predicate with zero normal")]
    ZeroNormal,
}

fn check_finite(values: &[f64], what: &'static str) -> Result<(), AffineError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AffineError::NonFinite(what))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    One,
    Two,
    Infinity,
}

pub fn norm(v: &[f64], kind: Norm) -> f64 {
    match kind {
        Norm::One => v.iter().map(|x| x.abs()).sum(),
        Norm::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AffineError> {
        if rows == 0 || cols == 0 {
            return Err(AffineError::Empty);
        }
        if rows * cols != data.len() {
            return Err(AffineError::EntryCount { rows, cols, entries: data.len() });
        }
        check_finite(&data, "matrix")?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AffineError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AffineError::EntryCount { rows: rows.len(), cols, entries: rows.iter().map(Vec::len).sum() });
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, AffineError> {
        if x.len() != self.cols {
            return Err(AffineError::Shape { op: "matvec", left: self.shape(), right: (x.len(), 1) });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `xᵀ M`, i.e. a row vector times this matrix.
    pub fn vecmat(&self, x: &[f64]) -> Result<Vec<f64>, AffineError> {
        if x.len() != self.rows {
            return Err(AffineError::Shape { op: "vecmat", left: (1, x.len()), right: self.shape() });
        }
        let mut out = vec![0.0; self.cols];
        for (r, xr) in x.iter().enumerate() {
            if *xr == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(r)) {
                *o += xr * m;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, AffineError> {
        if self.cols != other.rows {
            return Err(AffineError::Shape { op: "matmul", left: self.shape(), right: other.shape() });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, AffineError> {
        if self.shape() != other.shape() {
            return Err(AffineError::Shape { op, left: self.shape(), right: other.shape() });
        }
        Ok(Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect() })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, AffineError> {
        self.zip_with(other, "matrix add", |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| s * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        norm(&self.data, Norm::Infinity)
    }
}

/// An affine map `x ↦ W x + b` from `R^n` to `R^m`, stored canonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFunction {
    weight: Matrix,
    bias: Vec<f64>,
}

impl AffineFunction {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, AffineError> {
        if bias.len() != weight.rows() {
            return Err(AffineError::Shape { op: "affine bias", left: weight.shape(), right: (bias.len(), 1) });
        }
        check_finite(&bias, "bias")?;
        Ok(AffineFunction { weight, bias })
    }

    pub fn identity(n: usize) -> Self {
        AffineFunction { weight: Matrix::identity(n), bias: vec![0.0; n] }
    }

    pub fn zero(input_dim: usize, output_dim: usize) -> Self {
        AffineFunction { weight: Matrix::zeros(output_dim, input_dim), bias: vec![0.0; output_dim] }
    }

    /// `x ↦ x + offset`.
    pub fn translation(offset: Vec<f64>) -> Result<Self, AffineError> {
        AffineFunction::new(Matrix::identity(offset.len()), offset)
    }

    #[inline]
    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    #[inline]
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>) {
        (self.weight, self.bias)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, AffineError> {
        let mut y = self.weight.matvec(x)?;
        for (y, b) in y.iter_mut().zip(&self.bias) {
            *y += b;
        }
        Ok(y)
    }

    /// Pointwise sum of two affine functions of identical type.
    pub fn add(&self, other: &AffineFunction) -> Result<AffineFunction, AffineError> {
        let weight = self.weight.add(&other.weight)?;
        let bias = self.bias.iter().zip(&other.bias).map(|(a, b)| a + b).collect();
        Ok(AffineFunction { weight, bias })
    }

    pub fn scale(&self, s: f64) -> Result<AffineFunction, AffineError> {
        if !s.is_finite() {
            return Err(AffineError::NonFinite("scalar"));
        }
        Ok(AffineFunction { weight: self.weight.scale(s), bias: self.bias.iter().map(|b| s * b).collect() })
    }

    /// `self ∘ inner`, i.e. `x ↦ W₂ (W₁ x + b₁) + b₂`.
    pub fn compose(&self, inner: &AffineFunction) -> Result<AffineFunction, AffineError> {
        if self.input_dim() != inner.output_dim() {
            return Err(AffineError::Shape { op: "compose", left: self.weight.shape(), right: inner.weight.shape() });
        }
        let weight = self.weight.matmul(&inner.weight)?;
        let mut bias = self.weight.matvec(&inner.bias)?;
        for (b, b2) in bias.iter_mut().zip(&self.bias) {
            *b += b2;
        }
        Ok(AffineFunction { weight, bias })
    }

    /// Row `i` as a scalar affine form `(wᵢ, bᵢ)`.
    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (self.weight.row(i), self.bias[i])
    }

    /// Keeps only the rows whose mask entry is true; the others become zero.
    pub fn mask_rows(&self, mask: &[bool]) -> AffineFunction {
        let mut out = self.clone();
        for (i, keep) in mask.iter().enumerate() {
            if !keep {
                out.weight.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                out.bias[i] = 0.0;
            }
        }
        out
    }

    /// Rounded coefficients used for terminal deduplication.
    pub fn canonical_key(&self) -> Vec<KeyDigit> {
        self.weight.as_slice().iter().chain(&self.bias).map(|v| round_key(*v)).collect()
    }
}

/// A coefficient rounded to [`KEY_DIGITS`] significant digits: `(mantissa, exponent)`.
pub type KeyDigit = (i64, i32);

pub fn round_key(v: f64) -> KeyDigit {
    if v == 0.0 {
        return (0, 0);
    }
    let s = format!("{:.*e}", KEY_DIGITS - 1, v);
    let (mant, exp) = s.split_once('e').expect("scientific format");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit() || *c == '-').collect();
    (digits.parse().expect("mantissa digits"), exp.parse().expect("exponent digits"))
}

/// Oriented affine inequality with semantics `⟨normal, x⟩ + offset > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredicate {
    normal: Vec<f64>,
    offset: f64,
}

/// Result of rewriting a predicate through an affine map.
#[derive(Debug, Clone, PartialEq)]
pub enum Substituted {
    Predicate(LinearPredicate),
    Constant(bool),
}

impl LinearPredicate {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self, AffineError> {
        if normal.is_empty() {
            return Err(AffineError::Empty);
        }
        check_finite(&normal, "predicate normal")?;
        check_finite(&[offset], "predicate offset")?;
        if normal.iter().all(|v| *v == 0.0) {
            return Err(AffineError::ZeroNormal);
        }
        Ok(LinearPredicate { normal, offset })
    }

    /// `x_i > 0` in `R^dim`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut normal = vec![0.0; dim];
        normal[i] = 1.0;
        LinearPredicate { normal, offset: 0.0 }
    }

    #[inline]
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    #[inline]
    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Value of the affine form at `x`.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    /// Boundary points take the FALSE branch.
    #[inline]
    pub fn holds(&self, x: &[f64]) -> bool {
        self.value(x) > 0.0
    }

    pub fn negated(&self) -> LinearPredicate {
        LinearPredicate { normal: self.normal.iter().map(|v| -v).collect(), offset: -self.offset }
    }

    /// Rewrites a predicate over `y` into one over `x` where `y = a(x)`.
    pub fn substitute(&self, a: &AffineFunction) -> Result<Substituted, AffineError> {
        if self.dim() != a.output_dim() {
            return Err(AffineError::Shape { op: "predicate substitute", left: (1, self.dim()), right: a.weight.shape() });
        }
        let normal = a.weight.vecmat(&self.normal)?;
        let offset = dot(&self.normal, &a.bias) + self.offset;
        let scale: f64 = self.normal.iter().enumerate().map(|(i, w)| w.abs() * norm(a.weight.row(i), Norm::Infinity)).sum();
        if norm(&normal, Norm::Infinity) <= ZERO_NORMAL_REL * scale {
            return Ok(Substituted::Constant(offset > 0.0));
        }
        Ok(Substituted::Predicate(LinearPredicate { normal, offset }))
    }

    /// Key invariant under positive rescaling; orientation is part of the key.
    pub fn canonical_key(&self) -> Vec<KeyDigit> {
        let s = 1.0 / norm(&self.normal, Norm::Infinity);
        self.normal.iter().chain(std::iter::once(&self.offset)).map(|v| round_key(v * s)).collect()
    }
}

impl fmt::Display for LinearPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_affine_form(f, &self.normal, self.offset)?;
        write!(f, " > 0")
    }
}

pub(crate) fn write_affine_form(f: &mut impl fmt::Write, normal: &[f64], offset: f64) -> fmt::Result {
    let mut first = true;
    for (i, w) in normal.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let sign = if *w < 0.0 { "-" } else { "+" };
        if first {
            if *w < 0.0 {
                write!(f, "-")?;
            }
        } else {
            write!(f, " {sign} ")?;
        }
        write!(f, "{:.4}*x{}", w.abs(), i + 1)?;
        first = false;
    }
    if first {
        write!(f, "{offset:.4}")
    } else if offset != 0.0 {
        let sign = if offset < 0.0 { "-" } else { "+" };
        write!(f, " {sign} {:.4}", offset.abs())
    } else {
        Ok(())
    }
}

/// One polytope facet: `⟨normal, x⟩ + offset ≤ 0`, or `< 0` when strict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub strict: bool,
}

impl Constraint {
    pub fn new(normal: Vec<f64>, offset: f64, strict: bool) -> Self {
        Constraint { normal, offset, strict }
    }

    /// The region where `p` is TRUE, i.e. `-⟨w,x⟩ - b < 0`.
    pub fn from_true_branch(p: &LinearPredicate) -> Self {
        Constraint { normal: p.normal.iter().map(|v| -v).collect(), offset: -p.offset, strict: true }
    }

    /// The region where `p` is FALSE, i.e. `⟨w,x⟩ + b ≤ 0`.
    pub fn from_false_branch(p: &LinearPredicate) -> Self {
        Constraint { normal: p.normal.clone(), offset: p.offset, strict: false }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let v = self.value(x);
        if self.strict {
            v < tol
        } else {
            v <= tol
        }
    }
}

/// Conjunction of constraints; the empty list denotes all of `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    constraints: Vec<Constraint>,
}

impl Polytope {
    pub fn whole_space(dim: usize) -> Self {
        Polytope { dim, constraints: Vec::new() }
    }

    pub fn new(dim: usize, constraints: Vec<Constraint>) -> Result<Self, AffineError> {
        for c in &constraints {
            if c.normal.len() != dim {
                return Err(AffineError::Shape { op: "polytope constraint", left: (1, dim), right: (1, c.normal.len()) });
            }
            check_finite(&c.normal, "constraint normal")?;
            check_finite(&[c.offset], "constraint offset")?;
        }
        Ok(Polytope { dim, constraints })
    }

    /// Closed ℓ∞ ball `center + radius·B∞`.
    pub fn linf_ball(center: &[f64], radius: f64) -> Self {
        let n = center.len();
        let mut constraints = Vec::with_capacity(2 * n);
        for (i, c) in center.iter().enumerate() {
            let mut up = vec![0.0; n];
            up[i] = 1.0;
            constraints.push(Constraint::new(up, -(c + radius), false));
            let mut down = vec![0.0; n];
            down[i] = -1.0;
            constraints.push(Constraint::new(down, c - radius, false));
        }
        Polytope { dim: n, constraints }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn push(&mut self, c: Constraint) {
        assert_eq!(c.normal.len(), self.dim, "constraint dimension");
        self.constraints.push(c);
    }

    pub fn with(&self, c: Constraint) -> Polytope {
        let mut p = self.clone();
        p.push(c);
        p
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope, AffineError> {
        if self.dim != other.dim {
            return Err(AffineError::Shape { op: "polytope intersect", left: (1, self.dim), right: (1, other.dim) });
        }
        let mut p = self.clone();
        p.constraints.extend(other.constraints.iter().cloned());
        Ok(p)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| c.satisfied(x, tol))
    }

    /// Pulls the polytope back through `y = a(x)`: `{x | a(x) ∈ self}`.
    pub fn preimage(&self, a: &AffineFunction) -> Result<Polytope, AffineError> {
        if a.output_dim() != self.dim {
            return Err(AffineError::Shape { op: "polytope preimage", left: (1, self.dim), right: a.weight.shape() });
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let normal = a.weight.vecmat(&c.normal)?;
                Ok(Constraint::new(normal, dot(&c.normal, &a.bias) + c.offset, c.strict))
            })
            .collect::<Result<_, AffineError>>()?;
        Ok(Polytope { dim: a.input_dim(), constraints })
    }
}
