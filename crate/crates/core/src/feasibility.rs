//! Linear-programming oracle over polytopes.
//!
//! Every LP here has the shape `max cᵀz s.t. A z ≤ d` with `z` free and far
//! more rows than columns. The solver runs a dense two-phase simplex on the
//! dual `min dᵀy s.t. Aᵀy = c, y ≥ 0`, whose tableau has one row per primal
//! variable. The primal optimizer is read back from the simplex multipliers.

use std::fmt::Write as _;

use thiserror::Error;

use crate::affine::{dot, norm, AffineFunction, Constraint, Norm, Polytope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    pub primal_tol: f64,
    pub reduced_cost_tol: f64,
    pub strict_margin: f64,
    /// Optimal slacks at or below this are treated as exact zeros (empty interior).
    pub degenerate_floor: f64,
    pub max_iterations: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            primal_tol: 1e-7,
            reduced_cost_tol: 1e-9,
            strict_margin: 1e-9,
            degenerate_floor: 1e-12,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP oracle is indeterminate: {0}")]
    Indeterminate(String),
    #[error("polytope is infeasible")]
    Infeasible,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
    /// The slack reached its cap: the open polytope contains a unit ball.
    UnboundedSlack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpVerdict {
    pub status: LpStatus,
    pub witness: Option<Vec<f64>>,
    /// Optimal slack; `None` when the polytope has no strict constraints.
    pub slack: Option<f64>,
}

impl LpVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status != LpStatus::Infeasible
    }

    fn infeasible() -> Self {
        LpVerdict { status: LpStatus::Infeasible, witness: None, slack: None }
    }
}

/// A row `⟨a, z⟩ ≤ d`.
#[derive(Debug, Clone)]
struct Row {
    a: Vec<f64>,
    d: f64,
}

#[derive(Debug)]
enum LpOutcome {
    Optimal {
        z: Vec<f64>,
        value: f64,
    },
    /// The dual is unbounded.
    PrimalInfeasible,
    /// The dual has no feasible point; the primal is unbounded or infeasible.
    DualInfeasible,
}

struct Tableau {
    rows: usize,
    cols: usize,
    real_cols: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.cols + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.t[pr * cols + pc];
        for v in &mut self.t[pr * cols..(pr + 1) * cols] {
            *v *= inv;
        }
        self.rhs[pr] *= inv;
        let pivot_row: Vec<f64> = self.t[pr * cols..(pr + 1) * cols].to_vec();
        let pivot_rhs = self.rhs[pr];
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * cols + pc];
            if f == 0.0 {
                continue;
            }
            for (v, p) in self.t[r * cols..(r + 1) * cols].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.t[r * cols + pc] = 0.0;
            self.rhs[r] -= f * pivot_rhs;
        }
        let f = self.reduced[pc];
        if f != 0.0 {
            for (v, p) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.reduced[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn price(&mut self, cost: &[f64]) {
        self.reduced.copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (v, a) in self.reduced.iter_mut().zip(&self.t[r * self.cols..(r + 1) * self.cols]) {
                *v -= cb * a;
            }
        }
    }

    /// Runs simplex iterations; returns `false` when the objective is unbounded below.
    fn optimize(&mut self, enter_limit: usize, cfg: &LpConfig, budget: &mut usize) -> Result<bool, LpError> {
        let bland_after = 5 * (self.rows + self.cols);
        let mut pivots = 0usize;
        loop {
            let bland = pivots >= bland_after;
            let mut enter = None;
            let mut best = -cfg.reduced_cost_tol;
            for c in 0..enter_limit {
                let r = self.reduced[c];
                if r < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(pc) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            let col_scale = (0..self.rows).fold(0.0f64, |m, r| m.max(self.at(r, pc).abs()));
            let piv_tol = 1e-11 * col_scale.max(1.0);
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a <= piv_tol {
                    continue;
                }
                let ratio = self.rhs[r].max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * lratio.abs().max(1.0);
                        let better = if tie {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > self.at(lr, pc)
                            }
                        } else {
                            ratio < lratio
                        };
                        if better {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((pr, _)) = leave else {
                return Ok(false);
            };
            if *budget == 0 {
                return Err(LpError::Indeterminate("simplex iteration cap reached".into()));
            }
            *budget -= 1;
            self.pivot(pr, pc);
            pivots += 1;
        }
    }
}

fn maximize(c: &[f64], rows: &[Row], cfg: &LpConfig) -> Result<LpOutcome, LpError> {
    let p = c.len();
    let m = rows.len();
    let cols = m + p;
    let sigma: Vec<f64> = c.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut t = vec![0.0; p * cols];
    for (j, row) in rows.iter().enumerate() {
        for i in 0..p {
            t[i * cols + j] = sigma[i] * row.a[i];
        }
    }
    for i in 0..p {
        t[i * cols + m + i] = 1.0;
    }
    let rhs: Vec<f64> = c.iter().zip(&sigma).map(|(v, s)| v * s).collect();
    let mut tab = Tableau { rows: p, cols, real_cols: m, t, rhs, basis: (m..m + p).collect(), reduced: vec![0.0; cols] };
    let mut budget = cfg.max_iterations;

    let mut phase1 = vec![0.0; cols];
    phase1[m..].iter_mut().for_each(|v| *v = 1.0);
    tab.price(&phase1);
    tab.optimize(m, cfg, &mut budget)?;
    let infeas: f64 = (0..p).filter(|r| tab.basis[*r] >= m).map(|r| tab.rhs[r].max(0.0)).sum();
    let c_scale = norm(c, Norm::Infinity).max(1.0);
    if infeas > cfg.primal_tol * c_scale {
        return Ok(LpOutcome::DualInfeasible);
    }
    for r in 0..p {
        if tab.basis[r] < m {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            let a = tab.at(r, j).abs();
            if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                best = Some((j, a));
            }
        }
        if let Some((j, _)) = best {
            tab.pivot(r, j);
        }
    }

    let mut phase2 = vec![0.0; cols];
    for (j, row) in rows.iter().enumerate() {
        phase2[j] = row.d;
    }
    tab.price(&phase2);
    if !tab.optimize(tab.real_cols, cfg, &mut budget)? {
        return Ok(LpOutcome::PrimalInfeasible);
    }
    let z: Vec<f64> = (0..p).map(|i| -sigma[i] * tab.reduced[m + i]).collect();
    let value = dot(c, &z);
    Ok(LpOutcome::Optimal { z, value })
}

fn normalized(normal: &[f64], offset: f64) -> Option<(Vec<f64>, f64)> {
    let n = norm(normal, Norm::Two);
    if n == 0.0 {
        None
    } else {
        Some((normal.iter().map(|v| v / n).collect(), offset / n))
    }
}

/// Splits constraints into normalized rows and constant ones; returns `None` if a constant
/// constraint is violated.
fn normalized_constraints(s: &Polytope) -> Option<Vec<(Vec<f64>, f64, bool)>> {
    let mut out = Vec::with_capacity(s.len());
    for c in s.constraints() {
        match normalized(&c.normal, c.offset) {
            Some((a, b)) => out.push((a, b, c.strict)),
            None => {
                let ok = if c.strict { c.offset < 0.0 } else { c.offset <= 0.0 };
                if !ok {
                    return None;
                }
            }
        }
    }
    Some(out)
}

pub fn check_feasible(s: &Polytope) -> Result<LpVerdict, LpError> {
    check_feasible_with(s, &LpConfig::default())
}

/// Decides nonemptiness of `s` by maximizing a common slack on its strict constraints.
pub fn check_feasible_with(s: &Polytope, cfg: &LpConfig) -> Result<LpVerdict, LpError> {
    let n = s.dim();
    let Some(cons) = normalized_constraints(s) else {
        return Ok(LpVerdict::infeasible());
    };
    let any_strict = cons.iter().any(|c| c.2);
    if cons.is_empty() {
        return Ok(LpVerdict {
            status: if s.constraints().iter().any(|c| c.strict) { LpStatus::UnboundedSlack } else { LpStatus::Feasible },
            witness: Some(vec![0.0; n]),
            slack: s.constraints().iter().any(|c| c.strict).then_some(1.0),
        });
    }
    let mut rows: Vec<Row> = cons
        .iter()
        .map(|(a, b, strict)| {
            let mut a = a.clone();
            a.push(if *strict { 1.0 } else { 0.0 });
            Row { a, d: -b }
        })
        .collect();
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    rows.push(Row { a: cap, d: 1.0 });
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;

    let (z, value) = match maximize(&c, &rows, cfg)? {
        LpOutcome::Optimal { z, value } => (z, value),
        LpOutcome::PrimalInfeasible => return Ok(LpVerdict::infeasible()),
        LpOutcome::DualInfeasible => {
            return Err(LpError::Indeterminate("slack LP dual lost feasibility".into()));
        }
    };
    let x = z[..n].to_vec();
    let s_opt = value.min(1.0);

    if any_strict {
        if s_opt <= cfg.degenerate_floor {
            return Ok(LpVerdict::infeasible());
        }
        if s_opt <= cfg.strict_margin {
            return Err(LpError::Indeterminate(format!("near-degenerate optimal slack {s_opt:e}")));
        }
    }
    for (a, b, strict) in &cons {
        let v = dot(a, &x) + b;
        let ok = if *strict { v < 0.0 && v <= cfg.primal_tol - s_opt } else { v <= cfg.primal_tol };
        if !ok {
            return Err(LpError::Indeterminate(format!("witness fails re-check (value {v:e}, strict {strict})")));
        }
    }
    let status = if any_strict && s_opt >= 1.0 - cfg.primal_tol { LpStatus::UnboundedSlack } else { LpStatus::Feasible };
    Ok(LpVerdict { status, witness: Some(x), slack: any_strict.then_some(s_opt) })
}

/// Smallest ℓ∞ distance from `x0` to `s`, with strict constraints tightened by the strict margin.
pub fn closest_point_linf(s: &Polytope, x0: &[f64]) -> Result<(Vec<f64>, f64), LpError> {
    let id = AffineFunction::identity(s.dim());
    closest_point_linf_mapped(s, &id, x0)
}

/// Minimizes `‖map(w) − x0‖∞` over `w ∈ s`; returns the optimal `w` and the distance.
pub fn closest_point_linf_mapped(s: &Polytope, map: &AffineFunction, x0: &[f64]) -> Result<(Vec<f64>, f64), LpError> {
    closest_point_linf_mapped_with(s, map, x0, &LpConfig::default())
}

pub fn closest_point_linf_mapped_with(
    s: &Polytope,
    map: &AffineFunction,
    x0: &[f64],
    cfg: &LpConfig,
) -> Result<(Vec<f64>, f64), LpError> {
    let k = s.dim();
    if map.input_dim() != k {
        return Err(LpError::Dimension { expected: k, got: map.input_dim() });
    }
    if map.output_dim() != x0.len() {
        return Err(LpError::Dimension { expected: map.output_dim(), got: x0.len() });
    }
    let Some(cons) = normalized_constraints(s) else {
        return Err(LpError::Infeasible);
    };
    let mut rows = Vec::with_capacity(cons.len() + 2 * x0.len());
    for (a, b, strict) in &cons {
        let mut a = a.clone();
        a.push(0.0);
        let margin = if *strict { cfg.strict_margin } else { 0.0 };
        rows.push(Row { a, d: -b - margin });
    }
    let w = map.weight();
    for (j, (x, b)) in x0.iter().zip(map.bias()).enumerate() {
        let row = w.row(j);
        let shift = x - b;
        let rn = (norm(row, Norm::Two).powi(2) + 1.0).sqrt();
        let mut up: Vec<f64> = row.iter().map(|v| v / rn).collect();
        up.push(-1.0 / rn);
        rows.push(Row { a: up, d: shift / rn });
        let mut down: Vec<f64> = row.iter().map(|v| -v / rn).collect();
        down.push(-1.0 / rn);
        rows.push(Row { a: down, d: -shift / rn });
    }
    let mut c = vec![0.0; k + 1];
    c[k] = -1.0;
    match maximize(&c, &rows, cfg)? {
        LpOutcome::Optimal { z, .. } => {
            let point = z[..k].to_vec();
            for (a, b, _) in &cons {
                if dot(a, &point) + b > cfg.primal_tol {
                    return Err(LpError::Indeterminate("closest point fails constraint re-check".into()));
                }
            }
            let image = map.eval(&point).expect("checked dimensions");
            let dist = image.iter().zip(x0).fold(0.0f64, |m, (y, x)| m.max((y - x).abs()));
            Ok((point, dist))
        }
        LpOutcome::PrimalInfeasible => Err(LpError::Infeasible),
        LpOutcome::DualInfeasible => Err(LpError::Indeterminate("distance LP dual lost feasibility".into())),
    }
}

/// Drops constraints implied by the others. The polytope must be feasible.
pub fn remove_redundant(s: &Polytope) -> Result<Polytope, LpError> {
    let cfg = LpConfig::default();
    let n = s.dim();
    let all: Vec<&Constraint> = s.constraints().iter().collect();
    let mut keep = vec![true; all.len()];
    for i in 0..all.len() {
        let Some((a, b)) = normalized(&all[i].normal, all[i].offset) else {
            let c = all[i];
            let holds = if c.strict { c.offset < 0.0 } else { c.offset <= 0.0 };
            keep[i] = !holds;
            continue;
        };
        let rows: Vec<Row> = (0..all.len())
            .filter(|j| *j != i && keep[*j])
            .filter_map(|j| normalized(&all[j].normal, all[j].offset).map(|(a, b)| Row { a, d: -b }))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let redundant = match maximize(&a, &rows, &cfg)? {
            LpOutcome::Optimal { value, .. } => value + b < -cfg.primal_tol || (!all[i].strict && value + b <= 0.0),
            LpOutcome::PrimalInfeasible => false,
            LpOutcome::DualInfeasible => false,
        };
        if redundant {
            keep[i] = false;
        }
    }
    Polytope::new(n, all.iter().zip(&keep).filter(|(_, k)| **k).map(|(c, _)| (*c).clone()).collect())
        .map_err(|e| LpError::Indeterminate(e.to_string()))
}

/// `max ⟨c, x⟩` over the closure of `s`; `None` when unbounded.
pub fn maximize_linear(s: &Polytope, c: &[f64]) -> Result<Option<f64>, LpError> {
    if c.len() != s.dim() {
        return Err(LpError::Dimension { expected: s.dim(), got: c.len() });
    }
    let Some(cons) = normalized_constraints(s) else {
        return Err(LpError::Infeasible);
    };
    let rows: Vec<Row> = cons.into_iter().map(|(a, b, _)| Row { a, d: -b }).collect();
    match maximize(c, &rows, &LpConfig::default())? {
        LpOutcome::Optimal { value, .. } => Ok(Some(value)),
        LpOutcome::PrimalInfeasible => Err(LpError::Infeasible),
        LpOutcome::DualInfeasible => Ok(None),
    }
}

/// Per-coordinate `(min, max)` of a bounded polytope.
pub fn bounding_box(s: &Polytope) -> Result<Vec<(f64, f64)>, LpError> {
    let n = s.dim();
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let hi = maximize_linear(s, &e)?;
            e[i] = -1.0;
            let lo = maximize_linear(s, &e)?;
            match (lo, hi) {
                (Some(lo), Some(hi)) => Ok((-lo, hi)),
                _ => Err(LpError::Indeterminate(format!("coordinate {i} is unbounded"))),
            }
        })
        .collect()
}

/// One constraint per line: `coeffs... | offset | < or <=`.
pub fn dump_constraints(s: &Polytope) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# dim {} constraints {}", s.dim(), s.len());
    for c in s.constraints() {
        let coeffs: Vec<String> = c.normal.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{} | {:e} | {}", coeffs.join(" "), c.offset, if c.strict { "<" } else { "<=" });
    }
    out
}
