//! Robustness verification: the direct method and three PCA-based variants.

mod plot;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::{norm, AffineError, AffineFunction, Constraint, Norm, Polytope};
use crate::feasibility::{check_feasible_with, closest_point_linf_mapped_with, LpConfig};
use crate::nn::{NetError, Plnn};
use crate::pca::{PcaError, PcaModel};
use crate::tads::{
    argmax_tads, compose_with, enumerate_paths, enumerate_paths_checked, plnn_to_tads_with, BuildOptions, BuildStats, Tads,
    TadsError, Terminal,
};

pub use plot::{render_region_plot, PlotOptions, RegionPlot};

/// Slack allowed on the ε-ball when re-checking an adversarial point.
pub const BALL_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Tads(#[from] TadsError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error("invalid query: {0}")]
    Query(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    PcaHeuristic,
    PcaBuiltin,
    PcaTrained,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Mode::Direct),
            "pca_heuristic" => Ok(Mode::PcaHeuristic),
            "pca_builtin" => Ok(Mode::PcaBuiltin),
            "pca_trained" => Ok(Mode::PcaTrained),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Robust,
    NotRobust,
    RobustOnSubspace,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessQuery {
    pub point: Vec<f64>,
    /// ℓ∞ radius in input space.
    pub epsilon: f64,
    pub target_label: Option<usize>,
    pub mode: Mode,
    pub k: Option<usize>,
    /// Radius in PCA coordinates; when set, `epsilon` is derived as `delta / bound`.
    pub delta: Option<f64>,
}

impl RobustnessQuery {
    pub fn direct(point: Vec<f64>, epsilon: f64) -> Self {
        RobustnessQuery { point, epsilon, target_label: None, mode: Mode::Direct, k: None, delta: None }
    }

    pub fn pca(point: Vec<f64>, epsilon: f64, mode: Mode, k: usize) -> Self {
        RobustnessQuery { point, epsilon, target_label: None, mode, k: Some(k), delta: None }
    }
}

/// Coordinates in which adversarial regions are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSpace {
    Input,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRegion {
    pub label: usize,
    pub constraints: Vec<Constraint>,
    /// Interior point; absent when the LP oracle abstained on this path.
    pub witness: Option<Vec<f64>>,
}

impl AdversarialRegion {
    pub fn polytope(&self, dim: usize) -> Polytope {
        Polytope::new(dim, self.constraints.clone()).expect("region constraints share one dimension")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Closest {
    pub point: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TadsSummary {
    pub inner: usize,
    pub terminals: usize,
    pub pruned_paths: usize,
    pub indeterminate_paths: usize,
}

impl TadsSummary {
    pub fn nodes(&self) -> usize {
        self.inner + self.terminals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVerdict {
    pub status: Status,
    pub mode: Mode,
    pub target_label: usize,
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub bound: Option<f64>,
    pub certified_epsilon: Option<f64>,
    /// Verdict for the reduced classifier at radius `delta`, in the PCA modes.
    pub reduced_status: Option<Status>,
    pub region_space: RegionSpace,
    pub regions: Vec<AdversarialRegion>,
    pub closest: Option<Closest>,
    pub tads: TadsSummary,
    pub time_ms: u64,
}

impl RobustnessVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Everything learned from one compiled, restricted classification structure.
pub struct Analysis {
    pub classes: Tads,
    pub wrong: Vec<AdversarialRegion>,
    pub stats: BuildStats,
}

/// Compiles `net` restricted to `region`, composes argmax, and lists the feasible
/// paths that end in a label other than `target`.
pub fn analyze(net: &Plnn, region: &Polytope, target: usize, opts: &BuildOptions) -> Result<Analysis, VerifyError> {
    let mut stats = BuildStats::default();
    let logits = plnn_to_tads_with(net, Some(region), opts, &mut stats)?;
    let classes = compose_with(&logits, &argmax_tads(net.output_dim()), opts, &mut stats)?;
    let wrong_label = |t: &Terminal| matches!(t, Terminal::Class(c) if *c != target);
    let (paths, undecided) = if opts.eager_pruning {
        enumerate_paths_checked(&classes, wrong_label, &opts.lp)
    } else {
        let all: Vec<_> = enumerate_paths(&classes, wrong_label).collect();
        let n = all.len();
        (all, n)
    };
    stats.indeterminate_branches += undecided;
    let wrong = paths
        .into_par_iter()
        .map(|p| AdversarialRegion {
            label: match p.terminal {
                Terminal::Class(c) => c,
                _ => unreachable!("selector keeps class terminals"),
            },
            witness: p.witness.map(|w| interior_witness(&p.region, &opts.lp).unwrap_or(w)),
            constraints: p.region.constraints().to_vec(),
        })
        .collect();
    Ok(Analysis { classes, wrong, stats })
}

/// A point strictly inside every facet of `region`, when its interior is non-empty.
///
/// Path witnesses only keep a margin on strict facets and may sit on a non-strict
/// tie facet, where rounding decides the evaluated label.
fn interior_witness(region: &Polytope, lp: &LpConfig) -> Option<Vec<f64>> {
    let open: Vec<Constraint> = region.constraints().iter().map(|c| Constraint::new(c.normal.clone(), c.offset, true)).collect();
    let open = Polytope::new(region.dim(), open).ok()?;
    check_feasible_with(&open, lp).ok().filter(|v| v.is_feasible())?.witness
}

/// Ways of turning a point of an adversarial region into a candidate input.
struct Lift<'a> {
    /// Map from region coordinates to input space whose distance to `x` is minimized.
    map: &'a AffineFunction,
    /// Extra candidates tried after `map` fails.
    fallback: Option<&'a AffineFunction>,
    x: &'a [f64],
    epsilon: f64,
}

const NUDGES: [f64; 7] = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0];

fn linf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

impl Lift<'_> {
    /// Closest confirmed adversarial input coming from `region`, if any.
    fn find(
        &self,
        region: &AdversarialRegion,
        lp: &LpConfig,
        is_adversarial: &(dyn Fn(&[f64]) -> bool + Sync),
    ) -> Option<Closest> {
        let poly = region.polytope(self.map.input_dim());
        let witness = region.witness.as_deref();
        let accept = |y: Vec<f64>| -> Option<Closest> {
            let d = linf_dist(&y, self.x);
            (d <= self.epsilon + BALL_TOL && is_adversarial(&y)).then_some(Closest { point: y, distance: d })
        };
        if let Ok((w, _)) = closest_point_linf_mapped_with(&poly, self.map, self.x, lp) {
            for lambda in NUDGES {
                let wl: Vec<f64> = match witness {
                    Some(c) => w.iter().zip(c).map(|(a, b)| a + lambda * (b - a)).collect(),
                    None if lambda == 0.0 => w.clone(),
                    None => break,
                };
                if let Some(c) = accept(self.map.eval(&wl).expect("region dimension")) {
                    return Some(c);
                }
            }
            if let Some(dec) = self.fallback {
                if let Some(c) = accept(dec.eval(&w).expect("region dimension")) {
                    return Some(c);
                }
            }
        }
        if let Some(c) = witness {
            if let Some(found) = accept(self.map.eval(c).expect("region dimension")) {
                return Some(found);
            }
            if let Some(dec) = self.fallback {
                return accept(dec.eval(c).expect("region dimension"));
            }
        }
        None
    }

    fn closest(
        &self,
        regions: &[AdversarialRegion],
        lp: &LpConfig,
        is_adversarial: &(dyn Fn(&[f64]) -> bool + Sync),
    ) -> Option<Closest> {
        let found: Vec<Option<Closest>> = regions.par_iter().map(|r| self.find(r, lp, is_adversarial)).collect();
        found.into_iter().flatten().fold(None, |best: Option<Closest>, c| match best {
            Some(b) if b.distance <= c.distance => Some(b),
            _ => Some(c),
        })
    }
}

fn check_query(q: &RobustnessQuery, dim: usize) -> Result<(), VerifyError> {
    if q.point.len() != dim {
        return Err(VerifyError::Query(format!("point has dimension {}, network expects {dim}", q.point.len())));
    }
    if q.delta.is_none() && !(q.epsilon.is_finite() && q.epsilon > 0.0) {
        return Err(VerifyError::Query(format!("epsilon must be positive, got {}", q.epsilon)));
    }
    if let Some(d) = q.delta {
        if !(d.is_finite() && d > 0.0) {
            return Err(VerifyError::Query(format!("delta must be positive, got {d}")));
        }
    }
    Ok(())
}

fn summary(a: &Analysis) -> TadsSummary {
    let (inner, terminals) = a.classes.size();
    TadsSummary { inner, terminals, pruned_paths: a.stats.pruned_branches, indeterminate_paths: a.stats.indeterminate_branches }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Exact ε-robustness of `net` around `q.point`.
pub fn verify_direct(net: &Plnn, q: &RobustnessQuery, opts: &BuildOptions) -> Result<RobustnessVerdict, VerifyError> {
    let start = Instant::now();
    check_query(q, net.input_dim())?;
    let x = &q.point;
    let target = match q.target_label {
        Some(t) => t,
        None => net.classify(x)?,
    };
    let ball = Polytope::linf_ball(x, q.epsilon);
    let a = analyze(net, &ball, target, opts)?;
    let id = AffineFunction::identity(x.len());
    let lift = Lift { map: &id, fallback: None, x, epsilon: q.epsilon };
    let is_adv = |y: &[f64]| net.classify(y).map(|c| c != target).unwrap_or(false);
    let closest = lift.closest(&a.wrong, &opts.lp, &is_adv);
    let status = match (&closest, a.wrong.is_empty()) {
        (Some(_), _) => Status::NotRobust,
        (None, true) => Status::Robust,
        (None, false) => Status::Indeterminate,
    };
    Ok(RobustnessVerdict {
        status,
        mode: Mode::Direct,
        target_label: target,
        epsilon: q.epsilon,
        delta: None,
        bound: None,
        certified_epsilon: (status == Status::Robust).then_some(q.epsilon),
        reduced_status: None,
        region_space: RegionSpace::Input,
        regions: a.wrong.clone(),
        closest,
        tads: summary(&a),
        time_ms: elapsed_ms(start),
    })
}

fn require_k(q: &RobustnessQuery, m: &PcaModel) -> Result<usize, VerifyError> {
    let k = q.k.ok_or_else(|| VerifyError::Query("PCA modes need k".into()))?;
    if k == 0 || k > m.stored() {
        return Err(VerifyError::Query(format!("k = {k} outside 1..={}", m.stored())));
    }
    Ok(k)
}

/// Searches the subspace `x + span(p_1..p_k)` inside the ε-ball; can refute but never prove robustness.
pub fn verify_pca_heuristic(
    net: &Plnn,
    m: &PcaModel,
    q: &RobustnessQuery,
    opts: &BuildOptions,
) -> Result<RobustnessVerdict, VerifyError> {
    let start = Instant::now();
    check_query(q, net.input_dim())?;
    if m.dim() != net.input_dim() {
        return Err(VerifyError::Query("PCA model and network disagree on input dimension".into()));
    }
    let k = require_k(q, m)?;
    let x = &q.point;
    let epsilon = match q.delta {
        Some(d) => d / m.neighborhood_bound(k)?,
        None => q.epsilon,
    };
    let target = match q.target_label {
        Some(t) => t,
        None => net.classify(x)?,
    };
    let pt = m.projection(k)?.transpose();
    let lift_map = AffineFunction::new(pt.clone(), x.clone())?;
    let mut box_constraints = Vec::with_capacity(2 * x.len());
    for j in 0..x.len() {
        let row = pt.row(j);
        if norm(row, Norm::Infinity) == 0.0 {
            continue;
        }
        box_constraints.push(Constraint::new(row.to_vec(), -epsilon, false));
        box_constraints.push(Constraint::new(row.iter().map(|v| -v).collect(), -epsilon, false));
    }
    let region = Polytope::new(k, box_constraints)?;
    let subnet = net.precompose(&lift_map)?;
    let a = analyze(&subnet, &region, target, opts)?;
    let lift = Lift { map: &lift_map, fallback: None, x, epsilon };
    let is_adv = |y: &[f64]| net.classify(y).map(|c| c != target).unwrap_or(false);
    let closest = lift.closest(&a.wrong, &opts.lp, &is_adv);
    let status = match (&closest, a.wrong.is_empty()) {
        (Some(_), _) => Status::NotRobust,
        (None, true) => Status::RobustOnSubspace,
        (None, false) => Status::Indeterminate,
    };
    Ok(RobustnessVerdict {
        status,
        mode: Mode::PcaHeuristic,
        target_label: target,
        epsilon,
        delta: None,
        bound: None,
        certified_epsilon: None,
        reduced_status: None,
        region_space: RegionSpace::Reduced,
        regions: a.wrong.clone(),
        closest,
        tads: summary(&a),
        time_ms: elapsed_ms(start),
    })
}

/// Shared mechanics of the built-in and trained PCA modes.
///
/// `reduced` classifies PCA coordinates; the deployed classifier is `reduced ∘ ρ_k`.
/// The δ-space ball `ρ_k(x) + δB` with `δ = ε · bound` covers the image of the
/// input ε-ball, so robustness of `reduced` there certifies the deployed classifier.
pub fn verify_reduced(
    reduced: &Plnn,
    m: &PcaModel,
    q: &RobustnessQuery,
    mode: Mode,
    opts: &BuildOptions,
) -> Result<RobustnessVerdict, VerifyError> {
    let start = Instant::now();
    check_query(q, m.dim())?;
    let k = require_k(q, m)?;
    if reduced.input_dim() != k {
        return Err(VerifyError::Query(format!("reduced network takes {} inputs, k = {k}", reduced.input_dim())));
    }
    let x = &q.point;
    let bound = m.neighborhood_bound(k)?;
    let (epsilon, delta) = match q.delta {
        Some(d) => (d / bound, d),
        None => (q.epsilon, q.epsilon * bound),
    };
    let encoder = m.encoder(k)?;
    let center = encoder.eval(x)?;
    let target = match q.target_label {
        Some(t) => t,
        None => reduced.classify(&center)?,
    };
    let ball = Polytope::linf_ball(&center, delta);
    let a = analyze(reduced, &ball, target, opts)?;

    // w ↦ x + Pᵀ(w − ρ_k(x)) keeps ρ_k of the image equal to w
    let pt = m.projection(k)?.transpose();
    let shift = pt.matvec(&center)?;
    let offset: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
    let through_x = AffineFunction::new(pt, offset)?;
    let decoder = m.decoder(k)?;
    let lift = Lift { map: &through_x, fallback: Some(&decoder), x, epsilon };
    let deployed = |y: &[f64]| -> Option<usize> { reduced.classify(&encoder.eval(y).ok()?).ok() };
    let is_adv = |y: &[f64]| deployed(y).is_some_and(|c| c != target);
    let closest = lift.closest(&a.wrong, &opts.lp, &is_adv);

    let reduced_status = if a.wrong.is_empty() {
        Status::Robust
    } else if a.wrong.iter().any(|r| r.witness.as_ref().is_some_and(|w| reduced.classify(w).is_ok_and(|c| c != target))) {
        Status::NotRobust
    } else {
        Status::Indeterminate
    };
    let status = match (&closest, reduced_status) {
        (Some(_), _) => Status::NotRobust,
        (None, Status::Robust) => Status::Robust,
        (None, _) => Status::Indeterminate,
    };
    Ok(RobustnessVerdict {
        status,
        mode,
        target_label: target,
        epsilon,
        delta: Some(delta),
        bound: Some(bound),
        certified_epsilon: (status == Status::Robust).then_some(epsilon),
        reduced_status: Some(reduced_status),
        region_space: RegionSpace::Reduced,
        regions: a.wrong.clone(),
        closest,
        tads: summary(&a),
        time_ms: elapsed_ms(start),
    })
}

/// Verifies `ν_c ∘ θ_k ∘ ρ_k` for a network `net` over the full input space.
pub fn verify_pca_builtin(
    net: &Plnn,
    m: &PcaModel,
    q: &RobustnessQuery,
    opts: &BuildOptions,
) -> Result<RobustnessVerdict, VerifyError> {
    if m.dim() != net.input_dim() {
        return Err(VerifyError::Query("PCA model and network disagree on input dimension".into()));
    }
    let k = require_k(q, m)?;
    let reduced = net.precompose(&m.decoder(k)?)?;
    verify_reduced(&reduced, m, q, Mode::PcaBuiltin, opts)
}

/// Verifies `net_t ∘ ρ_k` for a network `net_t` trained on PCA coordinates.
pub fn verify_pca_trained(
    net_t: &Plnn,
    m: &PcaModel,
    q: &RobustnessQuery,
    opts: &BuildOptions,
) -> Result<RobustnessVerdict, VerifyError> {
    verify_reduced(net_t, m, q, Mode::PcaTrained, opts)
}

/// Dispatches on `q.mode`. `pca` is required by the PCA modes.
pub fn verify(
    net: &Plnn,
    pca: Option<&PcaModel>,
    q: &RobustnessQuery,
    opts: &BuildOptions,
) -> Result<RobustnessVerdict, VerifyError> {
    let need = || pca.ok_or_else(|| VerifyError::Query("PCA modes need a PCA model".into()));
    match q.mode {
        Mode::Direct => verify_direct(net, q, opts),
        Mode::PcaHeuristic => verify_pca_heuristic(net, need()?, q, opts),
        Mode::PcaBuiltin => verify_pca_builtin(net, need()?, q, opts),
        Mode::PcaTrained => verify_pca_trained(net, need()?, q, opts),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCensus {
    pub regions: usize,
    pub witness: Option<Vec<f64>>,
}

/// Feasible path count per class inside `s`, with one interior witness each.
pub fn region_census(t: &Tads, s: &Polytope, lp: &LpConfig) -> Result<BTreeMap<usize, ClassCensus>, VerifyError> {
    if s.dim() != t.input_dim() {
        return Err(VerifyError::Query("region and structure disagree on dimension".into()));
    }
    let mut out: BTreeMap<usize, ClassCensus> = BTreeMap::new();
    for p in enumerate_paths(t, |term| matches!(term, Terminal::Class(_))) {
        let Terminal::Class(c) = p.terminal else { continue };
        let region = p.region.intersect(s)?;
        let witness = match check_feasible_with(&region, lp) {
            Ok(v) if !v.is_feasible() => continue,
            Ok(v) => v.witness.map(|w| interior_witness(&region, lp).unwrap_or(w)),
            Err(_) => None,
        };
        let entry = out.entry(c).or_insert(ClassCensus { regions: 0, witness: None });
        entry.regions += 1;
        if entry.witness.is_none() {
            entry.witness = witness;
        }
    }
    Ok(out)
}
