//! Randomised end-to-end checks of the verifier against independent oracles.

use rand::Rng;

use tads::affine::{AffineFunction, Matrix};
use tads::nn::Plnn;
use tads::pca::PcaModel;
use tads::tads::BuildOptions;
use tads::verify::{verify_direct, verify_pca_builtin, verify_pca_heuristic, Mode, RobustnessQuery, Status, BALL_TOL};

use super::{linf, pattern_oracle, random_hidden, random_net, rng, sample_ball, uniform_vec};

/// Margins closer to zero than this are decided by rounding, so the instance is redrawn.
const AMBIGUOUS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub hidden: usize,
    pub robust: bool,
    pub agree: bool,
    pub status: Status,
    pub feasible_patterns: usize,
}

/// One random network and ball; the direct verdict must equal the activation-pattern oracle.
pub fn oracle_case(seed: u64, max_hidden: usize) -> Result<OracleCase, String> {
    let mut r = rng(seed);
    let d = r.random_range(2..=3);
    let hidden = random_hidden(&mut r, 4, max_hidden);
    let net = random_net(&mut r, d, &hidden, 3);
    let center = uniform_vec(&mut r, d, -1.0, 1.0);
    let target = net.classify(&center).map_err(|e| e.to_string())?;
    let (eps, oracle) = loop {
        let eps = r.random_range(0.05..0.8);
        let o = pattern_oracle(&net, &center, eps, target);
        if o.margin.abs() > AMBIGUOUS {
            break (eps, o);
        }
    };
    let q = RobustnessQuery::direct(center.clone(), eps);
    let v = verify_direct(&net, &q, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let robust = oracle.margin < 0.0;
    let agree = match v.status {
        Status::Robust => robust,
        Status::NotRobust => !robust,
        _ => false,
    };
    Ok(OracleCase { hidden: hidden.iter().sum(), robust, agree, status: v.status, feasible_patterns: oracle.feasible_patterns })
}

/// Draws from the ball: two thirds uniform, one third on random vertices of the box.
pub fn ball_sample(r: &mut impl Rng, center: &[f64], eps: f64) -> Vec<f64> {
    if r.random_bool(1.0 / 3.0) {
        center.iter().map(|c| if r.random_bool(0.5) { c + eps } else { c - eps }).collect()
    } else {
        sample_ball(r, center, eps)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SoundnessReport {
    pub instances: usize,
    pub misclassified_samples: usize,
    pub outside_regions: usize,
    pub closer_than_reported: usize,
    pub bad_adversarials: usize,
    pub robust_with_adversarial: usize,
}

impl SoundnessReport {
    pub fn violations(&self) -> usize {
        self.outside_regions + self.closer_than_reported + self.bad_adversarials + self.robust_with_adversarial
    }
}

/// Samples the ball of one random instance until `wanted` misclassified points are seen
/// (or `max_draws` is reached) and checks each against the reported regions.
pub fn soundness_case(seed: u64, wanted: usize, max_draws: usize, report: &mut SoundnessReport) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(2..=4);
    let hidden = random_hidden(&mut r, 4, 10);
    let net = random_net(&mut r, d, &hidden, 3);
    let center = uniform_vec(&mut r, d, -1.0, 1.0);
    let eps = r.random_range(0.2..1.0);
    let q = RobustnessQuery::direct(center.clone(), eps);
    let v = verify_direct(&net, &q, &BuildOptions::default()).map_err(|e| e.to_string())?;
    if v.status == Status::Indeterminate {
        return Err(format!("seed {seed}: indeterminate verdict"));
    }
    report.instances += 1;
    let polys: Vec<_> = v.regions.iter().map(|g| g.polytope(d)).collect();
    if let Some(c) = &v.closest {
        let wrong = net.classify(&c.point).map_err(|e| e.to_string())? != v.target_label;
        if !wrong || linf(&c.point, &center) > eps + BALL_TOL || (linf(&c.point, &center) - c.distance).abs() > 1e-12 {
            report.bad_adversarials += 1;
        }
    }
    let mut seen = 0;
    for _ in 0..max_draws {
        if seen == wanted {
            break;
        }
        let y = ball_sample(&mut r, &center, eps);
        if net.classify(&y).map_err(|e| e.to_string())? == v.target_label {
            continue;
        }
        seen += 1;
        report.misclassified_samples += 1;
        if v.status == Status::Robust {
            report.robust_with_adversarial += 1;
            continue;
        }
        if !polys.iter().any(|p| p.contains(&y, 1e-9)) {
            report.outside_regions += 1;
        }
        let reported = v.closest.as_ref().map_or(f64::INFINITY, |c| c.distance);
        if linf(&y, &center) < reported - 1e-6 {
            report.closer_than_reported += 1;
        }
    }
    Ok(())
}

/// Low-rank synthetic data set with a random orientation.
pub fn synthetic_rows(r: &mut impl Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    let scales: Vec<f64> = (0..n).map(|i| 2.0 / (1.0 + i as f64).powf(1.5)).collect();
    let mix = Matrix::new(n, n, uniform_vec(r, n * n, -1.0, 1.0)).expect("square");
    (0..count)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * r.random_range(-1.0..1.0)).collect();
            mix.matvec(&z).expect("square")
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct TransferReport {
    pub fixtures: usize,
    pub certified: usize,
    pub refuted: usize,
    pub samples: usize,
    /// Random-search hits inside a certified ball.
    pub certified_but_adversarial: usize,
    /// Reduced-space region witnesses that the reduced classifier labels correctly.
    pub witness_disagreements: usize,
    pub regions_checked: usize,
    pub bad_lifts: usize,
}

impl TransferReport {
    pub fn violations(&self) -> usize {
        self.certified_but_adversarial + self.witness_disagreements + self.bad_lifts
    }
}

pub struct TransferFixture {
    pub net: Plnn,
    pub pca: PcaModel,
    pub k: usize,
    pub point: Vec<f64>,
}

pub fn transfer_fixture(seed: u64) -> TransferFixture {
    let mut r = rng(seed);
    let n = 6;
    let rows = synthetic_rows(&mut r, n, 400);
    let k = r.random_range(2..=3);
    let pca = PcaModel::fit_rows(&rows, n).expect("well-posed data");
    let hidden = random_hidden(&mut r, 3, 8);
    let net = random_net(&mut r, n, &hidden, 3);
    let point = rows[r.random_range(0..rows.len())].clone();
    TransferFixture { net, pca, k, point }
}

/// Checks the built-in PCA verdict at `epsilon` against random search and the decoder.
pub fn transfer_case(
    f: &TransferFixture,
    epsilon: f64,
    samples: usize,
    seed: u64,
    report: &mut TransferReport,
) -> Result<Status, String> {
    let q = RobustnessQuery::pca(f.point.clone(), epsilon, Mode::PcaBuiltin, f.k);
    let v = verify_pca_builtin(&f.net, &f.pca, &q, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let dec = f.pca.decoder(f.k).map_err(|e| e.to_string())?;
    let enc = f.pca.encoder(f.k).map_err(|e| e.to_string())?;
    let reduced = f.net.precompose(&dec).map_err(|e| e.to_string())?;
    let deployed = |y: &[f64]| reduced.classify(&enc.eval(y).unwrap()).unwrap();
    let target = v.target_label;
    let delta = v.delta.expect("built-in mode reports delta");
    let center = enc.eval(&f.point).unwrap();
    report.fixtures += 1;
    match v.status {
        Status::Robust => {
            report.certified += 1;
            let mut r = rng(seed);
            for _ in 0..samples {
                let y = ball_sample(&mut r, &f.point, epsilon);
                report.samples += 1;
                if deployed(&y) != target {
                    report.certified_but_adversarial += 1;
                }
            }
        }
        Status::NotRobust => report.refuted += 1,
        _ => {}
    }
    for g in &v.regions {
        let Some(w) = &g.witness else { continue };
        report.regions_checked += 1;
        let decoded = dec.eval(w).unwrap();
        let through_decoder = f.net.classify(&decoded).unwrap();
        if reduced.classify(w).unwrap() == target || through_decoder == target || linf(w, &center) > delta + BALL_TOL {
            report.witness_disagreements += 1;
        }
    }
    if let Some(c) = &v.closest {
        if deployed(&c.point) == target || linf(&c.point, &f.point) > epsilon + BALL_TOL {
            report.bad_lifts += 1;
        }
    }
    Ok(v.status)
}

/// Subspace-search adversarials must be genuine input-space adversarials.
pub fn heuristic_case(f: &TransferFixture, epsilon: f64) -> Result<(Status, bool), String> {
    let q = RobustnessQuery::pca(f.point.clone(), epsilon, Mode::PcaHeuristic, f.k);
    let v = verify_pca_heuristic(&f.net, &f.pca, &q, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let ok = match &v.closest {
        Some(c) => f.net.classify(&c.point).unwrap() != v.target_label && linf(&c.point, &f.point) <= epsilon + BALL_TOL,
        None => v.status != Status::NotRobust,
    };
    Ok((v.status, ok && v.status != Status::Robust))
}

/// `ν ∘ θ_k` as a standalone network, the input of the trained mode.
pub fn reduced_network(f: &TransferFixture) -> Plnn {
    let dec: AffineFunction = f.pca.decoder(f.k).unwrap();
    f.net.precompose(&dec).unwrap()
}

#[derive(Debug, Clone, Default)]
pub struct BoundReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `‖ρ(y) − ρ(x)‖∞ / (ε · bound)`.
    pub worst_ratio: f64,
    /// Relative gap between the sign witness and `ε · bound`.
    pub witness_error: f64,
}

/// Random ε-pairs around `points` never stretch further than `ε · max_i ‖p_i‖₁`,
/// and `x + ε · sign(p_i)` for the maximising component reaches the bound.
pub fn neighborhood_bound_check(m: &PcaModel, k: usize, points: &[&[f64]], pairs: usize, seed: u64) -> BoundReport {
    let mut r = rng(seed);
    let enc = m.encoder(k).unwrap();
    let bound = m.neighborhood_bound(k).unwrap();
    let mut report = BoundReport::default();
    for _ in 0..pairs {
        let x = points[r.random_range(0..points.len())];
        let eps = r.random_range(1e-3..0.5);
        let y = ball_sample(&mut r, x, eps);
        let gap = linf(&enc.eval(&y).unwrap(), &enc.eval(x).unwrap());
        let limit = eps * bound;
        report.pairs += 1;
        report.worst_ratio = report.worst_ratio.max(gap / limit);
        if gap > limit * (1.0 + 1e-12) {
            report.violations += 1;
        }
    }
    let best = (0..k)
        .max_by(|&a, &b| {
            let na: f64 = m.components[a].iter().map(|v| v.abs()).sum();
            let nb: f64 = m.components[b].iter().map(|v| v.abs()).sum();
            na.total_cmp(&nb)
        })
        .unwrap();
    for _ in 0..10 {
        let x = points[r.random_range(0..points.len())];
        let eps = r.random_range(1e-3..0.5);
        let y: Vec<f64> = x.iter().zip(&m.components[best]).map(|(a, p)| a + eps * p.signum()).collect();
        let gap = linf(&enc.eval(&y).unwrap(), &enc.eval(x).unwrap());
        report.witness_error = report.witness_error.max((gap - eps * bound).abs() / (eps * bound));
    }
    report
}

/// Largest `|⟦plnn_to_tads(ν)⟧(x) − ν(x)|∞` over `inputs` random points, with the hidden width.
pub fn equivalence_case(seed: u64, inputs: usize) -> Result<(f64, usize), String> {
    let mut r = rng(seed);
    let d = r.random_range(1..=4);
    let out = r.random_range(1..=4);
    let hidden = random_hidden(&mut r, 4, 12);
    let net = random_net(&mut r, d, &hidden, out);
    let t = tads::tads::plnn_to_tads(&net, None).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..inputs {
        let x = uniform_vec(&mut r, d, -3.0, 3.0);
        let tads::tads::Value::Vector(got) = t.eval(&x).map_err(|e| e.to_string())? else {
            return Err("structure did not produce a vector".into());
        };
        worst = worst.max(linf(&got, &net.eval(&x).map_err(|e| e.to_string())?));
    }
    Ok((worst, hidden.iter().sum()))
}

/// Worst relative gradient error over `points` kink-free random inputs of one random network.
pub fn gradient_case(seed: u64, points: usize) -> Result<f64, String> {
    let mut r = rng(seed);
    let d = r.random_range(2..=6);
    let classes = r.random_range(2..=5);
    let hidden = random_hidden(&mut r, 4, 16);
    let net = random_net(&mut r, d, &hidden, classes);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..points * 100 {
        if checked == points {
            return Ok(worst);
        }
        let x = uniform_vec(&mut r, d, -2.0, 2.0);
        let label = r.random_range(0..classes);
        if let tads::nn::GradCheck::Checked { max_relative_error } = tads::nn::gradient_check(&net, &x, label) {
            worst = worst.max(max_relative_error);
            checked += 1;
        }
    }
    Err(format!("seed {seed}: only {checked} kink-free points found"))
}
