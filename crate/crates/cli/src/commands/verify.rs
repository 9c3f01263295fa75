use std::path::PathBuf;

use tads::tads::BuildOptions;
use tads::verify::{self, Mode, RobustnessQuery, RobustnessVerdict, Status};

use super::{deployed_classify, load_net, load_pca, reduced_net, require, resolve_point, Ctx, PointSource};
use crate::config::options;
use crate::data::{picture_shape, png_bytes};
use crate::error::{exit, CliError};
use crate::run::Run;

options!(
    /// Decide ε-robustness of a classifier around one input.
    VerifyOpts {
        /// Network weights (JSON).
        net: PathBuf,
        /// direct, pca_heuristic, pca_builtin or pca_trained.
        mode: String,
        /// PCA model (JSON); with mode direct the network is checked on PCA coordinates.
        pca: PathBuf,
        k: usize,
        /// Input-space ℓ∞ radius.
        epsilon: f64,
        /// PCA-space ℓ∞ radius.
        delta: f64,
        /// Reference point as a JSON array.
        point: PathBuf,
        /// Directory with the IDX files (falls back to $TADS_DATA_DIR).
        data: PathBuf,
        /// Use the first correctly classified test item with this label.
        sample_digit: usize,
        /// Use this test item.
        sample_index: usize,
        /// Label to defend (default: the prediction at the point).
        target: usize,
        /// Skip LP pruning while building (slower, for comparison).
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        lazy: bool,
    }
);

pub fn status_code(s: Status) -> u8 {
    match s {
        Status::Robust => exit::ROBUST,
        Status::NotRobust => exit::NOT_ROBUST,
        Status::Indeterminate => exit::INDETERMINATE,
        Status::RobustOnSubspace => exit::ROBUST_ON_SUBSPACE,
    }
}

pub fn build_options(lazy: bool) -> BuildOptions {
    if lazy {
        BuildOptions::lazy()
    } else {
        BuildOptions::default()
    }
}

fn write_point(run: &mut Run, stem: &str, p: &[f64]) -> Result<(), CliError> {
    run.write(&format!("{stem}.json"), (serde_json::to_string(p).expect("numbers serialize") + "\n").as_bytes())?;
    if picture_shape(p.len()).0 > 1 {
        run.write(&format!("{stem}.png"), &png_bytes(p, 0.0, 1.0)?)?;
    }
    Ok(())
}

pub fn run(mut o: VerifyOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let mode: Mode = o.mode.get_or_insert_with(|| "direct".into()).parse().map_err(CliError::Usage)?;
    let lazy = *o.lazy.get_or_insert(false);
    let mut run = ctx.start("verify", &o)?;
    let net = load_net(&mut run, &require(&o.net, "net")?)?;
    let pca = o.pca.as_ref().map(|p| load_pca(&mut run, p)).transpose()?;
    let opts = build_options(lazy);
    if mode != Mode::Direct && (pca.is_none() || o.k.is_none()) {
        return Err(CliError::Usage(format!("mode {} needs --pca and --k", o.mode.as_deref().unwrap_or(""))));
    }
    let front = match (&pca, o.k) {
        (Some(m), Some(k)) => Some((m, k)),
        (None, Some(_)) => return Err(CliError::Usage("--k needs --pca".into())),
        _ => None,
    };
    let src = PointSource {
        point: o.point.as_ref(),
        data: o.data.as_ref(),
        sample_digit: o.sample_digit,
        sample_index: o.sample_index,
    };
    let classify_front = if mode == Mode::PcaHeuristic { None } else { front };
    let (x, _) = resolve_point(&mut run, &src, deployed_classify(&net, classify_front))?;

    let (verdict, decode): (RobustnessVerdict, Option<(&tads::pca::PcaModel, usize)>) = match (mode, front) {
        (Mode::Direct, Some((m, k))) => {
            // the network on PCA coordinates, checked directly around ρ_k(x)
            let r = reduced_net(&net, m, k)?;
            let radius = o.delta.or(o.epsilon).ok_or_else(|| CliError::Usage("--delta or --epsilon is required".into()))?;
            let q = RobustnessQuery { target_label: o.target, ..RobustnessQuery::direct(m.encode(&x, k)?, radius) };
            (verify::verify_direct(&r, &q, &opts)?, Some((m, k)))
        }
        _ => {
            if o.epsilon.is_none() && o.delta.is_none() {
                return Err(CliError::Usage("--epsilon or --delta is required".into()));
            }
            if mode == Mode::Direct && o.epsilon.is_none() {
                return Err(CliError::Usage("mode direct on raw inputs takes --epsilon".into()));
            }
            let q = RobustnessQuery {
                point: x.clone(),
                epsilon: o.epsilon.unwrap_or(0.0),
                target_label: o.target,
                mode,
                k: o.k,
                delta: if o.epsilon.is_some() { None } else { o.delta },
            };
            let v = verify::verify(&net, pca.as_ref(), &q, &opts)?;
            let dec = match mode {
                Mode::PcaBuiltin | Mode::PcaTrained => front,
                _ => None,
            };
            (v, dec)
        }
    };
    let mut verdict = verdict;
    if run.reproducible() {
        verdict.time_ms = 0;
    }
    run.write("verdict.json", (verdict.to_json() + "\n").as_bytes())?;

    if let Some(c) = &verdict.closest {
        match (mode, decode) {
            (Mode::Direct, Some((m, _))) => {
                write_point(&mut run, "adversarial_reduced", &c.point)?;
                write_point(&mut run, "adversarial", &m.decode(&c.point)?)?;
            }
            _ => write_point(&mut run, "adversarial", &c.point)?,
        }
    } else if let (Some((m, _)), Some(Status::NotRobust)) = (decode, verdict.reduced_status) {
        // δ-space counterexample whose decoding leaves the ε-ball
        if let Some(w) = verdict.regions.iter().find_map(|r| r.witness.clone()) {
            write_point(&mut run, "adversarial_reduced", &w)?;
            write_point(&mut run, "decoded_reduced_adversarial", &m.decode(&w)?)?;
        }
    }
    run.note("status", verdict.status);
    run.note("tads_nodes", verdict.tads.nodes());
    println!(
        "{}: target {} epsilon {:e}{} nodes {} regions {}",
        serde_json::to_value(verdict.status).expect("enum serializes").as_str().unwrap_or(""),
        verdict.target_label,
        verdict.epsilon,
        verdict.delta.map(|d| format!(" delta {d:e}")).unwrap_or_default(),
        verdict.tads.nodes(),
        verdict.regions.len()
    );
    if let Some(c) = &verdict.closest {
        println!("closest adversarial at distance {:e}", c.distance);
    }
    run.finish()?;
    Ok(status_code(verdict.status))
}
