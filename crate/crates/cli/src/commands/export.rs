use std::path::PathBuf;

use tads::affine::Polytope;
use tads::nn::Plnn;
use tads::tads::{argmax_tads, compose_with, plnn_to_tads_with, BuildStats, Tads};

use super::verify::build_options;
use super::{deployed_classify, load_net, load_pca, reduced_net, resolve_point, Ctx, PointSource};
use crate::config::options;
use crate::error::{exit, CliError};
use crate::run::Run;

options!(
    /// Write a network's decision structure as JSON and Graphviz DOT.
    ExportOpts {
        /// Network weights (JSON).
        net: PathBuf,
        /// Re-export an existing structure instead of compiling a network.
        tads: PathBuf,
        /// PCA model; the structure is then built over PCA coordinates.
        pca: PathBuf,
        k: usize,
        /// Compose with argmax so terminals are class labels.
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        classify: bool,
        /// Restrict to the ℓ∞ ball of this radius around the point (input space).
        epsilon: f64,
        /// Restrict to the ℓ∞ ball of this radius around the encoded point.
        delta: f64,
        point: PathBuf,
        data: PathBuf,
        sample_digit: usize,
        sample_index: usize,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        lazy: bool,
    }
);

pub fn write_tads(run: &mut Run, t: &Tads) -> Result<(), CliError> {
    run.write("tads.json", t.to_json().as_bytes())?;
    run.write("tads.dot", t.to_dot().as_bytes())?;
    let (inner, terminals) = t.size();
    run.note("inner", inner);
    run.note("terminals", terminals);
    println!("{inner} inner nodes, {terminals} terminals");
    Ok(())
}

/// Where to restrict: the network to compile (over PCA coordinates when a
/// model is given) and the ball center and radius, if any.
pub struct Restriction {
    pub target: Plnn,
    pub ball: Option<(Vec<f64>, f64)>,
}

impl Restriction {
    pub fn polytope(&self) -> Option<Polytope> {
        self.ball.as_ref().map(|(c, r)| Polytope::linf_ball(c, *r))
    }
}

pub fn restriction(
    run: &mut Run,
    net: &Plnn,
    pca: Option<&PathBuf>,
    k: Option<usize>,
    radius: (Option<f64>, Option<f64>),
    src: &PointSource<'_>,
) -> Result<Restriction, CliError> {
    let pca = pca.map(|p| load_pca(run, p)).transpose()?;
    let front = match (&pca, k) {
        (Some(m), Some(k)) => Some((m, k)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--pca and --k go together".into())),
    };
    let target = match front {
        Some((m, k)) => reduced_net(net, m, k)?,
        None => net.clone(),
    };
    let (epsilon, delta) = radius;
    let radius = match front {
        Some(_) => delta.or(epsilon),
        None => epsilon,
    };
    let Some(radius) = radius else {
        return Ok(Restriction { target, ball: None });
    };
    let (x, _) = resolve_point(run, src, deployed_classify(net, front))?;
    let center = match front {
        Some((m, k)) => m.encode(&x, k)?,
        None => x,
    };
    Ok(Restriction { target, ball: Some((center, radius)) })
}

pub fn run(mut o: ExportOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let classify = *o.classify.get_or_insert(false);
    let lazy = *o.lazy.get_or_insert(false);
    let mut run = ctx.start("export", &o)?;
    if let Some(path) = &o.tads {
        let text = run.read_input_text("tads", path)?;
        let t = Tads::from_json(&text)?;
        write_tads(&mut run, &t)?;
        run.finish()?;
        return Ok(exit::OK);
    }
    let Some(net_path) = &o.net else {
        return Err(CliError::Usage("give --net or --tads".into()));
    };
    let net = load_net(&mut run, net_path)?;
    let src = PointSource {
        point: o.point.as_ref(),
        data: o.data.as_ref(),
        sample_digit: o.sample_digit,
        sample_index: o.sample_index,
    };
    let r = restriction(&mut run, &net, o.pca.as_ref(), o.k, (o.epsilon, o.delta), &src)?;
    let (target, region) = (&r.target, r.polytope());
    let opts = build_options(lazy);
    let mut stats = BuildStats::default();
    let mut t = plnn_to_tads_with(target, region.as_ref(), &opts, &mut stats)?;
    if classify {
        t = compose_with(&t, &argmax_tads(target.output_dim()), &opts, &mut stats)?;
    }
    run.note("lp_calls", stats.lp_calls);
    run.note("pruned_branches", stats.pruned_branches);
    write_tads(&mut run, &t)?;
    run.finish()?;
    Ok(exit::OK)
}
