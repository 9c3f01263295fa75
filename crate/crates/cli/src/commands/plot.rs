use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use tads::tads::{argmax_tads, compose_with, plnn_to_tads_with, BuildOptions, BuildStats};
use tads::verify::{region_census, render_region_plot, verify_direct, PlotOptions, RobustnessQuery};

use super::export::restriction;
use super::{load_net, require, Ctx, PointSource};
use crate::config::options;
use crate::error::{exit, CliError};

options!(
    /// Picture the decision regions of a two-input classifier around a point.
    PlotOpts {
        /// Network weights (JSON).
        net: PathBuf,
        /// PCA model; with --k 2 the plot is over PCA coordinates.
        pca: PathBuf,
        k: usize,
        /// Half-width of the plotted square (input space).
        epsilon: f64,
        /// Half-width of the plotted square (PCA space).
        delta: f64,
        point: PathBuf,
        data: PathBuf,
        sample_digit: usize,
        sample_index: usize,
        /// Grid cells per side.
        resolution: usize,
    }
);

#[derive(Serialize)]
struct CensusEntry {
    regions: usize,
    witness: Option<Vec<f64>>,
}

pub fn run(mut o: PlotOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let resolution = *o.resolution.get_or_insert(512);
    let mut run = ctx.start("plot", &o)?;
    let net = load_net(&mut run, &require(&o.net, "net")?)?;
    let src = PointSource {
        point: o.point.as_ref(),
        data: o.data.as_ref(),
        sample_digit: o.sample_digit,
        sample_index: o.sample_index,
    };
    let r = restriction(&mut run, &net, o.pca.as_ref(), o.k, (o.epsilon, o.delta), &src)?;
    let Some((center, radius)) = r.ball.clone() else {
        return Err(CliError::Usage("plot needs a square: give --epsilon or --delta and a point".into()));
    };
    if r.target.input_dim() != 2 {
        return Err(CliError::Usage(format!("plots need a two-input classifier, this one takes {}", r.target.input_dim())));
    }
    let region = r.polytope().expect("ball present");
    let opts = BuildOptions::default();
    let mut stats = BuildStats::default();
    let logits = plnn_to_tads_with(&r.target, Some(&region), &opts, &mut stats)?;
    let classes = compose_with(&logits, &argmax_tads(r.target.output_dim()), &opts, &mut stats)?;

    let verdict = verify_direct(&r.target, &RobustnessQuery::direct(center.clone(), radius), &opts)?;
    let mut marks = vec![(center.clone(), "x".to_string())];
    if let Some(c) = &verdict.closest {
        marks.push((c.point.clone(), "adversarial".to_string()));
    }
    let plot = render_region_plot(&classes, &region, &PlotOptions { resolution, marks, ..PlotOptions::default() })?;
    let mut disagreements = 0usize;
    for row in 0..resolution {
        for col in 0..resolution {
            if let Some(c) = plot.cells[row * resolution + col] {
                if r.target.classify(&plot.cell_center(row, col))? != c {
                    disagreements += 1;
                }
            }
        }
    }
    run.write("region.svg", plot.svg.as_bytes())?;
    run.write("region.csv", plot.csv.as_bytes())?;
    let census: BTreeMap<usize, CensusEntry> = region_census(&classes, &region, &opts.lp)?
        .into_iter()
        .map(|(c, e)| (c, CensusEntry { regions: e.regions, witness: e.witness }))
        .collect();
    let text = serde_json::to_string_pretty(&census).expect("plain data serializes") + "\n";
    run.write("census.json", text.as_bytes())?;
    let (inner, terminals) = classes.size();
    run.note("inner", inner);
    run.note("terminals", terminals);
    run.note("target_label", verdict.target_label);
    run.note("grid_disagreements", disagreements);
    println!(
        "{} classes over {} paths, {inner} inner nodes, {terminals} terminals; {disagreements} grid cells disagree with the network",
        census.len(),
        census.values().map(|e| e.regions).sum::<usize>()
    );
    run.finish()?;
    Ok(exit::OK)
}
