use std::fmt::Write as _;
use std::path::PathBuf;

use tads::pca::PcaModel;

use super::{load_train, Ctx};
use crate::config::options;
use crate::data::{grid_csv, png_bytes};
use crate::error::{exit, CliError};

options!(
    /// Fit PCA on the training split and dump its leading components.
    PcaOpts {
        /// Directory with the IDX files (falls back to $TADS_DATA_DIR).
        data: PathBuf,
        /// Components kept in the saved model (default: all).
        k: usize,
        /// Components written as PNG and CSV pictures.
        dump: usize,
        /// Use only the first n training items.
        train_limit: usize,
    }
);

pub fn run(mut o: PcaOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let dump = *o.dump.get_or_insert(6);
    let mut run = ctx.start("pca", &o)?;
    let train_set = load_train(&mut run, o.data.as_ref(), o.train_limit)?;
    let k = o.k.unwrap_or(train_set.dim());
    let m = PcaModel::fit(&train_set, k)?;
    run.write("pca.json", m.to_json().as_bytes())?;

    let mut bounds = String::from("k,bound,eigenvalue\n");
    for j in 1..=m.stored() {
        let _ = writeln!(bounds, "{j},{:e},{:e}", m.neighborhood_bound(j)?, m.eigenvalues[j - 1]);
    }
    run.write("bounds.csv", bounds.as_bytes())?;

    for (i, p) in m.components.iter().take(dump).enumerate() {
        let scale = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        run.write(&format!("components/component_{}.png", i + 1), &png_bytes(p, -scale, scale)?)?;
        run.write(&format!("components/component_{}.csv", i + 1), grid_csv(p).as_bytes())?;
    }
    run.write("components/mean.png", &png_bytes(&m.mean, 0.0, 1.0)?)?;
    let shown = dump.min(m.stored());
    if shown > 0 {
        let bound = m.neighborhood_bound(shown)?;
        run.note("neighborhood_bound", serde_json::json!({ "k": shown, "bound": bound }));
        println!("max l1 norm of the first {shown} components: {bound:.4}");
    }
    if !m.ties.is_empty() {
        run.note("eigenvalue_ties", &m.ties);
    }
    run.finish()?;
    Ok(exit::OK)
}
