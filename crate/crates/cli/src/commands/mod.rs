//! One module per subcommand, plus the input plumbing they share.

pub mod export;
pub mod pca;
pub mod plot;
pub mod sweep;
pub mod train;
pub mod verify;

use std::path::{Path, PathBuf};

use serde::Serialize;

use tads::nn::{LabeledDataset, Plnn, Split};
use tads::pca::PcaModel;

use crate::config::{ConfigFile, Global};
use crate::data::{data_dir, first_correct, load_split, parse_vector};
use crate::error::CliError;
use crate::run::Run;

pub struct Ctx {
    pub config: ConfigFile,
    pub global: Global,
}

impl Ctx {
    pub fn seed(&self) -> u64 {
        self.global.seed.unwrap_or(0)
    }

    pub fn threads(&self) -> usize {
        self.global.threads.unwrap_or(0)
    }

    /// Starts a run in `--out`, defaulting to `runs/<command>`; the manifest
    /// records the resolved global flags and command options.
    pub fn start(&self, command: &str, options: &impl Serialize) -> Result<Run, CliError> {
        let out = self.global.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command));
        let config = serde_json::json!({
            "seed": self.seed(),
            "threads": self.threads(),
            "options": options,
        });
        let mut run = Run::start(command, out, self.seed(), self.threads(), config)?;
        if let (Some(path), Some(text)) = (&self.config.path, &self.config.text) {
            run.record_input("config", path, text.as_bytes());
        }
        Ok(run)
    }
}

pub fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn load_net(run: &mut Run, path: &Path) -> Result<Plnn, CliError> {
    let text = run.read_input_text("net", path)?;
    Ok(Plnn::from_json(&text)?)
}

pub fn load_pca(run: &mut Run, path: &Path) -> Result<PcaModel, CliError> {
    let text = run.read_input_text("pca", path)?;
    Ok(PcaModel::from_json(&text)?)
}

/// How the reference point is chosen.
pub struct PointSource<'a> {
    pub point: Option<&'a PathBuf>,
    pub data: Option<&'a PathBuf>,
    pub sample_digit: Option<usize>,
    pub sample_index: Option<usize>,
}

/// An input-space point: read from a file, a given test index, or the first
/// test item of a digit that `classify` labels correctly.
pub fn resolve_point(
    run: &mut Run,
    src: &PointSource<'_>,
    classify: impl Fn(&[f64]) -> Option<usize>,
) -> Result<(Vec<f64>, Option<usize>), CliError> {
    if let Some(p) = src.point {
        let text = run.read_input_text("point", p)?;
        return Ok((parse_vector(&text, &p.display().to_string())?, None));
    }
    if src.sample_digit.is_none() && src.sample_index.is_none() {
        return Err(CliError::Usage("give --point, --sample-index or --sample-digit".into()));
    }
    let test = load_test(run, src.data)?;
    let index = match (src.sample_index, src.sample_digit) {
        (Some(i), _) if i < test.len() => i,
        (Some(i), _) => return Err(CliError::Usage(format!("sample index {i} outside the {} test items", test.len()))),
        (None, Some(d)) => first_correct(&test, d, classify)?,
        (None, None) => unreachable!("checked above"),
    };
    run.note("sample_index", index);
    run.note("sample_label", test.label(index));
    Ok((test.input(index).to_vec(), Some(index)))
}

pub fn load_test(run: &mut Run, data: Option<&PathBuf>) -> Result<LabeledDataset, CliError> {
    let dir = data_dir(data)?;
    load_split(run, &dir, Split::Test)
}

pub fn load_train(run: &mut Run, data: Option<&PathBuf>, limit: Option<usize>) -> Result<LabeledDataset, CliError> {
    let dir = data_dir(data)?;
    let d = load_split(run, &dir, Split::Train)?;
    Ok(match limit {
        Some(n) => d.take(n),
        None => d,
    })
}

/// The classifier over PCA coordinates: `net` itself when it takes `k` inputs,
/// otherwise `net ∘ θ_k` for a network over the full input space.
pub fn reduced_net(net: &Plnn, m: &PcaModel, k: usize) -> Result<Plnn, CliError> {
    if net.input_dim() == k {
        Ok(net.clone())
    } else if net.input_dim() == m.dim() {
        Ok(net.precompose(&m.decoder(k)?)?)
    } else {
        Err(CliError::Usage(format!(
            "network takes {} inputs; expected k = {k} or the PCA dimension {}",
            net.input_dim(),
            m.dim()
        )))
    }
}

/// The network as deployed on raw inputs, given an optional PCA front end.
pub fn deployed_classify<'a>(net: &'a Plnn, front: Option<(&'a PcaModel, usize)>) -> impl Fn(&[f64]) -> Option<usize> + 'a {
    move |x| match front {
        None => net.classify(x).ok(),
        Some((m, k)) => {
            let r = m.encode(x, k).ok()?;
            if net.input_dim() == k {
                net.classify(&r).ok()
            } else {
                net.classify(&m.decode(&r).ok()?).ok()
            }
        }
    }
}

pub fn parse_layers(layers: &[usize]) -> Result<Vec<usize>, CliError> {
    if layers.is_empty() || layers.contains(&0) {
        return Err(CliError::Usage("--layers needs positive widths, e.g. 10,10,10".into()));
    }
    Ok(layers.to_vec())
}
