//! Dataset lookup, sample selection and small image/CSV writers.

use std::path::{Path, PathBuf};

use tads::nn::{load_idx_images, load_idx_labels, LabeledDataset, Split};

use crate::error::CliError;
use crate::run::Run;

pub const DATA_ENV: &str = "TADS_DATA_DIR";

/// `--data`, else the config value, else `$TADS_DATA_DIR`.
pub fn data_dir(flag: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    match std::env::var_os(DATA_ENV) {
        Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
        _ => Err(CliError::Usage(format!(
            "missing dataset path: pass --data or set {DATA_ENV} to a directory holding the IDX files"
        ))),
    }
}

/// Loads one split and records both files as run inputs.
pub fn load_split(run: &mut Run, dir: &Path, split: Split) -> Result<LabeledDataset, CliError> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let img_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let lbl_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    if !img_path.exists() || !lbl_path.exists() {
        return Err(CliError::Usage(format!("dataset files {} and {} not found", img_path.display(), lbl_path.display())));
    }
    let images = run.read_input(&format!("{prefix}-images"), &img_path)?;
    let labels = run.read_input(&format!("{prefix}-labels"), &lbl_path)?;
    let (dim, inputs) = load_idx_images(&images)?;
    let labels = load_idx_labels(&labels)?;
    if inputs.len() != dim * labels.len() {
        return Err(CliError::Data(tads::nn::MnistError::CountMismatch {
            images: inputs.len() / dim.max(1),
            labels: labels.len(),
        }));
    }
    Ok(LabeledDataset::new(dim, inputs, labels)?)
}

/// Index of the first item with label `digit` that `classify` gets right.
pub fn first_correct(data: &LabeledDataset, digit: usize, classify: impl Fn(&[f64]) -> Option<usize>) -> Result<usize, CliError> {
    (0..data.len())
        .find(|&i| data.label(i) == digit && classify(data.input(i)) == Some(digit))
        .ok_or_else(|| CliError::Usage(format!("no correctly classified test item with label {digit}")))
}

pub fn accuracy(data: &LabeledDataset, classify: impl Fn(&[f64]) -> Option<usize> + Sync) -> f64 {
    use rayon::prelude::*;
    if data.is_empty() {
        return 0.0;
    }
    let hits = (0..data.len()).into_par_iter().filter(|&i| classify(data.input(i)) == Some(data.label(i))).count();
    hits as f64 / data.len() as f64
}

/// Side lengths of the picture for a vector of length `n`: square when possible, else one row.
pub fn picture_shape(n: usize) -> (usize, usize) {
    let s = (n as f64).sqrt().round() as usize;
    if s * s == n {
        (s, s)
    } else {
        (1, n)
    }
}

/// Grayscale PNG; values are mapped linearly from `[lo, hi]` onto 0..=255.
pub fn png_bytes(values: &[f64], lo: f64, hi: f64) -> Result<Vec<u8>, CliError> {
    let (h, w) = picture_shape(values.len());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values.iter().map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches shape");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| CliError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

/// The same grid as [`png_bytes`] as comma-separated rows.
pub fn grid_csv(values: &[f64]) -> String {
    let (_, w) = picture_shape(values.len());
    let mut s = String::new();
    for row in values.chunks(w) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{what}: expected a JSON array of numbers: {e}")))
}
