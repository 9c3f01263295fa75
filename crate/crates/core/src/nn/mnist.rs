//! Labeled datasets and the IDX file format.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::affine::AffineFunction;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("file truncated: header promises {expected} bytes of data, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} outside 0..=9")]
    BadLabel(u8),
    #[error("dataset shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Inputs stored as one flat row-major block.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    split: Option<Split>,
}

impl LabeledDataset {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self, MnistError> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(MnistError::Shape(format!("{} values do not form {} rows of length {dim}", inputs.len(), labels.len())));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(MnistError::Shape("non-finite input".into()));
        }
        Ok(LabeledDataset { dim, inputs, labels, split: None })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self, MnistError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(MnistError::Shape("rows of unequal length".into()));
        }
        LabeledDataset::new(dim, rows.concat(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    /// Applies `f` to every input; labels are kept.
    pub fn encode(&self, f: &AffineFunction) -> Result<LabeledDataset, MnistError> {
        if f.input_dim() != self.dim {
            return Err(MnistError::Shape(format!("encoder expects {} inputs, dataset has {}", f.input_dim(), self.dim)));
        }
        let mut out = Vec::with_capacity(self.len() * f.output_dim());
        for x in self.inputs() {
            out.extend(f.eval(x).expect("dimension checked"));
        }
        Ok(LabeledDataset { dim: f.output_dim(), inputs: out, labels: self.labels.clone(), split: self.split })
    }

    /// The first `n` items.
    pub fn take(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            dim: self.dim,
            inputs: self.inputs[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, MnistError> {
    fs::read(path).map_err(|source| MnistError::Io { path: path.display().to_string(), source })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, MnistError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(MnistError::Truncated { expected: at + 4, found: bytes.len() })
}

/// Parses an IDX image file into `(rows·cols, pixels scaled to [0, 1])`.
pub fn load_idx_images(bytes: &[u8]) -> Result<(usize, Vec<f64>), MnistError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(MnistError::BadMagic { found: magic, expected: IMAGE_MAGIC });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * dim {
        return Err(MnistError::Truncated { expected: count * dim, found: body.len() });
    }
    Ok((dim, body.iter().map(|b| f64::from(*b) / 255.0).collect()))
}

pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, MnistError> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(MnistError::BadMagic { found: magic, expected: LABEL_MAGIC });
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(MnistError::Truncated { expected: count, found: body.len() });
    }
    body.iter().map(|b| if *b <= 9 { Ok(usize::from(*b)) } else { Err(MnistError::BadLabel(*b)) }).collect()
}

/// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<LabeledDataset, MnistError> {
    let images = read(&dir.join(format!("{}-images-idx3-ubyte", split.prefix())))?;
    let labels = read(&dir.join(format!("{}-labels-idx1-ubyte", split.prefix())))?;
    let (dim, inputs) = load_idx_images(&images)?;
    let labels = load_idx_labels(&labels)?;
    if inputs.len() / dim.max(1) != labels.len() {
        return Err(MnistError::CountMismatch { images: inputs.len() / dim.max(1), labels: labels.len() });
    }
    let mut ds = LabeledDataset::new(dim, inputs, labels)?;
    ds.split = Some(split);
    Ok(ds)
}
