use std::path::PathBuf;

use serde::Serialize;

use tads::nn::{train, Optimizer, TrainConfig};
use tads::pca::PcaModel;

use super::{load_pca, load_test, load_train, parse_layers, Ctx};
use crate::config::options;
use crate::data::accuracy;
use crate::error::{exit, CliError};

options!(
    /// Train a ReLU classifier, optionally on PCA coordinates.
    TrainOpts {
        /// Directory with the IDX files (falls back to $TADS_DATA_DIR).
        data: PathBuf,
        /// Hidden layer widths.
        #[arg(value_delimiter = ',')]
        layers: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        /// adam or sgd.
        optimizer: String,
        /// Train on the top-k PCA coordinates; the saved network takes k inputs.
        k: usize,
        /// PCA model to encode with; fitted on the training split when absent.
        pca: PathBuf,
        /// Use only the first n training items.
        train_limit: usize,
    }
);

#[derive(Serialize)]
struct AccuracyLog<'a> {
    k: Option<usize>,
    train_items: usize,
    test_items: usize,
    test_accuracy: f64,
    epoch_losses: &'a [f64],
}

pub fn run(mut o: TrainOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let layers = parse_layers(o.layers.get_or_insert_with(|| vec![10; 5]))?;
    let optimizer = match o.optimizer.get_or_insert_with(|| "adam".into()).as_str() {
        "adam" => Optimizer::Adam,
        "sgd" => Optimizer::Sgd,
        other => return Err(CliError::Usage(format!("unknown optimizer {other:?}; use adam or sgd"))),
    };
    let cfg = TrainConfig {
        epochs: *o.epochs.get_or_insert(5),
        batch_size: *o.batch_size.get_or_insert(300),
        learning_rate: *o.learning_rate.get_or_insert(1e-3),
        seed: ctx.seed(),
        layer_widths: layers,
        classes: 10,
        optimizer,
    };
    let mut run = ctx.start("train", &o)?;
    let train_set = load_train(&mut run, o.data.as_ref(), o.train_limit)?;
    let test_set = load_test(&mut run, o.data.as_ref())?;

    let model = match (o.k, &o.pca) {
        (None, _) => None,
        (Some(k), Some(path)) => Some((load_pca(&mut run, path)?, k)),
        (Some(k), None) => {
            let m = PcaModel::fit(&train_set, k)?;
            run.write("pca.json", m.to_json().as_bytes())?;
            Some((m, k))
        }
    };
    let encoder = model.as_ref().map(|(m, k)| m.encoder(*k)).transpose()?;
    let trained = train(&train_set, &cfg, encoder.as_ref())?;
    let net = &trained.net;
    let test_accuracy = match &encoder {
        None => accuracy(&test_set, |x| net.classify(x).ok()),
        Some(e) => accuracy(&test_set.encode(e)?, |x| net.classify(x).ok()),
    };
    run.write("weights.json", net.to_json().as_bytes())?;
    let log = AccuracyLog {
        k: o.k,
        train_items: train_set.len(),
        test_items: test_set.len(),
        test_accuracy,
        epoch_losses: &trained.epoch_losses,
    };
    let text = serde_json::to_string_pretty(&log).expect("plain data serializes") + "\n";
    run.write("accuracy.json", text.as_bytes())?;
    run.note("test_accuracy", test_accuracy);
    println!("test accuracy {test_accuracy:.4}; weights in {}", run.out.join("weights.json").display());
    run.finish()?;
    Ok(exit::OK)
}
