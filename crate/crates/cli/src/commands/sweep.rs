use std::fmt::Write as _;
use std::path::PathBuf;

use tads::nn::{train, TrainConfig};
use tads::pca::PcaModel;

use super::{load_pca, load_test, load_train, parse_layers, Ctx};
use crate::config::options;
use crate::data::accuracy;
use crate::error::{exit, CliError};

options!(
    /// Test accuracy against the number of PCA components.
    SweepOpts {
        /// Directory with the IDX files (falls back to $TADS_DATA_DIR).
        data: PathBuf,
        /// PCA model holding at least max(ks) components; fitted when absent.
        pca: PathBuf,
        #[arg(value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(value_delimiter = ',')]
        layers: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        train_limit: usize,
    }
);

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

pub fn run(mut o: SweepOpts, ctx: &Ctx) -> Result<u8, CliError> {
    let ks = o.ks.get_or_insert_with(|| vec![2, 6, 12, 25, 50, 78, 156, 784]).clone();
    let seeds = o.seeds.get_or_insert_with(|| vec![ctx.seed()]).clone();
    let base = TrainConfig {
        epochs: *o.epochs.get_or_insert(5),
        batch_size: *o.batch_size.get_or_insert(300),
        learning_rate: *o.learning_rate.get_or_insert(1e-3),
        layer_widths: parse_layers(o.layers.get_or_insert_with(|| vec![10; 5]))?,
        ..TrainConfig::default()
    };
    if ks.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("--ks and --seeds must be non-empty".into()));
    }
    let mut run = ctx.start("sweep", &o)?;
    let train_set = load_train(&mut run, o.data.as_ref(), o.train_limit)?;
    let test_set = load_test(&mut run, o.data.as_ref())?;
    let kmax = *ks.iter().max().expect("non-empty");
    let m = match &o.pca {
        Some(p) => load_pca(&mut run, p)?,
        None => PcaModel::fit(&train_set, kmax.min(train_set.dim()))?,
    };

    let mut rows = String::from("k,seed,trained_accuracy,builtin_accuracy\n");
    let mut summary = String::from("k,trained_mean,builtin_mean\n");
    let mut per_k: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); ks.len()];
    let mut plain_acc = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let plain = train(&train_set, &cfg, None)?.net;
        let a = accuracy(&test_set, |x| plain.classify(x).ok());
        plain_acc.push(a);
        let _ = writeln!(rows, "unrestricted,{seed},{a:.4},{a:.4}");
        for (slot, &k) in ks.iter().enumerate() {
            let enc = m.encoder(k)?;
            let dec = m.decoder(k)?;
            let encoded = test_set.encode(&enc)?;
            let trained = train(&train_set, &cfg, Some(&enc))?.net;
            let t = accuracy(&encoded, |r| trained.classify(r).ok());
            let builtin = plain.precompose(&dec)?;
            let b = accuracy(&encoded, |r| builtin.classify(r).ok());
            let _ = writeln!(rows, "{k},{seed},{t:.4},{b:.4}");
            per_k[slot].0.push(t);
            per_k[slot].1.push(b);
            println!("k {k} seed {seed}: trained {t:.4} builtin {b:.4}");
        }
    }
    let _ = writeln!(summary, "unrestricted,{:.4},{:.4}", mean(&plain_acc), mean(&plain_acc));
    for (k, (t, b)) in ks.iter().zip(&per_k) {
        let _ = writeln!(summary, "{k},{:.4},{:.4}", mean(t), mean(b));
    }
    run.write("sweep.csv", rows.as_bytes())?;
    run.write("sweep_mean.csv", summary.as_bytes())?;
    run.finish()?;
    Ok(exit::OK)
}
