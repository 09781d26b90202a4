//! End-to-end commands over a [`RunConfig`]: synthesize, preprocess, train,
//! evaluate, stream and export. Every output file is written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{EvalSet, RunConfig, SplitMode};
use crate::datasets::manifest::load_manifest;
use crate::datasets::pipeline::{condition_clip, finish_image, raw_image};
use crate::datasets::split::{split_folds, split_holdout};
use crate::datasets::store::{preprocess_dataset, ArrayStore, PreprocessReport, StoreEntry};
use crate::datasets::wav::read_wav;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, stream_csv, stream_infer, EvalReport, StreamPrediction};
use crate::io::write_atomic;
use crate::nn::checkpoint;
use crate::nn::train::{train_observed, EpochStats};
use crate::nn::Network;
use crate::synth::write_synth_dataset;
use crate::tfd::{normalize_image, TfdImage};

pub const HISTORY_FILE: &str = "history.csv";
/// Highest-evaluation-accuracy snapshot, for inspection only: choosing it
/// looks at the test part, so reports use the final checkpoint.
pub const BEST_CHECKPOINT_FILE: &str = "best_eval.wvdn";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";

pub fn run_synth(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    write_synth_dataset(&cfg.synth(), out)
}

#[derive(Debug, Clone)]
pub struct PreprocessSummary {
    pub report: PreprocessReport,
    pub store_dir: PathBuf,
    pub class_names: Vec<String>,
    /// Stored clips per class.
    pub counts: Vec<usize>,
}

pub fn run_preprocess(cfg: &RunConfig, force: bool) -> Result<PreprocessSummary> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.dataset_root, cfg.source)?;
    let store_dir = cfg.store_path();
    let report = preprocess_dataset(&manifest, &cfg.pipeline(), &store_dir, force)?;
    let store = ArrayStore::open(&store_dir)?;
    let mut counts = vec![0; store.class_names().len()];
    for e in store.entries() {
        counts[e.label] += 1;
    }
    Ok(PreprocessSummary {
        report,
        store_dir,
        class_names: manifest.class_names,
        counts,
    })
}

/// The store and its (train, test) partition under the configured split.
pub fn split_store(cfg: &RunConfig) -> Result<(ArrayStore, Vec<StoreEntry>, Vec<StoreEntry>)> {
    let store = ArrayStore::open(&cfg.store_path())?;
    if store.meta().pipeline != cfg.pipeline() {
        return Err(Error::Config(format!(
            "{} was built with different preprocessing settings; run preprocess again",
            store.dir().display()
        )));
    }
    let (train, test) = match cfg.split {
        SplitMode::Holdout => split_holdout(
            store.entries(),
            cfg.train_fraction,
            cfg.seed,
            cfg.stratified,
        )?,
        SplitMode::Folds => split_folds(store.entries(), cfg.test_fold)?,
    };
    Ok((store, train, test))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochStats>,
    pub train_count: usize,
    pub test_count: usize,
}

/// Train on the training part of the split, monitoring the test part each
/// epoch, and write the final network and the per-epoch history.
pub fn run_train(cfg: &RunConfig, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainSummary> {
    cfg.validate()?;
    let (store, train_entries, test_entries) = split_store(cfg)?;
    let train_set = store.examples(&train_entries)?;
    let test_set = store.examples(&test_entries)?;
    let net = Network::<f32>::new(cfg.network(store.class_names()))?;
    let outcome = train_observed(net, &train_set, &test_set, &cfg.train(), on_epoch)?;
    let checkpoint_path = cfg.checkpoint_path();
    checkpoint::save(&outcome.network, &checkpoint_path)?;
    checkpoint::save(&outcome.best, &cfg.out.join(BEST_CHECKPOINT_FILE))?;
    write_atomic(
        &cfg.out.join(HISTORY_FILE),
        history_csv(&outcome.history).as_bytes(),
    )?;
    Ok(TrainSummary {
        checkpoint: checkpoint_path,
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        train_count: train_set.len(),
        test_count: test_set.len(),
    })
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,train_accuracy,eval_accuracy\n");
    for h in history {
        let eval = h
            .eval_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{}",
            h.epoch, h.train_loss, h.train_accuracy, eval
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a> {
    pub seed: u64,
    pub config_hash: String,
    pub checkpoint_sha256: String,
    pub eval_set: &'a str,
    #[serde(flatten)]
    pub report: &'a EvalReport,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub report: EvalReport,
    pub text: String,
    pub json: String,
}

/// Evaluate the checkpoint on the configured part of the split and write
/// the text table, the JSON report and the confusion matrix.
pub fn run_evaluate(cfg: &RunConfig) -> Result<EvaluateSummary> {
    cfg.validate()?;
    let (store, train, test) = split_store(cfg)?;
    let (entries, label) = match cfg.eval_set {
        EvalSet::Test => (test, "test"),
        EvalSet::Train => (train, "train"),
        EvalSet::All => (store.entries().to_vec(), "all"),
    };
    let checkpoint_path = cfg.checkpoint_path();
    let bytes = std::fs::read(&checkpoint_path).map_err(|e| Error::io(&checkpoint_path, e))?;
    let net: Network<f32> = checkpoint::from_bytes(&bytes)?;
    let names = &net.config().class_names;
    if !names.is_empty() && names.as_slice() != store.class_names() {
        return Err(Error::Data(format!(
            "checkpoint classes {names:?} differ from store classes {:?}",
            store.class_names()
        )));
    }
    let report = evaluate(&net, &store.examples(&entries)?, store.class_names())?;
    let file = ReportFile {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        checkpoint_sha256: hex::encode(Sha256::digest(&bytes)),
        eval_set: label,
        report: &report,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Data(e.to_string()))? + "\n";
    let text = report.to_text();
    write_atomic(&cfg.out.join(REPORT_TEXT_FILE), text.as_bytes())?;
    write_atomic(&cfg.out.join(REPORT_JSON_FILE), json.as_bytes())?;
    write_atomic(
        &cfg.out.join(CONFUSION_FILE),
        report.confusion_csv().as_bytes(),
    )?;
    Ok(EvaluateSummary { report, text, json })
}

/// Class names stored with a checkpoint, or `class_<i>` when it has none.
pub fn class_names_of(net: &Network<f32>) -> Vec<String> {
    let names = &net.config().class_names;
    if names.len() == net.num_classes() {
        names.clone()
    } else {
        (0..net.num_classes())
            .map(|i| format!("class_{i}"))
            .collect()
    }
}

/// Sliding-window predictions for a recording, written as CSV to `out_csv`.
pub fn run_stream(cfg: &RunConfig, wav: &Path, out_csv: &Path) -> Result<Vec<StreamPrediction>> {
    cfg.validate()?;
    let net: Network<f32> = checkpoint::load(&cfg.checkpoint_path())?;
    let channels = read_wav(wav)?;
    let predictions = stream_infer(&net, &channels, &cfg.pipeline(), &cfg.stream())?;
    write_atomic(
        out_csv,
        stream_csv(&predictions, &class_names_of(&net)).as_bytes(),
    )?;
    Ok(predictions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportStage {
    /// Full-resolution distribution before resizing, signed values.
    Raw,
    /// The resized, normalized network input.
    Final,
}

/// Render one clip and write it as PNG or CSV, chosen by the extension of `out`.
/// PNG output of the raw stage is normalized first so it is viewable.
pub fn run_export(
    cfg: &RunConfig,
    clip: &Path,
    out: &Path,
    stage: ExportStage,
) -> Result<TfdImage> {
    cfg.validate()?;
    let pipeline = cfg.pipeline();
    let conditioned = condition_clip(&read_wav(clip)?, &pipeline)?;
    let raw = raw_image(&conditioned, &pipeline)?;
    let image = match stage {
        ExportStage::Raw => raw,
        ExportStage::Final => finish_image(&raw, &pipeline)?,
    };
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => match stage {
            ExportStage::Raw => normalize_image(&image).to_png()?,
            ExportStage::Final => image.to_png()?,
        },
        "csv" => image.to_csv().into_bytes(),
        _ => {
            return Err(Error::invalid(format!(
                "{}: export format must be .png or .csv",
                out.display()
            )))
        }
    };
    write_atomic(out, &bytes)?;
    Ok(image)
}
