//! Flat `key = value` run configuration. Every key has a default; unknown
//! keys are errors. Later sources override earlier ones: defaults, then the
//! config file, then individual overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::datasets::manifest::SourceKind;
use crate::datasets::pipeline::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::StreamConfig;
use crate::nn::{NetworkConfig, TrainConfig};
use crate::synth::SynthConfig;
use crate::tfd::TfdKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Holdout,
    Folds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Test,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub source: SourceKind,
    pub out: PathBuf,
    /// Relative paths below resolve against `out`.
    pub store_dir: PathBuf,
    pub checkpoint: PathBuf,

    pub target_rate_hz: f64,
    pub clip_seconds: f64,
    pub image_size: usize,
    pub n_freq_bins: usize,
    pub max_time_rows: usize,
    pub lag_window: Option<usize>,
    pub tfd: TfdKind,
    pub log_compress: Option<f64>,

    pub split: SplitMode,
    pub train_fraction: f64,
    pub stratified: bool,
    pub test_fold: u32,
    pub eval_set: EvalSet,

    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,

    pub window_s: f64,
    pub stride_s: f64,
    pub smoothing: Option<usize>,

    pub synth_classes: usize,
    pub synth_clips_per_class: usize,
    pub synth_rate_hz: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let train = TrainConfig::default();
        let stream = StreamConfig::default();
        let synth = SynthConfig::default();
        RunConfig {
            dataset_root: PathBuf::from("data"),
            source: SourceKind::FolderPerClass,
            out: PathBuf::from("out"),
            store_dir: PathBuf::from("store"),
            checkpoint: PathBuf::from("model.wvdn"),
            target_rate_hz: pipeline.target_rate_hz,
            clip_seconds: pipeline.clip_seconds,
            image_size: pipeline.image_rows,
            n_freq_bins: pipeline.n_freq_bins,
            max_time_rows: pipeline.max_time_rows,
            lag_window: pipeline.lag_window,
            tfd: pipeline.tfd,
            log_compress: pipeline.log_compress,
            split: SplitMode::Holdout,
            train_fraction: 0.8,
            stratified: true,
            test_fold: 1,
            eval_set: EvalSet::Test,
            hidden: 500,
            dropout: 0.25,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            seed: 0,
            window_s: stream.window_s,
            stride_s: stream.stride_s,
            smoothing: stream.smoothing,
            synth_classes: synth.num_classes,
            synth_clips_per_class: synth.clips_per_class,
            synth_rate_hz: synth.sample_rate_hz,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset_root",
    "source",
    "out",
    "store_dir",
    "checkpoint",
    "target_rate_hz",
    "clip_seconds",
    "image_size",
    "n_freq_bins",
    "max_time_rows",
    "lag_window",
    "tfd",
    "log_compress",
    "split",
    "train_fraction",
    "stratified",
    "test_fold",
    "eval_set",
    "hidden",
    "dropout",
    "epochs",
    "batch_size",
    "learning_rate",
    "momentum",
    "seed",
    "window_s",
    "stride_s",
    "smoothing",
    "synth_classes",
    "synth_clips_per_class",
    "synth_rate_hz",
];

const LOCATION_KEYS: &[&str] = &["dataset_root", "out", "store_dir", "checkpoint"];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// `off`/`auto`/`none` mean absent.
fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "off" | "auto" | "none" => Ok(None),
        v => num(key, v).map(Some),
    }
}

fn show<T: ToString>(v: &Option<T>, absent: &str) -> String {
    v.as_ref()
        .map(T::to_string)
        .unwrap_or_else(|| absent.to_string())
}

impl RunConfig {
    /// Parse a config file's text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bool_value = || match value {
            "true" | "yes" | "on" => Ok(true),
            "false" | "no" | "off" => Ok(false),
            _ => Err(Error::Config(format!(
                "{key}: expected true or false, got `{value}`"
            ))),
        };
        match key {
            "dataset_root" => self.dataset_root = value.into(),
            "source" => self.source = SourceKind::parse(value)?,
            "out" => self.out = value.into(),
            "store_dir" => self.store_dir = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "target_rate_hz" => self.target_rate_hz = num(key, value)?,
            "clip_seconds" => self.clip_seconds = num(key, value)?,
            "image_size" => self.image_size = num(key, value)?,
            "n_freq_bins" => self.n_freq_bins = num(key, value)?,
            "max_time_rows" => self.max_time_rows = num(key, value)?,
            "lag_window" => self.lag_window = optional(key, value)?,
            "tfd" => {
                self.tfd = match value {
                    "pseudo_wvd" => TfdKind::PseudoWvd,
                    "wvd" => TfdKind::Wvd,
                    "spectrogram" => TfdKind::Spectrogram,
                    _ => {
                        return Err(Error::Config(format!(
                            "tfd: expected pseudo_wvd, wvd or spectrogram, got `{value}`"
                        )))
                    }
                }
            }
            "log_compress" => self.log_compress = optional(key, value)?,
            "split" => {
                self.split = match value {
                    "holdout" => SplitMode::Holdout,
                    "folds" => SplitMode::Folds,
                    _ => {
                        return Err(Error::Config(format!(
                            "split: expected holdout or folds, got `{value}`"
                        )))
                    }
                }
            }
            "train_fraction" => self.train_fraction = num(key, value)?,
            "stratified" => self.stratified = bool_value()?,
            "test_fold" => self.test_fold = num(key, value)?,
            "eval_set" => {
                self.eval_set = match value {
                    "test" => EvalSet::Test,
                    "train" => EvalSet::Train,
                    "all" => EvalSet::All,
                    _ => {
                        return Err(Error::Config(format!(
                            "eval_set: expected test, train or all, got `{value}`"
                        )))
                    }
                }
            }
            "hidden" => self.hidden = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "window_s" => self.window_s = num(key, value)?,
            "stride_s" => self.stride_s = num(key, value)?,
            "smoothing" => self.smoothing = optional(key, value)?,
            "synth_classes" => self.synth_classes = num(key, value)?,
            "synth_clips_per_class" => self.synth_clips_per_class = num(key, value)?,
            "synth_rate_hz" => self.synth_rate_hz = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical listing of every key, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let split = match self.split {
            SplitMode::Holdout => "holdout",
            SplitMode::Folds => "folds",
        };
        let eval_set = match self.eval_set {
            EvalSet::Test => "test",
            EvalSet::Train => "train",
            EvalSet::All => "all",
        };
        let values = [
            self.dataset_root.display().to_string(),
            self.source.as_str().to_string(),
            self.out.display().to_string(),
            self.store_dir.display().to_string(),
            self.checkpoint.display().to_string(),
            self.target_rate_hz.to_string(),
            self.clip_seconds.to_string(),
            self.image_size.to_string(),
            self.n_freq_bins.to_string(),
            self.max_time_rows.to_string(),
            show(&self.lag_window, "auto"),
            self.tfd.as_str().to_string(),
            show(&self.log_compress, "off"),
            split.to_string(),
            self.train_fraction.to_string(),
            self.stratified.to_string(),
            self.test_fold.to_string(),
            eval_set.to_string(),
            self.hidden.to_string(),
            self.dropout.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            self.momentum.to_string(),
            self.seed.to_string(),
            self.window_s.to_string(),
            self.stride_s.to_string(),
            show(&self.smoothing, "off"),
            self.synth_classes.to_string(),
            self.synth_clips_per_class.to_string(),
            self.synth_rate_hz.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical listing without the file locations, so the
    /// same experiment hashes the same wherever it runs.
    pub fn hash(&self) -> String {
        let settings: String = self
            .to_text()
            .lines()
            .filter(|l| {
                !LOCATION_KEYS
                    .iter()
                    .any(|k| l.starts_with(&format!("{k} =")))
            })
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(settings.as_bytes()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn store_path(&self) -> PathBuf {
        self.resolve(&self.store_dir)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.resolve(&self.checkpoint)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            target_rate_hz: self.target_rate_hz,
            clip_seconds: self.clip_seconds,
            image_rows: self.image_size,
            image_cols: self.image_size,
            n_freq_bins: self.n_freq_bins,
            max_time_rows: self.max_time_rows,
            lag_window: self.lag_window,
            tfd: self.tfd,
            log_compress: self.log_compress,
            ..PipelineConfig::default()
        }
    }

    pub fn network(&self, class_names: &[String]) -> NetworkConfig {
        let mut net = NetworkConfig::scaled(
            self.image_size,
            class_names.len(),
            self.hidden,
            self.dropout,
            self.seed,
        );
        net.class_names = class_names.to_vec();
        net
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            seed: self.seed,
        }
    }

    pub fn stream(&self) -> StreamConfig {
        StreamConfig {
            window_s: self.window_s,
            stride_s: self.stride_s,
            smoothing: self.smoothing,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_classes: self.synth_classes,
            clips_per_class: self.synth_clips_per_class,
            seed: self.seed,
            sample_rate_hz: self.synth_rate_hz,
            clip_seconds: self.clip_seconds,
            ..SynthConfig::default()
        }
    }

    /// Check value ranges that do not depend on any data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.pipeline().validate()?;
        if self.image_size < 8 {
            return fail(format!(
                "image_size {} is below 8, too small for three 2x2 pools",
                self.image_size
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.hidden == 0 {
            return fail("hidden must be positive".into());
        }
        self.train()
            .validate()
            .map_err(|e| Error::Config(strip_config(e)))?;
        if !(self.window_s > 0.0 && self.stride_s > 0.0) {
            return fail("window_s and stride_s must be positive".into());
        }
        if self.smoothing.is_some_and(|k| k % 2 == 0) {
            return fail("smoothing must be odd".into());
        }
        Ok(())
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}
