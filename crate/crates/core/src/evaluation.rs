//! Classification reports and sliding-window inference over long recordings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::pipeline::{condition_clip, signal_image, PipelineConfig};
use crate::error::{Error, Result};
use crate::nn::{Example, Network, Real, Tensor};
use crate::signal::{pad_or_truncate, Signal};
use crate::tfd::TfdImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    /// Classes whose precision or recall had a zero denominator and was set to 0.
    pub zero_division: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        class_names: &[String],
    ) -> Result<Self> {
        let k = class_names.len();
        if truth.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::invalid("cannot evaluate an empty test set"));
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(Error::invalid(format!(
                    "class {} outside {k} classes",
                    t.max(p)
                )));
            }
            confusion[t][p] += 1;
        }
        let total = truth.len();
        let mut zero_division = Vec::new();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                if precision.is_none() || recall.is_none() {
                    zero_division.push(class_names[c].clone());
                }
                let (precision, recall) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    name: class_names[c].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let average = |weight: &dyn Fn(&ClassMetrics) -> f64| {
            let norm: f64 = per_class.iter().map(weight).sum();
            let mean = |f: &dyn Fn(&ClassMetrics) -> f64| {
                per_class.iter().map(|m| weight(m) * f(m)).sum::<f64>() / norm
            };
            AverageMetrics {
                precision: mean(&|m| m.precision),
                recall: mean(&|m| m.recall),
                f1: mean(&|m| m.f1),
                support: total,
            }
        };
        let macro_avg = average(&|_| 1.0);
        let weighted_avg = average(&|m| m.support as f64);
        let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
        Ok(EvalReport {
            confusion,
            per_class,
            accuracy: trace as f64 / total as f64,
            macro_avg,
            weighted_avg,
            zero_division,
        })
    }

    pub fn total(&self) -> usize {
        self.weighted_avg.support
    }

    /// Plain-text table with two-decimal metrics: one row per class, then
    /// accuracy, macro and weighted averages.
    pub fn to_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|m| m.name.chars().count())
            .chain(["weighted avg".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$}  {:>9} {:>9} {:>9} {:>9}\n",
            "", "precision", "recall", "f1-score", "support"
        );
        let row = |out: &mut String, name: &str, p: f64, r: f64, f: f64, s: usize| {
            let _ = writeln!(out, "{name:>width$}  {p:>9.2} {r:>9.2} {f:>9.2} {s:>9}");
        };
        for m in &self.per_class {
            row(&mut out, &m.name, m.precision, m.recall, m.f1, m.support);
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$}  {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy",
            "",
            "",
            self.accuracy,
            self.total()
        );
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            row(&mut out, name, a.precision, a.recall, a.f1, a.support);
        }
        if !self.zero_division.is_empty() {
            let _ = writeln!(
                out,
                "\nzero denominator (metric set to 0): {}",
                self.zero_division.join(", ")
            );
        }
        out
    }

    /// Confusion matrix as CSV with class names on both axes.
    pub fn confusion_csv(&self) -> String {
        let names: Vec<&str> = self.per_class.iter().map(|m| m.name.as_str()).collect();
        let mut out = format!("true\\predicted,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }
}

/// Predict every example and build the report. Fails when the network's
/// class count differs from `class_names`.
pub fn evaluate<T: Real + Send + Sync>(
    net: &Network<T>,
    examples: &[Example<T>],
    class_names: &[String],
) -> Result<EvalReport> {
    if net.num_classes() != class_names.len() {
        return Err(Error::invalid(format!(
            "network has {} classes, test set has {}",
            net.num_classes(),
            class_names.len()
        )));
    }
    let predicted = map_maybe_parallel(examples, |e| net.predict(&e.input).map(|p| p.class))?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    EvalReport::from_predictions(&truth, &predicted, class_names)
}

fn map_maybe_parallel<I: Sync, O: Send>(
    items: &[I],
    f: impl Fn(&I) -> Result<O> + Sync + Send,
) -> Result<Vec<O>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Network input tensor `[1, rows, cols]` for an image.
pub fn image_tensor<T: Real>(image: &TfdImage) -> Tensor<T> {
    Tensor::from_f64(vec![1, image.rows(), image.cols()], image.values())
        .expect("image dimensions are positive")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPrediction {
    pub start_s: f64,
    pub end_s: f64,
    pub class: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub window_s: f64,
    pub stride_s: f64,
    /// Odd number of windows for a centred majority vote; `None` or 1 disables it.
    pub smoothing: Option<usize>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            window_s: 4.0,
            stride_s: 1.0,
            smoothing: None,
        }
    }
}

/// `floor((duration - window) / stride) + 1`, or 0 when the signal is
/// shorter than one window.
pub fn window_count(duration_s: f64, window_s: f64, stride_s: f64) -> usize {
    if duration_s + 1e-9 < window_s {
        return 0;
    }
    ((duration_s - window_s) / stride_s + 1e-9).floor() as usize + 1
}

/// Classify overlapping windows of `signal`, ordered by start time.
///
/// The recording is averaged and decimated once; each window then goes
/// through the analytic signal, time-frequency image, resize and
/// normalization steps before prediction.
pub fn stream_infer<T: Real + Send + Sync>(
    net: &Network<T>,
    channels: &[Signal],
    pipeline: &PipelineConfig,
    stream: &StreamConfig,
) -> Result<Vec<StreamPrediction>> {
    if !(stream.window_s > 0.0 && stream.stride_s > 0.0) {
        return Err(Error::invalid("window and stride must be positive"));
    }
    if let Some(k) = stream.smoothing {
        if k == 0 || k % 2 == 0 {
            return Err(Error::invalid(format!("smoothing span {k} must be odd")));
        }
    }
    let duration = channels.first().map(Signal::duration_s).unwrap_or(0.0);
    let count = window_count(duration, stream.window_s, stream.stride_s);
    if count == 0 {
        return Err(Error::invalid(format!(
            "recording is {duration:.3} s; at least {} s is needed for one window",
            stream.window_s
        )));
    }
    // Conditioning the whole recording at its own length averages and
    // decimates without padding or cropping.
    let whole = PipelineConfig {
        clip_seconds: duration,
        ..pipeline.clone()
    };
    let conditioned = condition_clip(channels, &whole)?;
    let rate = conditioned.sample_rate_hz();
    let win = (stream.window_s * rate).round() as usize;
    let starts: Vec<usize> = (0..count)
        .map(|i| (i as f64 * stream.stride_s * rate).round() as usize)
        .collect();
    let mut predictions = map_maybe_parallel(&starts, |&start| {
        let end = (start + win).min(conditioned.len());
        let window = pad_or_truncate(&conditioned.slice(start, end), win)?;
        let image = signal_image(&window, pipeline)?;
        let p = net.predict(&image_tensor(&image))?;
        Ok(StreamPrediction {
            start_s: start as f64 / rate,
            end_s: start as f64 / rate + stream.window_s,
            class: p.class,
            probabilities: p.probabilities,
        })
    })?;
    if let Some(k) = stream.smoothing.filter(|&k| k > 1) {
        let raw: Vec<usize> = predictions.iter().map(|p| p.class).collect();
        for (i, p) in predictions.iter_mut().enumerate() {
            p.class = majority(
                &raw[i.saturating_sub(k / 2)..(i + k / 2 + 1).min(raw.len())],
                net.num_classes(),
            );
        }
    }
    Ok(predictions)
}

/// Most frequent class; the lowest index wins ties.
fn majority(classes: &[usize], num_classes: usize) -> usize {
    let mut votes = vec![0usize; num_classes];
    for &c in classes {
        votes[c] += 1;
    }
    (0..num_classes).fold(0, |best, c| if votes[c] > votes[best] { c } else { best })
}

/// `start_s,end_s,pred_class,pred_name,p0..p{k-1}`.
pub fn stream_csv(predictions: &[StreamPrediction], class_names: &[String]) -> String {
    let mut out = String::from("start_s,end_s,pred_class,pred_name");
    for i in 0..class_names.len() {
        let _ = write!(out, ",p{i}");
    }
    out.push('\n');
    for p in predictions {
        let name = class_names.get(p.class).map(String::as_str).unwrap_or("");
        let _ = write!(out, "{:.3},{:.3},{},{}", p.start_s, p.end_s, p.class, name);
        for v in &p.probabilities {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}
