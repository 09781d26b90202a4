//! Per-clip conditioning and image rendering.

use serde::{Deserialize, Serialize};

use crate::analytic::analytic_signal;
use crate::error::{Error, Result};
use crate::signal::{average_channels, decimate, pad_or_truncate, working_rate, Signal};
use crate::tfd::{
    default_time_stride, log_compress, normalize_image, pseudo_wvd, resize_bilinear, spectrogram,
    wvd, LagWindow, TfdImage, TfdKind, DEFAULT_FREQ_BINS, DEFAULT_MAX_TIME_ROWS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Requested rate; the actual working rate is the nearest exact integer
    /// divisor of the source rate at or above it.
    pub target_rate_hz: f64,
    pub clip_seconds: f64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub n_freq_bins: usize,
    pub max_time_rows: usize,
    /// Odd lag window length; `None` picks the default for the clip length.
    pub lag_window: Option<usize>,
    pub tfd: TfdKind,
    /// Window length when `tfd` is a spectrogram.
    pub spectrogram_window: usize,
    /// Gain for `ln(1 + gain * v / max)` before normalization; off when `None`.
    pub log_compress: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_rate_hz: 4000.0,
            clip_seconds: 4.0,
            image_rows: 300,
            image_cols: 300,
            n_freq_bins: DEFAULT_FREQ_BINS,
            max_time_rows: DEFAULT_MAX_TIME_ROWS,
            lag_window: None,
            tfd: TfdKind::PseudoWvd,
            spectrogram_window: 256,
            log_compress: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.target_rate_hz > 0.0 && self.target_rate_hz.is_finite()) {
            return bad(format!(
                "target rate {} must be positive",
                self.target_rate_hz
            ));
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad(format!(
                "clip length {} s must be positive",
                self.clip_seconds
            ));
        }
        if self.image_rows < 2 || self.image_cols < 2 {
            return bad(format!(
                "image size {}x{} below 2x2",
                self.image_rows, self.image_cols
            ));
        }
        if self.n_freq_bins < 2 || self.max_time_rows < 2 {
            return bad("frequency bins and time rows must be at least 2".into());
        }
        if let Some(len) = self.lag_window {
            if len % 2 == 0 || len > 2 * self.n_freq_bins - 1 {
                return bad(format!(
                    "lag window {len} must be odd and at most {}",
                    2 * self.n_freq_bins - 1
                ));
            }
        }
        if self
            .log_compress
            .is_some_and(|g| !(g > 0.0 && g.is_finite()))
        {
            return bad("log compression gain must be positive".into());
        }
        if self.tfd == TfdKind::Spectrogram && self.spectrogram_window < 2 {
            return bad("spectrogram window must be at least 2".into());
        }
        Ok(())
    }

    /// Rate clips are resampled to, given their source rate.
    pub fn working_rate(&self, source_rate_hz: f64) -> f64 {
        working_rate(source_rate_hz, self.target_rate_hz)
    }

    pub fn image_shape(&self) -> [usize; 2] {
        [self.image_rows, self.image_cols]
    }
}

/// Average channels, decimate to the working rate (skipped when the source
/// is already at or below the target) and fix the length to `clip_seconds`.
pub fn condition_clip(channels: &[Signal], cfg: &PipelineConfig) -> Result<Signal> {
    let mono = average_channels(channels)?;
    let rate = cfg.working_rate(mono.sample_rate_hz());
    let resampled = if rate < mono.sample_rate_hz() {
        decimate(&mono, rate)?
    } else {
        mono
    };
    let len = (cfg.clip_seconds * rate).round().max(1.0) as usize;
    pad_or_truncate(&resampled, len)
}

/// Time-frequency image of a conditioned clip at full resolution.
pub fn raw_image(signal: &Signal, cfg: &PipelineConfig) -> Result<TfdImage> {
    let x = analytic_signal(signal)?;
    let stride = default_time_stride(x.len(), cfg.max_time_rows);
    match cfg.tfd {
        TfdKind::PseudoWvd => {
            let window = match cfg.lag_window {
                Some(len) => LagWindow::hamming(len)?,
                None => LagWindow::default_for(x.len(), cfg.n_freq_bins)?,
            };
            pseudo_wvd(&x, &window, stride, cfg.n_freq_bins)
        }
        TfdKind::Wvd => wvd(&x, stride, cfg.n_freq_bins),
        TfdKind::Spectrogram => spectrogram(&x, cfg.spectrogram_window.min(x.len()), stride),
    }
}

/// Resize, optionally log-compress, and normalize to `[0, 1]`.
pub fn finish_image(raw: &TfdImage, cfg: &PipelineConfig) -> Result<TfdImage> {
    let mut image = resize_bilinear(raw, cfg.image_rows, cfg.image_cols)?;
    if let Some(gain) = cfg.log_compress {
        image = log_compress(&image, gain);
    }
    Ok(normalize_image(&image))
}

/// Full per-clip pipeline from decoded channels to the network input image.
pub fn clip_image(channels: &[Signal], cfg: &PipelineConfig) -> Result<TfdImage> {
    let conditioned = condition_clip(channels, cfg)?;
    finish_image(&raw_image(&conditioned, cfg)?, cfg)
}

/// Pipeline for a signal that has already been conditioned, such as one
/// window of a longer stream.
pub fn signal_image(signal: &Signal, cfg: &PipelineConfig) -> Result<TfdImage> {
    finish_image(&raw_image(signal, cfg)?, cfg)
}
