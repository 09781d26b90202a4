//! Real-valued waveforms and the conditioning steps applied before any
//! time-frequency transform: channel averaging, anti-alias filtering,
//! integer-factor decimation and fixed-length standardization.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default tap count of the anti-alias filter used by [`decimate`].
pub const ANTIALIAS_TAPS: usize = 63;

/// Default cutoff of the anti-alias filter, as a fraction of the target Nyquist rate.
pub const ANTIALIAS_FRACTION: f64 = 0.45;

/// A uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Signal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Copy of the samples in `start..end`, clamped to the signal.
    pub fn slice(&self, start: usize, end: usize) -> Signal {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Signal {
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub cutoff_hz: f64,
    pub design: String,
}

impl FirFilter {
    /// Magnitude of the filter's frequency response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (i, &t)| {
                let phase = w * i as f64;
                (re + t * phase.cos(), im - t * phase.sin())
            });
        re.hypot(im)
    }

    /// Zero-padded "same" convolution: output sample `n` is centred on input sample `n`.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.apply_strided(input, 1)
    }

    /// Filter and keep every `step`-th output sample, starting at 0. Only the
    /// kept samples are computed.
    pub(crate) fn apply_strided(&self, input: &[f64], step: usize) -> Vec<f64> {
        let half = (self.taps.len() / 2) as isize;
        let len = input.len() as isize;
        (0..input.len())
            .step_by(step)
            .map(|n| {
                let n = n as isize;
                self.taps
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &t)| {
                        let j = n + half - i as isize;
                        (0..len).contains(&j).then(|| t * input[j as usize])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Mean of equal-length, equal-rate channels.
pub fn average_channels(channels: &[Signal]) -> Result<Signal> {
    let first = channels
        .first()
        .ok_or_else(|| Error::invalid("average_channels: no channels"))?;
    for (i, ch) in channels.iter().enumerate().skip(1) {
        if ch.len() != first.len() {
            return Err(Error::shape(format!(
                "channel {i} has {} samples, channel 0 has {}",
                ch.len(),
                first.len()
            )));
        }
        if ch.sample_rate_hz != first.sample_rate_hz {
            return Err(Error::shape(format!(
                "channel {i} is sampled at {} Hz, channel 0 at {} Hz",
                ch.sample_rate_hz, first.sample_rate_hz
            )));
        }
    }
    if channels.len() == 1 {
        return Ok(first.clone());
    }
    let scale = 1.0 / channels.len() as f64;
    let samples = (0..first.len())
        .map(|i| channels.iter().map(|c| c.samples[i]).sum::<f64>() * scale)
        .collect();
    Signal::new(samples, first.sample_rate_hz)
}

/// Hamming-windowed sinc low-pass normalized to unit DC gain.
pub fn design_lowpass(cutoff_hz: f64, sample_rate_hz: f64, num_taps: usize) -> Result<FirFilter> {
    if num_taps == 0 || num_taps % 2 == 0 {
        return Err(Error::invalid(format!(
            "tap count must be odd and positive, got {num_taps}"
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let nyquist = sample_rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
        )));
    }
    let fc = cutoff_hz / sample_rate_hz;
    let mid = (num_taps / 2) as f64;
    let denom = (num_taps - 1).max(1) as f64;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|i| {
            let x = i as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos();
            sinc * window
        })
        .collect();
    // Mirror the upper half so symmetry is exact rather than up to rounding.
    for i in 0..num_taps / 2 {
        taps[num_taps - 1 - i] = taps[i];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(FirFilter {
        taps,
        cutoff_hz,
        design: format!("hamming-sinc/{num_taps}"),
    })
}

/// Integer decimation factor from `source_hz` to `target_hz`, if one exists.
fn integer_ratio(source_hz: f64, target_hz: f64) -> Option<usize> {
    let ratio = source_hz / target_hz;
    let k = ratio.round();
    ((ratio - k).abs() <= 1e-9 * ratio && k >= 1.0).then_some(k as usize)
}

/// Anti-alias filter then keep every k-th sample, with the default filter settings.
pub fn decimate(signal: &Signal, target_rate_hz: f64) -> Result<Signal> {
    decimate_with(signal, target_rate_hz, ANTIALIAS_FRACTION)
}

/// [`decimate`] with an explicit cutoff, given as a fraction of the target Nyquist rate.
pub fn decimate_with(signal: &Signal, target_rate_hz: f64, cutoff_fraction: f64) -> Result<Signal> {
    let source = signal.sample_rate_hz;
    if !(target_rate_hz > 0.0) {
        return Err(Error::invalid("target rate must be positive"));
    }
    if target_rate_hz > source {
        return Err(Error::invalid(format!(
            "cannot decimate {source} Hz up to {target_rate_hz} Hz"
        )));
    }
    let factor = integer_ratio(source, target_rate_hz).ok_or_else(|| {
        Error::invalid(format!(
            "{source} Hz -> {target_rate_hz} Hz is not an integer ratio; \
             resample first or request {} Hz",
            working_rate(source, target_rate_hz)
        ))
    })?;
    if factor == 1 {
        return Ok(signal.clone());
    }
    let filter = design_lowpass(
        cutoff_fraction * target_rate_hz / 2.0,
        source,
        ANTIALIAS_TAPS,
    )?;
    Signal::new(
        filter.apply_strided(&signal.samples, factor),
        target_rate_hz,
    )
}

/// Working rate for a requested target: the source rate divided by the
/// largest integer that divides it exactly and keeps the result at or above
/// `requested_hz`. Sources already at or below the request are returned unchanged.
pub fn working_rate(source_hz: f64, requested_hz: f64) -> f64 {
    if source_hz <= requested_hz || requested_hz <= 0.0 {
        return source_hz;
    }
    let max_k = (source_hz / requested_hz).floor() as usize;
    (1..=max_k)
        .rev()
        .map(|k| source_hz / k as f64)
        .find(|rate| (rate - rate.round()).abs() < 1e-9)
        .unwrap_or(source_hz)
}

/// Centered crop or symmetric zero pad to exactly `target_len` samples.
pub fn pad_or_truncate(signal: &Signal, target_len: usize) -> Result<Signal> {
    if target_len == 0 {
        return Err(Error::invalid("target length must be positive"));
    }
    let len = signal.len();
    let samples = if len >= target_len {
        let start = (len - target_len) / 2;
        signal.samples[start..start + target_len].to_vec()
    } else {
        let left = (target_len - len) / 2;
        let mut out = vec![0.0; target_len];
        out[left..left + len].copy_from_slice(&signal.samples);
        out
    };
    Signal::new(samples, signal.sample_rate_hz)
}
