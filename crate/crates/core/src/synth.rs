//! Seeded synthetic clips for self-contained training runs: jittered pure
//! tones, linear chirps and band-limited noise bursts.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::wav::encode_wav_pcm16;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::signal::{design_lowpass, Signal};

/// Directory names, ordered so that sorted folder-per-class loading gives
/// tone = 0, chirp = 1, noise = 2.
pub const CLASS_DIRS: [&str; 3] = ["0_tone", "1_chirp", "2_noise"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub clips_per_class: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub clip_seconds: f64,
    pub amplitude: f64,
    /// Standard deviation of white noise added to every clip.
    pub noise_floor: f64,
    pub tone_band_hz: (f64, f64),
    pub chirp_start_hz: (f64, f64),
    pub chirp_span_hz: (f64, f64),
    pub noise_band_hz: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 3,
            clips_per_class: 50,
            seed: 0,
            sample_rate_hz: 8000,
            clip_seconds: 4.0,
            amplitude: 0.5,
            noise_floor: 0.01,
            tone_band_hz: (300.0, 700.0),
            chirp_start_hz: (100.0, 500.0),
            chirp_span_hz: (300.0, 500.0),
            noise_band_hz: (200.0, 800.0),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=CLASS_DIRS.len()).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "synthetic data has 1 to {} classes, asked for {}",
                CLASS_DIRS.len(),
                self.num_classes
            )));
        }
        if self.sample_rate_hz == 0 || !(self.clip_seconds > 0.0) {
            return Err(Error::Config(
                "sample rate and clip length must be positive".into(),
            ));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let top = [
            self.tone_band_hz.1,
            self.chirp_start_hz.1 + self.chirp_span_hz.1,
            self.noise_band_hz.1,
        ];
        if top.iter().any(|&f| f >= nyquist) {
            return Err(Error::Config(format!(
                "synthetic band reaches the {nyquist} Hz Nyquist limit"
            )));
        }
        for (lo, hi) in [
            self.tone_band_hz,
            self.chirp_start_hz,
            self.chirp_span_hz,
            self.noise_band_hz,
        ] {
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::Config(format!("bad range ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    fn len(&self) -> usize {
        (self.clip_seconds * self.sample_rate_hz as f64).round() as usize
    }

    fn rate(&self) -> f64 {
        self.sample_rate_hz as f64
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Constant-frequency sinusoid with random phase.
pub fn tone(freq_hz: f64, phase: f64, amplitude: f64, len: usize, rate: f64) -> Vec<f64> {
    (0..len)
        .map(|n| amplitude * (2.0 * PI * freq_hz * n as f64 / rate + phase).sin())
        .collect()
}

/// Linear chirp sweeping `f0_hz` to `f1_hz` across `len` samples.
pub fn chirp(f0_hz: f64, f1_hz: f64, amplitude: f64, len: usize, rate: f64) -> Vec<f64> {
    let duration = len as f64 / rate;
    let slope = (f1_hz - f0_hz) / duration;
    (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            amplitude * (2.0 * PI * (f0_hz * t + 0.5 * slope * t * t)).sin()
        })
        .collect()
}

fn noise_burst(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let len = cfg.len();
    let rate = cfg.rate();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..len).map(|_| normal.sample(rng)).collect();
    let (lo, hi) = cfg.noise_band_hz;
    let upper = design_lowpass(hi, rate, 127)?.apply(&white);
    let band: Vec<f64> = if lo > 0.0 {
        let lower = design_lowpass(lo, rate, 127)?.apply(&white);
        upper.iter().zip(&lower).map(|(a, b)| a - b).collect()
    } else {
        upper
    };
    let mut envelope = vec![0.0; len];
    for _ in 0..rng.random_range(2..=4) {
        let width = ((rng.random_range(0.3..0.8) * rate) as usize).clamp(2, len);
        let start = rng.random_range(0..=len - width);
        for i in 0..width {
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (width - 1) as f64).cos();
            envelope[start + i] = f64::max(envelope[start + i], hann);
        }
    }
    let shaped: Vec<f64> = band.iter().zip(&envelope).map(|(x, e)| x * e).collect();
    let peak = shaped.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(shaped
        .iter()
        .map(|v| {
            if peak > 0.0 {
                cfg.amplitude * v / peak
            } else {
                0.0
            }
        })
        .collect())
}

/// Clip `index` of class `class`, deterministic in (`cfg.seed`, class, index).
pub fn synth_clip(cfg: &SynthConfig, class: usize, index: usize) -> Result<Signal> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((class * cfg.clips_per_class.max(1) + index) as u64);
    let (len, rate) = (cfg.len(), cfg.rate());
    let mut x = match class {
        0 => {
            let f = uniform(&mut rng, cfg.tone_band_hz);
            tone(f, rng.random_range(0.0..2.0 * PI), cfg.amplitude, len, rate)
        }
        1 => {
            let f0 = uniform(&mut rng, cfg.chirp_start_hz);
            let f1 = f0 + uniform(&mut rng, cfg.chirp_span_hz);
            chirp(f0, f1, cfg.amplitude, len, rate)
        }
        2 => noise_burst(cfg, &mut rng)?,
        _ => return Err(Error::invalid(format!("no synthetic class {class}"))),
    };
    if cfg.noise_floor > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_floor).expect("positive deviation");
        for v in &mut x {
            *v += normal.sample(&mut rng);
        }
    }
    Signal::new(x, rate)
}

/// Write `clips_per_class` PCM16 clips per class into `<out>/<class dir>/`.
/// Returns the written paths in class order.
pub fn write_synth_dataset(cfg: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut paths = Vec::new();
    for (class, dir) in CLASS_DIRS.iter().enumerate().take(cfg.num_classes) {
        for i in 0..cfg.clips_per_class {
            let clip = synth_clip(cfg, class, i)?;
            let path = out.join(dir).join(format!("{}_{i:04}.wav", &dir[2..]));
            write_atomic(
                &path,
                &encode_wav_pcm16(&[clip.samples()], cfg.sample_rate_hz)?,
            )?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Labelled stretch of a synthetic stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub class: usize,
}

/// Tone, then chirp, then tone, each `segment_s` long: a 500 Hz tone and a
/// chirp sweeping 150 Hz to 850 Hz, plus the configured noise floor.
pub fn tone_chirp_tone(cfg: &SynthConfig, segment_s: f64) -> Result<(Signal, Vec<Segment>)> {
    cfg.validate()?;
    let rate = cfg.rate();
    let len = (segment_s * rate).round() as usize;
    let mut x = tone(500.0, 0.0, cfg.amplitude, len, rate);
    x.extend(chirp(150.0, 850.0, cfg.amplitude, len, rate));
    x.extend(tone(500.0, 0.0, cfg.amplitude, len, rate));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    if cfg.noise_floor > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_floor).expect("positive deviation");
        for v in &mut x {
            *v += normal.sample(&mut rng);
        }
    }
    let seg = len as f64 / rate;
    let segments = [0, 1, 0]
        .iter()
        .enumerate()
        .map(|(i, &class)| Segment {
            start_s: i as f64 * seg,
            end_s: (i + 1) as f64 * seg,
            class,
        })
        .collect();
    Ok((Signal::new(x, rate)?, segments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::manifest::{load_manifest, SourceKind};

    fn small() -> SynthConfig {
        SynthConfig {
            clips_per_class: 3,
            clip_seconds: 0.5,
            seed: 7,
            ..SynthConfig::default()
        }
    }

    /// Frequency of the largest bin of a direct DFT.
    fn dft_peak_hz(x: &[f64], rate: f64) -> f64 {
        let n = x.len();
        let best = (1..n / 2)
            .map(|k| {
                let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                    let a = 2.0 * PI * (k * i) as f64 / n as f64;
                    (re + v * a.cos(), im - v * a.sin())
                });
                (k, re * re + im * im)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        best as f64 * rate / n as f64
    }

    #[test]
    fn tone_clip_peak_lies_in_band() {
        let cfg = small();
        for i in 0..3 {
            let clip = synth_clip(&cfg, 0, i).unwrap();
            let f = dft_peak_hz(clip.samples(), clip.sample_rate_hz());
            assert!((300.0..=700.0).contains(&f), "{f}");
        }
    }

    #[test]
    fn layout_and_determinism() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small();
        let paths = write_synth_dataset(&cfg, a.path()).unwrap();
        write_synth_dataset(&cfg, b.path()).unwrap();
        assert_eq!(paths.len(), 9);
        for p in &paths {
            let rel = p.strip_prefix(a.path()).unwrap();
            assert_eq!(
                std::fs::read(p).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap()
            );
        }
        let m = load_manifest(a.path(), SourceKind::FolderPerClass).unwrap();
        assert_eq!(m.class_names, CLASS_DIRS);
        assert_eq!(m.class_counts(), vec![3, 3, 3]);

        let other = SynthConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            synth_clip(&cfg, 1, 0).unwrap(),
            synth_clip(&other, 1, 0).unwrap()
        );
        assert_ne!(
            synth_clip(&cfg, 1, 0).unwrap(),
            synth_clip(&cfg, 1, 1).unwrap()
        );
    }

    #[test]
    fn noise_bursts_stay_in_band() {
        let clip = synth_clip(
            &SynthConfig {
                noise_floor: 0.0,
                ..small()
            },
            2,
            0,
        )
        .unwrap();
        let peak = clip.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        let f = dft_peak_hz(clip.samples(), clip.sample_rate_hz());
        assert!((150.0..=850.0).contains(&f), "{f}");
    }

    #[test]
    fn stream_segments() {
        let (signal, segments) = tone_chirp_tone(&small(), 8.0).unwrap();
        assert_eq!(signal.len(), 24 * 8000);
        assert_eq!(
            segments.iter().map(|s| s.class).collect::<Vec<_>>(),
            [0, 1, 0]
        );
        assert_eq!((segments[2].start_s, segments[2].end_s), (16.0, 24.0));
    }

    #[test]
    fn validation() {
        assert!(SynthConfig {
            num_classes: 4,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            sample_rate_hz: 1000,
            ..small()
        }
        .validate()
        .is_err());
    }
}
