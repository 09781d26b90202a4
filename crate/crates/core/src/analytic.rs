//! FFT plumbing and the analytic signal.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// A uniformly sampled complex waveform, normally the analytic form of a [`Signal`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(ComplexSignal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
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

    pub fn real(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }
}

/// A planned transform of one length and direction, reusable across calls.
#[derive(Clone)]
pub(crate) struct FftPlan {
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl FftPlan {
    pub(crate) fn new(len: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let scratch_len = fft.get_inplace_scratch_len();
        FftPlan { fft, scratch_len }
    }

    /// Unnormalized in-place transform.
    pub(crate) fn process(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.scratch_len, Complex64::default());
        self.fft.process_with_scratch(buf, scratch);
    }
}

/// Discrete Fourier transform of any length. The inverse carries the `1/N` factor.
pub fn fft(samples: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::invalid("fft of an empty sequence"));
    }
    let mut buf = samples.to_vec();
    fft_in_place(&mut buf, inverse);
    Ok(buf)
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let plan = FftPlan::new(buf.len(), inverse);
    plan.process(buf, &mut Vec::new());
    if inverse {
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Analytic signal by one-sided spectrum construction: DC and (even-length)
/// Nyquist bins kept, positive frequencies doubled, negative ones removed.
pub fn analytic_signal(signal: &Signal) -> Result<ComplexSignal> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "analytic signal needs at least 2 samples, got {n}"
        )));
    }
    let mut spectrum: Vec<Complex64> = signal
        .samples()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_in_place(&mut spectrum, false);
    let half = n / 2;
    for (k, bin) in spectrum.iter_mut().enumerate().skip(1) {
        if k < half || (k == half && n % 2 == 1) {
            *bin *= 2.0;
        } else if k > half {
            *bin = Complex64::default();
        }
    }
    fft_in_place(&mut spectrum, true);
    ComplexSignal::new(spectrum, signal.sample_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn direct_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                let sum: Complex64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v * Complex64::from_polar(
                            1.0,
                            sign * 2.0 * PI * ((k * i) % n) as f64 / n as f64,
                        )
                    })
                    .sum();
                if inverse {
                    sum / n as f64
                } else {
                    sum
                }
            })
            .collect()
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn impulse_and_dc() {
        let out = fft(&[c(1.0), c(0.0), c(0.0), c(0.0)], false).unwrap();
        assert!(max_abs_diff(&out, &[c(1.0); 4]) < 1e-12);
        let out = fft(&[c(1.0); 4], false).unwrap();
        assert!(max_abs_diff(&out, &[c(4.0), c(0.0), c(0.0), c(0.0)]) < 1e-12);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(fft(&[], false).is_err());
    }

    #[test]
    fn length_17_matches_direct_dft_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<Complex64> = (0..17)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let forward = fft(&x, false).unwrap();
        assert!(max_abs_diff(&forward, &direct_dft(&x, false)) < 1e-9);
        let back = fft(&forward, true).unwrap();
        assert!(max_abs_diff(&back, &x) < 1e-9);
        assert!(max_abs_diff(&fft(&forward, true).unwrap(), &direct_dft(&forward, true)) < 1e-9);
    }

    #[test]
    fn cosine_becomes_complex_exponential() {
        let rate = 4000.0;
        let x: Vec<f64> = (0..4000)
            .map(|i| (2.0 * PI * 100.0 * i as f64 / rate).cos())
            .collect();
        let z = analytic_signal(&Signal::new(x, rate).unwrap()).unwrap();
        for (i, v) in z.samples().iter().enumerate().skip(100).take(3800) {
            let expected = Complex64::from_polar(1.0, 2.0 * PI * 100.0 * i as f64 / rate);
            assert!((v.norm() - 1.0).abs() < 1e-6);
            assert!((v - expected).norm() < 1e-6);
        }
    }

    #[test]
    fn zeros_stay_zero() {
        let z = analytic_signal(&Signal::new(vec![0.0; 64], 100.0).unwrap()).unwrap();
        assert!(z.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn too_short_rejected() {
        assert!(analytic_signal(&Signal::new(vec![1.0], 100.0).unwrap()).is_err());
    }

    #[test]
    fn negative_frequencies_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = analytic_signal(&Signal::new(x, 1.0).unwrap()).unwrap();
        let spec = direct_dft(z.samples(), false);
        let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
        let negative: f64 = spec[513..].iter().map(|v| v.norm_sqr()).sum();
        assert!(negative < 1e-10 * total, "{negative} vs {total}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn real_part_round_trips(x in prop::collection::vec(-1.0f64..1.0, 2..300)) {
            let z = analytic_signal(&Signal::new(x.clone(), 10.0).unwrap()).unwrap();
            let scale = x.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (a, b) in z.real().iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn parseval(x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..300)) {
            let x: Vec<Complex64> = x.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
            let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let freq: f64 = fft(&x, false).unwrap().iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((freq - x.len() as f64 * time).abs() <= 1e-9 * freq.max(1e-300));
        }

        #[test]
        fn broadband_energy_doubles(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let z = analytic_signal(&Signal::new(x, 1.0).unwrap()).unwrap();
            let analytic_energy: f64 = z.samples().iter().map(|v| v.norm_sqr()).sum();
            prop_assert!((analytic_energy / energy - 2.0).abs() < 0.02);
        }
    }
}
