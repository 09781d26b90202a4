//! Browser bindings: render time-frequency images of test signals or an
//! uploaded WAV file, and measure the two-tone midpoint energy.

use std::f64::consts::PI;

use wasm_bindgen::prelude::*;
use wvdnet::datasets::wav::decode_wav;
use wvdnet::signal::{average_channels, decimate, working_rate};
use wvdnet::tfd::{
    default_time_stride, normalize_image, pseudo_wvd, resize_bilinear, spectrogram, wvd,
};
use wvdnet::{analytic_signal, LagWindow, Signal, TfdImage};

const RATE: f64 = 4000.0;
const BINS: usize = 256;
const SIDE: usize = 256;

/// Normalized image ready for drawing, rows = time, columns = frequency.
#[wasm_bindgen]
pub struct Rendered {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    max_freq_hz: f64,
    duration_s: f64,
}

#[wasm_bindgen]
impl Rendered {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[wasm_bindgen(getter)]
    pub fn max_freq_hz(&self) -> f64 {
        self.max_freq_hz
    }

    #[wasm_bindgen(getter)]
    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    /// Row-major values in `[0, 1]`.
    pub fn values(&self) -> Vec<f32> {
        self.values.clone()
    }
}

fn js_err(e: wvdnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `tone`, `chirp`, `two_tone` or `tone_chirp` at 4 kHz.
fn test_signal(kind: &str, seconds: f64) -> Result<Signal, JsError> {
    let n = (seconds * RATE) as usize;
    let t = |i: usize| i as f64 / RATE;
    let samples: Vec<f64> = match kind {
        "tone" => (0..n).map(|i| (2.0 * PI * 500.0 * t(i)).cos()).collect(),
        "chirp" => {
            let slope = 1000.0 / seconds;
            (0..n)
                .map(|i| (2.0 * PI * (200.0 * t(i) + 0.5 * slope * t(i) * t(i))).cos())
                .collect()
        }
        "two_tone" => (0..n)
            .map(|i| (2.0 * PI * 500.0 * t(i)).cos() + (2.0 * PI * 1500.0 * t(i)).cos())
            .collect(),
        "tone_chirp" => (0..n)
            .map(|i| {
                let tt = t(i);
                (2.0 * PI * 1500.0 * tt).cos()
                    + (2.0 * PI * (300.0 * tt + 0.5 * (800.0 / seconds) * tt * tt)).cos()
            })
            .collect(),
        other => return Err(JsError::new(&format!("unknown test signal `{other}`"))),
    };
    Signal::new(samples, RATE).map_err(js_err)
}

fn render_signal(signal: &Signal, tfd: &str, lag_window: usize) -> Result<Rendered, JsError> {
    let x = analytic_signal(signal).map_err(js_err)?;
    let stride = default_time_stride(x.len(), 2 * SIDE);
    let image: TfdImage = match tfd {
        "pseudo_wvd" => {
            let window = LagWindow::hamming(lag_window).map_err(js_err)?;
            pseudo_wvd(&x, &window, stride, BINS)
        }
        "wvd" => wvd(&x, stride, BINS),
        "spectrogram" => spectrogram(&x, lag_window.clamp(2, x.len()), stride),
        other => return Err(JsError::new(&format!("unknown distribution `{other}`"))),
    }
    .map_err(js_err)?;
    let max_freq_hz = image.freq_axis_hz().last().copied().unwrap_or(0.0);
    let resized = resize_bilinear(&image, SIDE, SIDE).map_err(js_err)?;
    let normalized = normalize_image(&resized);
    Ok(Rendered {
        rows: normalized.rows(),
        cols: normalized.cols(),
        values: normalized.values().iter().map(|&v| v as f32).collect(),
        max_freq_hz,
        duration_s: signal.duration_s(),
    })
}

/// Image of a built-in test signal. `lag_window` is the odd Hamming length
/// for `pseudo_wvd` or the frame length for `spectrogram`.
#[wasm_bindgen]
pub fn render_test_signal(
    signal: &str,
    tfd: &str,
    lag_window: usize,
    seconds: f64,
) -> Result<Rendered, JsError> {
    render_signal(&test_signal(signal, seconds)?, tfd, lag_window)
}

/// Image of an uploaded WAV file (integer PCM or float): channels averaged,
/// decimated toward 4 kHz as in preprocessing, at most the first `max_seconds`.
#[wasm_bindgen]
pub fn render_wav(
    bytes: &[u8],
    tfd: &str,
    lag_window: usize,
    max_seconds: f64,
) -> Result<Rendered, JsError> {
    let channels = decode_wav(bytes).map_err(js_err)?;
    let mono = average_channels(&channels).map_err(js_err)?;
    let keep = ((max_seconds * mono.sample_rate_hz()) as usize).min(mono.len());
    let head = mono.slice(0, keep);
    let rate = working_rate(head.sample_rate_hz(), RATE);
    let head = if rate < head.sample_rate_hz() {
        decimate(&head, rate).map_err(js_err)?
    } else {
        head
    };
    render_signal(&head, tfd, lag_window)
}

/// Mean squared value at the 1000 Hz midpoint bin of the 500 + 1500 Hz
/// two-tone signal, for the plain distribution and for the Hamming-windowed
/// one: `[plain, pseudo]`.
#[wasm_bindgen]
pub fn midpoint_energy(lag_window: usize) -> Result<Vec<f64>, JsError> {
    let x = analytic_signal(&test_signal("two_tone", 1.0)?).map_err(js_err)?;
    let plain = wvd(&x, 4, BINS).map_err(js_err)?;
    let window = LagWindow::hamming(lag_window).map_err(js_err)?;
    let pseudo = pseudo_wvd(&x, &window, 4, BINS).map_err(js_err)?;
    let energy = |image: &TfdImage| {
        let k = image.nearest_bin(1000.0);
        let rows = image.rows() / 4..3 * image.rows() / 4;
        let n = rows.len() as f64;
        rows.map(|r| image.get(r, k).powi(2)).sum::<f64>() / n
    };
    Ok(vec![energy(&plain), energy(&pseudo)])
}
