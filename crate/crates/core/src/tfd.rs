//! Time-frequency distributions.
//!
//! The discrete pseudo Wigner-Ville distribution used here is the even-lag
//! form
//!
//! ```text
//! W[n][k] = 2 Re( sum_{m=-L..L} h[m] x[n+m] conj(x[n-m]) exp(-j 2 pi k m / K) )
//! ```
//!
//! where `K` is the number of frequency bins. Because the lag product spans
//! `2m` samples, bin `k` sits at `k * fs / (2K)`, so `K` bins cover `[0, fs/2)`
//! and the input should be analytic to avoid aliasing. Images are stored with
//! rows as time and columns as frequency, frequency increasing with column.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{ComplexSignal, FftPlan};
use crate::error::{Error, Result};

/// Longest lag window chosen by [`LagWindow::default_for`].
pub const DEFAULT_LAG_WINDOW: usize = 127;
pub const DEFAULT_FREQ_BINS: usize = 512;
/// Raw images are decimated in time to at most this many rows.
pub const DEFAULT_MAX_TIME_ROWS: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfdKind {
    PseudoWvd,
    Wvd,
    Spectrogram,
}

impl TfdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TfdKind::PseudoWvd => "pseudo_wvd",
            TfdKind::Wvd => "wvd",
            TfdKind::Spectrogram => "spectrogram",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pseudo_wvd" => Some(TfdKind::PseudoWvd),
            "wvd" => Some(TfdKind::Wvd),
            "spectrogram" => Some(TfdKind::Spectrogram),
            _ => None,
        }
    }
}

/// A time x frequency energy image with its axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TfdImage {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    time_axis_s: Vec<f64>,
    freq_axis_hz: Vec<f64>,
    source_rate_hz: f64,
    kind: TfdKind,
    time_stride: usize,
}

impl TfdImage {
    pub fn new(
        values: Vec<f64>,
        time_axis_s: Vec<f64>,
        freq_axis_hz: Vec<f64>,
        source_rate_hz: f64,
        kind: TfdKind,
        time_stride: usize,
    ) -> Result<Self> {
        let (rows, cols) = (time_axis_s.len(), freq_axis_hz.len());
        if rows * cols != values.len() {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} image",
                values.len()
            )));
        }
        if freq_axis_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frequency axis must be strictly increasing"));
        }
        if !(source_rate_hz > 0.0) {
            return Err(Error::invalid("source rate must be positive"));
        }
        Ok(TfdImage {
            values,
            rows,
            cols,
            time_axis_s,
            freq_axis_hz,
            source_rate_hz,
            kind,
            time_stride,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major values, `rows * cols` long.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn time_axis_s(&self) -> &[f64] {
        &self.time_axis_s
    }

    pub fn freq_axis_hz(&self) -> &[f64] {
        &self.freq_axis_hz
    }

    pub fn source_rate_hz(&self) -> f64 {
        self.source_rate_hz
    }

    pub fn kind(&self) -> TfdKind {
        self.kind
    }

    /// Input samples between consecutive rows, before any resize.
    pub fn time_stride(&self) -> usize {
        self.time_stride
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Column of the largest value in `row`; ties resolve to the lowest column.
    pub fn row_argmax(&self, row: usize) -> usize {
        argmax(self.row(row))
    }

    /// Column whose frequency is closest to `freq_hz`.
    pub fn nearest_bin(&self, freq_hz: f64) -> usize {
        argmax_by(&self.freq_axis_hz, |f| -(f - freq_hz).abs())
    }

    fn with_values(&self, values: Vec<f64>) -> TfdImage {
        TfdImage {
            values,
            ..self.clone()
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    argmax_by(xs, |v| v)
}

fn argmax_by(xs: &[f64], key: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    let mut best_key = f64::NEG_INFINITY;
    for (i, &v) in xs.iter().enumerate() {
        let k = key(v);
        if k > best_key {
            best = i;
            best_key = k;
        }
    }
    best
}

/// Symmetric odd-length taper over the lag axis, 1 at the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct LagWindow {
    coefficients: Vec<f64>,
    name: String,
}

impl LagWindow {
    pub fn hamming(len: usize) -> Result<Self> {
        Self::build(len, "hamming", |i, n| {
            0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
        })
    }

    pub fn rectangular(len: usize) -> Result<Self> {
        Self::build(len, "rectangular", |_, _| 1.0)
    }

    /// Hamming window of length `min(127, largest odd <= signal_len / 4)`,
    /// further capped by what `n_freq_bins` can represent.
    pub fn default_for(signal_len: usize, n_freq_bins: usize) -> Result<Self> {
        let quarter = (signal_len / 4).max(1);
        let odd = if quarter % 2 == 0 {
            quarter - 1
        } else {
            quarter
        };
        let cap = (2 * n_freq_bins).saturating_sub(1).max(1);
        Self::hamming(odd.min(DEFAULT_LAG_WINDOW).min(cap))
    }

    fn build(len: usize, kind: &str, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if len == 0 || len % 2 == 0 {
            return Err(Error::invalid(format!(
                "lag window length must be odd, got {len}"
            )));
        }
        let mut coefficients: Vec<f64> = (0..len)
            .map(|i| if len == 1 { 1.0 } else { f(i, len) })
            .collect();
        for i in 0..len / 2 {
            coefficients[len - 1 - i] = coefficients[i];
        }
        coefficients[len / 2] = 1.0;
        Ok(LagWindow {
            coefficients,
            name: format!("{kind}/{len}"),
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Largest lag magnitude `L` covered by the window.
    pub fn half_len(&self) -> usize {
        self.coefficients.len() / 2
    }

    /// Weight at signed lag `m`; zero outside the window.
    pub fn at(&self, m: isize) -> f64 {
        let idx = m + self.half_len() as isize;
        if idx < 0 {
            return 0.0;
        }
        self.coefficients.get(idx as usize).copied().unwrap_or(0.0)
    }
}

/// Discrete lag product `x[n+m] * conj(x[n-m])`; zero when either index is out of range.
pub fn ambiguity_product(x: &ComplexSignal, n: isize, m: isize) -> Complex64 {
    let s = x.samples();
    let at = |i: isize| (i >= 0).then(|| s.get(i as usize)).flatten();
    match (at(n + m), at(n - m)) {
        (Some(a), Some(b)) => a * b.conj(),
        _ => Complex64::default(),
    }
}

/// Time stride that keeps a `signal_len`-sample image within `max_rows` rows.
pub fn default_time_stride(signal_len: usize, max_rows: usize) -> usize {
    signal_len.div_ceil(max_rows.max(1)).max(1)
}

/// Pseudo Wigner-Ville distribution of `x`, one row every `time_stride` samples.
pub fn pseudo_wvd(
    x: &ComplexSignal,
    window: &LagWindow,
    time_stride: usize,
    n_freq_bins: usize,
) -> Result<TfdImage> {
    let rows = pseudo_wvd_rows(x, window, time_stride, n_freq_bins)?;
    let values = rows.into_iter().flatten().map(|c| 2.0 * c.re).collect();
    wvd_image(x, values, time_stride, n_freq_bins, TfdKind::PseudoWvd)
}

/// Plain Wigner-Ville distribution: rectangular lag window as long as the
/// frequency grid (and the signal) allows.
pub fn wvd(x: &ComplexSignal, time_stride: usize, n_freq_bins: usize) -> Result<TfdImage> {
    let len = (2 * n_freq_bins).min(2 * x.len().max(1)) - 1;
    let window = LagWindow::rectangular(len.max(1))?;
    let rows = pseudo_wvd_rows(x, &window, time_stride, n_freq_bins)?;
    let values = rows.into_iter().flatten().map(|c| 2.0 * c.re).collect();
    wvd_image(x, values, time_stride, n_freq_bins, TfdKind::Wvd)
}

fn wvd_image(
    x: &ComplexSignal,
    values: Vec<f64>,
    time_stride: usize,
    n_freq_bins: usize,
    kind: TfdKind,
) -> Result<TfdImage> {
    let rate = x.sample_rate_hz();
    let time_axis = (0..x.len())
        .step_by(time_stride)
        .map(|n| n as f64 / rate)
        .collect();
    let freq_axis = (0..n_freq_bins)
        .map(|k| k as f64 * rate / (2.0 * n_freq_bins as f64))
        .collect();
    TfdImage::new(values, time_axis, freq_axis, rate, kind, time_stride)
}

/// The lag-FFT of the windowed kernel for every output row, before the real
/// part is taken.
pub(crate) fn pseudo_wvd_rows(
    x: &ComplexSignal,
    window: &LagWindow,
    time_stride: usize,
    n_freq_bins: usize,
) -> Result<Vec<Vec<Complex64>>> {
    if x.is_empty() {
        return Err(Error::invalid("pseudo-WVD of an empty signal"));
    }
    if window.len() % 2 == 0 {
        return Err(Error::invalid("lag window length must be odd"));
    }
    if time_stride == 0 || n_freq_bins == 0 {
        return Err(Error::invalid("time stride and bin count must be positive"));
    }
    if window.len() > 2 * n_freq_bins - 1 {
        return Err(Error::invalid(format!(
            "lag window of {} exceeds 2*{n_freq_bins}-1",
            window.len()
        )));
    }
    let samples = x.samples();
    let len = samples.len();
    let k_bins = n_freq_bins as isize;
    let plan = FftPlan::new(n_freq_bins, false);
    let mut scratch = Vec::new();
    let rows = (0..len)
        .step_by(time_stride)
        .map(|n| {
            let mut buf = vec![Complex64::default(); n_freq_bins];
            let reach = window.half_len().min(n).min(len - 1 - n) as isize;
            for m in -reach..=reach {
                let lag =
                    samples[(n as isize + m) as usize] * samples[(n as isize - m) as usize].conj();
                buf[m.rem_euclid(k_bins) as usize] += lag * window.at(m);
            }
            plan.process(&mut buf, &mut scratch);
            buf
        })
        .collect();
    Ok(rows)
}

/// Per-row energy implied by a plain WVD, which should reproduce `|x[n]|^2`.
pub fn wvd_time_marginal(image: &TfdImage, x: &ComplexSignal) -> Result<Vec<f64>> {
    if image.kind != TfdKind::Wvd {
        return Err(Error::invalid(format!(
            "time marginal needs a plain WVD image, got {}",
            image.kind.as_str()
        )));
    }
    if image.time_stride != 1 || image.rows != x.len() {
        return Err(Error::shape(format!(
            "image has {} rows at stride {}, signal has {} samples",
            image.rows,
            image.time_stride,
            x.len()
        )));
    }
    let scale = 1.0 / (2.0 * image.cols as f64);
    Ok((0..image.rows)
        .map(|r| image.row(r).iter().sum::<f64>() * scale)
        .collect())
}

/// Squared-magnitude STFT with a Hamming analysis window. Frames start at
/// 0, `hop`, ... while they fit; columns are bins `0..=window_len/2`.
pub fn spectrogram(x: &ComplexSignal, window_len: usize, hop: usize) -> Result<TfdImage> {
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    if window_len < 2 || window_len > x.len() {
        return Err(Error::invalid(format!(
            "window of {window_len} samples does not fit a {}-sample signal",
            x.len()
        )));
    }
    let rate = x.sample_rate_hz();
    let taper: Vec<f64> = (0..window_len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (window_len - 1) as f64).cos())
        .collect();
    let cols = window_len / 2 + 1;
    let plan = FftPlan::new(window_len, false);
    let mut scratch = Vec::new();
    let mut values = Vec::new();
    let mut time_axis = Vec::new();
    let mut buf = vec![Complex64::default(); window_len];
    for start in (0..=x.len() - window_len).step_by(hop) {
        for ((b, s), w) in buf.iter_mut().zip(&x.samples()[start..]).zip(&taper) {
            *b = s * w;
        }
        plan.process(&mut buf, &mut scratch);
        values.extend(buf[..cols].iter().map(|c| c.norm_sqr()));
        time_axis.push((start as f64 + window_len as f64 / 2.0) / rate);
    }
    let freq_axis = (0..cols)
        .map(|k| k as f64 * rate / window_len as f64)
        .collect();
    TfdImage::new(
        values,
        time_axis,
        freq_axis,
        rate,
        TfdKind::Spectrogram,
        hop,
    )
}

/// Bilinear resize with corner-aligned sampling and edge clamping.
pub fn resize_bilinear(image: &TfdImage, out_rows: usize, out_cols: usize) -> Result<TfdImage> {
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::invalid("resize target dimensions must be positive"));
    }
    if image.rows < 2 || image.cols < 2 {
        return Err(Error::invalid(format!(
            "cannot resize a {}x{} image",
            image.rows, image.cols
        )));
    }
    let row_taps = sample_positions(image.rows, out_rows);
    let col_taps = sample_positions(image.cols, out_cols);
    let mut values = Vec::with_capacity(out_rows * out_cols);
    for &(r0, r1, fr) in &row_taps {
        let (top, bottom) = (image.row(r0), image.row(r1));
        for &(c0, c1, fc) in &col_taps {
            let corners = [top[c0], top[c1], bottom[c0], bottom[c1]];
            let upper = top[c0] + (top[c1] - top[c0]) * fc;
            let lower = bottom[c0] + (bottom[c1] - bottom[c0]) * fc;
            // A convex blend; the clamp only removes rounding overshoot.
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            values.push((upper + (lower - upper) * fr).clamp(lo, hi));
        }
    }
    let lerp_axis = |axis: &[f64], taps: &[(usize, usize, f64)]| -> Vec<f64> {
        taps.iter()
            .map(|&(a, b, f)| axis[a] + (axis[b] - axis[a]) * f)
            .collect()
    };
    TfdImage::new(
        values,
        lerp_axis(&image.time_axis_s, &row_taps),
        lerp_axis(&image.freq_axis_hz, &col_taps),
        image.source_rate_hz,
        image.kind,
        image.time_stride,
    )
}

/// For each output index, the two source indices and the blend fraction.
fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    if input == output {
        return (0..output).map(|i| (i, i, 0.0)).collect();
    }
    let denom = output.saturating_sub(1).max(1) as f64;
    (0..output)
        .map(|i| {
            let pos = ((i * (input - 1)) as f64 / denom).clamp(0.0, (input - 1) as f64);
            let lo = (pos.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Clamp negatives to zero then min-max scale to `[0, 1]`. Constant images become all zeros.
pub fn normalize_image(image: &TfdImage) -> TfdImage {
    let clamped: Vec<f64> = image.values.iter().map(|v| v.max(0.0)).collect();
    let (lo, hi) = clamped
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if !(range > 0.0) || !range.is_finite() {
        vec![0.0; clamped.len()]
    } else {
        clamped.iter().map(|v| (v - lo) / range).collect()
    };
    image.with_values(values)
}

/// Compress dynamic range with `ln(1 + gain * v / max)` on the clamped image.
pub fn log_compress(image: &TfdImage, gain: f64) -> TfdImage {
    let peak = image.values.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak <= 0.0 {
        return image.with_values(vec![0.0; image.values.len()]);
    }
    let values = image
        .values
        .iter()
        .map(|&v| (gain * v.max(0.0) / peak).ln_1p())
        .collect();
    image.with_values(values)
}

impl TfdImage {
    /// 8-bit grayscale PNG, pixel = round(255 v) with v clamped to `[0, 1]`.
    /// Row 0 (earliest time) is the top of the picture.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let pixels: Vec<u8> = self
            .values
            .iter()
            .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
            .collect();
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.cols as u32, self.rows as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder
                .write_header()
                .map_err(|e| Error::Data(format!("png: {e}")))?;
            writer
                .write_image_data(&pixels)
                .map_err(|e| Error::Data(format!("png: {e}")))?;
        }
        Ok(out)
    }

    /// CSV dump of the raw values. The first line carries the image metadata,
    /// the second the frequency axis; each data row starts with its time.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# kind={} rows={} cols={} source_rate_hz={} time_stride={}",
            self.kind.as_str(),
            self.rows,
            self.cols,
            self.source_rate_hz,
            self.time_stride
        );
        out.push_str("time_s");
        for f in &self.freq_axis_hz {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
        for (r, t) in self.time_axis_s.iter().enumerate() {
            let _ = write!(out, "{t}");
            for v in self.row(r) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse the output of [`TfdImage::to_csv`].
    pub fn from_csv(text: &str) -> Result<TfdImage> {
        let bad = |line: usize, what: &str| Error::Data(format!("tfd csv line {line}: {what}"));
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| bad(1, "missing metadata header"))?;
        let mut kind = None;
        let mut rate = None;
        let mut stride = None;
        for field in meta.split_whitespace() {
            match field.split_once('=') {
                Some(("kind", v)) => kind = TfdKind::parse(v),
                Some(("source_rate_hz", v)) => rate = v.parse::<f64>().ok(),
                Some(("time_stride", v)) => stride = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (kind, rate, stride) = match (kind, rate, stride) {
            (Some(k), Some(r), Some(s)) => (k, r, s),
            _ => return Err(bad(1, "incomplete metadata")),
        };
        let parse = |line: usize, s: &str| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
        let header = lines.next().ok_or_else(|| bad(2, "missing axis header"))?;
        let mut cells = header.split(',');
        if cells.next() != Some("time_s") {
            return Err(bad(2, "expected time_s"));
        }
        let freq_axis = cells.map(|c| parse(2, c)).collect::<Result<Vec<_>>>()?;
        let mut time_axis = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            time_axis.push(parse(i + 3, cells.next().unwrap_or(""))?);
            let before = values.len();
            for c in cells {
                values.push(parse(i + 3, c)?);
            }
            if values.len() - before != freq_axis.len() {
                return Err(bad(i + 3, "wrong column count"));
            }
        }
        TfdImage::new(values, time_axis, freq_axis, rate, kind, stride)
    }
}
