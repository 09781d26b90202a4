//! RIFF/WAVE reading (8/16/24/32-bit PCM, 32/64-bit float) and writing
//! (16-bit PCM, 32-bit float).

use std::io::{Cursor, Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm8,
    Pcm16,
    Pcm24,
    Pcm32,
    Float32,
    Float64,
}

/// Header facts of a WAV stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavInfo {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub frames: usize,
    pub format: SampleFormat,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate_hz as f64
    }
}

struct Parsed {
    info: WavInfo,
    data: Option<Vec<u8>>,
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], chunk: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::wav(chunk, "truncated"))
}

fn parse<R: Read + Seek>(r: &mut R, load_data: bool) -> Result<Parsed> {
    let mut header = [0u8; 12];
    read_exact(r, &mut header, "RIFF")?;
    if &header[0..4] != b"RIFF" {
        return Err(Error::wav("RIFF", "missing RIFF signature"));
    }
    if &header[8..12] != b"WAVE" {
        return Err(Error::wav("RIFF", "not a WAVE file"));
    }
    let mut fmt: Option<(SampleFormat, u16, u32, u16)> = None;
    loop {
        let mut chunk_header = [0u8; 8];
        match r.read(&mut chunk_header[..1]) {
            Ok(0) => break,
            Ok(_) => read_exact(r, &mut chunk_header[1..], "chunk header")?,
            Err(e) => return Err(Error::wav("chunk header", e.to_string())),
        }
        let id = String::from_utf8_lossy(&chunk_header[0..4]).into_owned();
        let size = u32::from_le_bytes(chunk_header[4..8].try_into().unwrap()) as usize;
        match &chunk_header[0..4] {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::wav("fmt", format!("{size} bytes is too short")));
                }
                let mut body = vec![0u8; size];
                read_exact(r, &mut body, "fmt")?;
                fmt = Some(parse_fmt(&body)?);
            }
            b"data" => {
                let (format, channels, rate, block_align) =
                    fmt.ok_or_else(|| Error::wav("data", "appears before the fmt chunk"))?;
                if size % block_align as usize != 0 {
                    return Err(Error::wav(
                        "data",
                        format!("{size} bytes is not a whole number of {block_align}-byte frames"),
                    ));
                }
                let info = WavInfo {
                    sample_rate_hz: rate,
                    channels,
                    frames: size / block_align as usize,
                    format,
                };
                let data = if load_data {
                    let mut data = vec![0u8; size];
                    read_exact(r, &mut data, "data")?;
                    Some(data)
                } else {
                    let here = r
                        .stream_position()
                        .map_err(|e| Error::wav("data", e.to_string()))?;
                    let end = r
                        .seek(SeekFrom::End(0))
                        .map_err(|e| Error::wav("data", e.to_string()))?;
                    if end - here < size as u64 {
                        return Err(Error::wav("data", "truncated"));
                    }
                    None
                };
                return Ok(Parsed { info, data });
            }
            _ => {
                let skip = size;
                let here = r
                    .stream_position()
                    .map_err(|e| Error::wav(&id, e.to_string()))?;
                let end = r
                    .seek(SeekFrom::End(0))
                    .map_err(|e| Error::wav(&id, e.to_string()))?;
                if here + skip as u64 > end {
                    return Err(Error::wav(id.trim_end(), "truncated"));
                }
                r.seek(SeekFrom::Start(here + skip as u64))
                    .map_err(|e| Error::wav(&id, e.to_string()))?;
            }
        }
        if size % 2 == 1 {
            r.seek(SeekFrom::Current(1))
                .map_err(|e| Error::wav(&id, e.to_string()))?;
        }
    }
    Err(Error::wav("data", "missing"))
}

fn parse_fmt(body: &[u8]) -> Result<(SampleFormat, u16, u32, u16)> {
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut tag = u16_at(0);
    let channels = u16_at(2);
    let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let block_align = u16_at(12);
    let bits = u16_at(14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(Error::wav("fmt", "extensible format without a subformat"));
        }
        tag = u16_at(24);
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 8) => SampleFormat::Pcm8,
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_PCM, 24) => SampleFormat::Pcm24,
        (FORMAT_PCM, 32) => SampleFormat::Pcm32,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_FLOAT, 64) => SampleFormat::Float64,
        (FORMAT_PCM, b) => return Err(Error::wav("fmt", format!("{b}-bit PCM is not supported"))),
        (t, b) => {
            return Err(Error::wav(
                "fmt",
                format!("codec {t:#06x} ({b}-bit) is not supported"),
            ))
        }
    };
    if channels == 0 || rate == 0 {
        return Err(Error::wav("fmt", "zero channels or sample rate"));
    }
    if block_align as usize != channels as usize * bits as usize / 8 {
        return Err(Error::wav(
            "fmt",
            format!("block align {block_align} inconsistent"),
        ));
    }
    Ok((format, channels, rate, block_align))
}

/// Decode a WAV byte stream into one [`Signal`] per channel, scaled to
/// `[-1, 1]`: integer samples are divided by `2^(bits-1)`, 8-bit samples
/// are unsigned around 128.
pub fn decode_wav(bytes: &[u8]) -> Result<Vec<Signal>> {
    let parsed = parse(&mut Cursor::new(bytes), true)?;
    let info = parsed.info;
    let data = parsed.data.expect("data requested");
    let channels = info.channels as usize;
    let mut out = vec![Vec::with_capacity(info.frames); channels];
    let (width, sample): (usize, fn(&[u8]) -> f64) = match info.format {
        SampleFormat::Pcm8 => (1, |b| (b[0] as f64 - 128.0) / 128.0),
        SampleFormat::Pcm16 => (2, |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0),
        SampleFormat::Pcm24 => (3, |b| {
            (i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) as f64 / 8_388_608.0
        }),
        SampleFormat::Pcm32 => (4, |b| {
            i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0
        }),
        SampleFormat::Float32 => (4, |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64),
        SampleFormat::Float64 => (8, |b| f64::from_le_bytes(b.try_into().unwrap())),
    };
    for (i, b) in data.chunks_exact(width).enumerate() {
        out[i % channels].push(sample(b));
    }
    out.into_iter()
        .map(|samples| Signal::new(samples, info.sample_rate_hz as f64))
        .collect()
}

pub fn read_wav(path: &Path) -> Result<Vec<Signal>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Header-only inspection without reading the sample data.
pub fn probe_wav(path: &Path) -> Result<WavInfo> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(&mut file, false)?.info)
}

/// Encode equal-length channels as 16-bit PCM. Samples are clamped to
/// `[-1, 1]` and scaled by 32767.
pub fn encode_wav_pcm16(channels: &[&[f64]], sample_rate_hz: u32) -> Result<Vec<u8>> {
    let frames = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != frames) {
        return Err(Error::invalid(
            "channels must be non-empty and of equal length",
        ));
    }
    let mut body = Vec::with_capacity(frames * channels.len() * 2);
    for i in 0..frames {
        for ch in channels {
            let v = (ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(wrap(
        FORMAT_PCM,
        channels.len() as u16,
        sample_rate_hz,
        16,
        &body,
    ))
}

/// Encode equal-length channels as 32-bit IEEE float.
pub fn encode_wav_f32(channels: &[&[f64]], sample_rate_hz: u32) -> Result<Vec<u8>> {
    let frames = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != frames) {
        return Err(Error::invalid(
            "channels must be non-empty and of equal length",
        ));
    }
    let mut body = Vec::with_capacity(frames * channels.len() * 4);
    for i in 0..frames {
        for ch in channels {
            body.extend_from_slice(&(ch[i] as f32).to_le_bytes());
        }
    }
    Ok(wrap(
        FORMAT_FLOAT,
        channels.len() as u16,
        sample_rate_hz,
        32,
        &body,
    ))
}

fn wrap(tag: u16, channels: u16, rate: u32, bits: u16, body: &[u8]) -> Vec<u8> {
    let block_align = channels * bits / 8;
    let mut out = Vec::with_capacity(44 + body.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + body.len() as u32 + (body.len() as u32 & 1)).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    if body.len() % 2 == 1 {
        out.push(0);
    }
    out
}
