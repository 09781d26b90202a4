//! Binary model checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "WVDN" | version | config_len | config JSON (config_len bytes)
//!        | tensor_count | per tensor: ndim | dims... | f32 data
//! ```
//!
//! Tensors follow declaration order: weight then bias of each conv/linear layer.

use std::path::Path;

use super::network::{Network, NetworkConfig};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 4] = b"WVDN";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes<T: Real>(net: &Network<T>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(net.config()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + config.len() + 4 * net.config().param_count());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(&config);
    let params: Vec<&Tensor<T>> = net.params().collect();
    put_u32(&mut out, params.len() as u32);
    for p in params {
        put_u32(&mut out, p.shape().len() as u32);
        for &d in p.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in p.data() {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a WVDN checkpoint".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let config_len = r.u32()? as usize;
    let config: NetworkConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    config
        .shape_chain()
        .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let expected = config.param_shapes();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, config declares {}",
            expected.len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for (i, shape) in expected.iter().enumerate() {
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: stored shape {dims:?}, config expects {shape:?}"
            )));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(4 * n)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        params.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Network::from_params(config, params)
}

pub fn save<T: Real>(net: &Network<T>, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(net)?)
}

pub fn load<T: Real>(path: &Path) -> Result<Network<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
