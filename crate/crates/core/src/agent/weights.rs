//! Flat binary weights file.
//!
//! ```text
//! "QSDQ1"                      5 bytes
//! layer count                  u32 LE
//! (inputs, outputs) per layer  u32 LE pairs
//! per layer: weights row-major (outputs × inputs) then biases, f64 LE
//! ```

use std::path::Path;

use super::network::ValueNetwork;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"QSDQ1";

pub fn to_bytes(net: &ValueNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
    }
    for v in net.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Weights("unexpected end of file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ValueNetwork> {
    let mut r = Reader { bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Weights("bad magic".into()));
    }
    let count = r.u32()? as usize;
    if count == 0 || count > 64 {
        return Err(Error::Weights(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    if shapes.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(Error::Weights("layer dimensions do not chain".into()));
    }
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs) in shapes {
        let weights = r.f64s(inputs * outputs)?;
        let bias = r.f64s(outputs)?;
        layers.push(ValueNetwork::dense(inputs, outputs, weights, bias));
    }
    if !r.bytes.is_empty() {
        return Err(Error::Weights(format!("{} trailing bytes", r.bytes.len())));
    }
    Ok(ValueNetwork::from_layers(layers))
}

pub fn save(net: &ValueNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ValueNetwork> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
