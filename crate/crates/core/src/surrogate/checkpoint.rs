//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "DSAMECKP"
//! version    u32      1
//! kind       u8       0 = MLP, 1 = linear
//! n_sizes    u32
//! sizes      u32 x n_sizes          input, hidden..., output
//! mean       f64 x output           target scaler
//! std        f64 x output
//! per layer: weights f64 x (out*in) row-major, then biases f64 x out
//! ```
//!
//! Optimizer moments are not stored; a loaded model starts a fresh Adam state.

use std::path::Path;

use super::model::{ModelKind, SurrogateModel};
use super::Scaler;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DSAMECKP";
const VERSION: u32 = 1;

impl SurrogateModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.kind() {
            ModelKind::Mlp => 0,
            ModelKind::Linear => 1,
        });
        let sizes = self.layer_sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        let floats = self
            .scaler
            .mean
            .iter()
            .chain(&self.scaler.std)
            .chain(self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases)));
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::parse("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::parse("checkpoint", format!("unsupported version {version}")));
        }
        let kind = match r.take(1)?[0] {
            0 => ModelKind::Mlp,
            1 => ModelKind::Linear,
            k => return Err(Error::parse("checkpoint", format!("unknown model kind {k}"))),
        };
        let n = r.u32()? as usize;
        if n < 2 {
            return Err(Error::parse("checkpoint", "need at least two layer sizes"));
        }
        let sizes = (0..n).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        if sizes.contains(&0) || (kind == ModelKind::Linear && n != 2) {
            return Err(Error::parse("checkpoint", "invalid layer sizes"));
        }
        let out = sizes[n - 1];
        let mean = r.f64s(out)?;
        let std = r.f64s(out)?;
        let mut layers = SurrogateModel::zero_layers(&sizes);
        for layer in &mut layers {
            layer.weights = r.f64s(layer.weights.len())?;
            layer.biases = r.f64s(layer.biases.len())?;
        }
        if r.pos != bytes.len() {
            return Err(Error::parse("checkpoint", "trailing bytes"));
        }
        Ok(SurrogateModel::from_layers(kind, layers, Scaler { mean, std }))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::parse("checkpoint", "unexpected end of file"))?;
        self.pos = end;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap())))
            .collect()
    }
}
