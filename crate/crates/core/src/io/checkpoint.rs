//! Parameter checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    b"CRSHCKPT"
//! u32      version (1)
//! u32 len, model config JSON
//! u32 len, SHA-256 hex of that JSON
//! norm stats: u32 dim, four (u32 len, f64...) vectors
//!             (accel mean, accel std, feature mean, feature std),
//!             f64 length_scale, f64 position_scale
//! u32 parameter count, then per parameter
//!     (u32 len, utf-8 name, u32 rows, u32 cols, rows*cols f64)
//! ```

use std::fs;
use std::path::Path;

use super::codec::{Reader, Writer};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::mesh::NormStats;
use crate::model::{hex_digest, HybridModel, ModelConfig};
use crate::rollout::Surrogate;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CRSHCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(s: &Surrogate) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize)?;
    let json = serde_json::to_string(&s.model.config)?;
    w.str(&json)?;
    w.str(&hex_digest(json.as_bytes()))?;
    let st = &s.stats;
    w.u32(st.dim)?;
    w.vec(&st.accel_mean)?;
    w.vec(&st.accel_std)?;
    w.vec(&st.feature_mean)?;
    w.vec(&st.feature_std)?;
    w.f64(st.length_scale);
    w.f64(st.position_scale);
    w.u32(s.params.len())?;
    for p in s.params.iter() {
        w.str(&p.name)?;
        w.u32(p.value.rows())?;
        w.u32(p.value.cols())?;
        w.f64s(p.value.data());
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Surrogate> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let json = r.str()?;
    let hash = r.str()?;
    if hex_digest(json.as_bytes()) != hash {
        return Err(Error::Format("model config hash mismatch".into()));
    }
    let config: ModelConfig = serde_json::from_str(&json)?;
    let stats = NormStats {
        dim: r.u32()?,
        accel_mean: r.vec()?,
        accel_std: r.vec()?,
        feature_mean: r.vec()?,
        feature_std: r.vec()?,
        length_scale: r.f64()?,
        position_scale: r.f64()?,
    };
    let (model, mut params) = HybridModel::new(config, 0)?;
    let count = r.u32()?;
    if count != params.len() {
        return Err(Error::Format(format!(
            "{count} parameters, model expects {}",
            params.len()
        )));
    }
    for _ in 0..count {
        let name = r.str()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let value = Tensor::from_rows(rows, cols, r.f64s(rows * cols)?)?;
        params
            .set(&name, value)
            .map_err(|e| Error::Format(format!("parameter `{name}`: {e}")))?;
    }
    r.finish()?;
    Surrogate::new(model, params, stats)
}

pub fn save_checkpoint(path: &Path, s: &Surrogate) -> Result<()> {
    fs::write(path, encode_checkpoint(s)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Surrogate> {
    decode_checkpoint(&fs::read(path)?)
}
