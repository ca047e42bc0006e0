//! Trajectory-set container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    b"CRSHTRJ\0"
//! u32      version (1)
//! u32 dim, u32 node_count, u32 horizon T, f64 dt
//! u32 edge_count, u32 trajectory_count, u32 static_dim
//! edges    edge_count x (u32 receiver, u32 sender)
//! roles    node_count x u8 (0 free, 1 rigid)
//! per trajectory:
//!   u64 id
//!   static features   node_count x static_dim f64
//!   reference coords  node_count x dim f64
//!   initial velocity  node_count x dim f64
//!   positions         (T + 1) x node_count x dim f64
//!   u8 has_design; if 1: u32 count, then per variable
//!       (u32 len, utf-8 name, f64 low, f64 high, f64 value)
//!   u32 survival_a, u32 survival_b
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::{Reader, Writer};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::groundtruth::{DesignSample, DesignVar, VarBounds};
use crate::mesh::{MeshGraph, NodeRole, Sample, Trajectory};

pub const DATASET_MAGIC: &[u8; 8] = b"CRSHTRJ\0";
pub const DATASET_VERSION: u32 = 1;

/// JSON mirror of the binary header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub node_count: usize,
    pub horizon: usize,
    pub dt: f64,
    pub edge_count: usize,
    pub trajectory_count: usize,
    pub static_dim: usize,
    pub sample_ids: Vec<u64>,
}

pub fn dataset_header(samples: &[Sample]) -> Result<DatasetHeader> {
    let first = samples.first().ok_or(Error::Empty("dataset"))?;
    Ok(DatasetHeader {
        format: "CRSHTRJ".into(),
        version: DATASET_VERSION,
        dim: first.graph.dim(),
        node_count: first.graph.node_count(),
        horizon: first.trajectory.horizon(),
        dt: first.trajectory.dt,
        edge_count: first.graph.edges().len(),
        trajectory_count: samples.len(),
        static_dim: first.graph.static_features().cols(),
        sample_ids: samples.iter().map(|s| s.id).collect(),
    })
}

pub fn encode_dataset(samples: &[Sample]) -> Result<Vec<u8>> {
    let h = dataset_header(samples)?;
    let first = &samples[0];
    for s in samples {
        let same = s.graph.edges() == first.graph.edges()
            && s.graph.roles() == first.graph.roles()
            && s.graph.static_features().cols() == h.static_dim
            && s.trajectory.horizon() == h.horizon
            && s.trajectory.dt == h.dt;
        if !same {
            return Err(Error::Format(format!(
                "sample {} differs in topology, horizon or dt from sample {}",
                s.id, first.id
            )));
        }
        s.trajectory.validate(&s.graph)?;
    }
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION as usize)?;
    w.u32(h.dim)?;
    w.u32(h.node_count)?;
    w.u32(h.horizon)?;
    w.f64(h.dt);
    w.u32(h.edge_count)?;
    w.u32(h.trajectory_count)?;
    w.u32(h.static_dim)?;
    for &(i, j) in first.graph.edges() {
        w.u32(i)?;
        w.u32(j)?;
    }
    for r in first.graph.roles() {
        w.u8(u8::from(!r.is_free()));
    }
    for s in samples {
        w.u64(s.id);
        w.f64s(s.graph.static_features().data());
        w.f64s(s.graph.reference_positions().data());
        w.f64s(s.trajectory.states[0].velocities.data());
        for st in &s.trajectory.states {
            w.f64s(st.positions.data());
        }
        match &s.trajectory.design {
            None => w.u8(0),
            Some(d) => {
                w.u8(1);
                w.u32(d.vars.len())?;
                for v in &d.vars {
                    w.str(&v.bounds.name)?;
                    w.f64(v.bounds.low);
                    w.f64(v.bounds.high);
                    w.f64(v.value);
                }
            }
        }
        w.u32(s.trajectory.survival_pair.0)?;
        w.u32(s.trajectory.survival_pair.1)?;
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<Sample>> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != DATASET_MAGIC {
        return Err(Error::Format("not a trajectory container".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION as usize {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let dim = r.u32()?;
    let n = r.u32()?;
    let horizon = r.u32()?;
    let dt = r.f64()?;
    let ne = r.u32()?;
    let count = r.u32()?;
    let sdim = r.u32()?;
    let mut edges = Vec::with_capacity(ne.min(bytes.len() / 8));
    for _ in 0..ne {
        edges.push((r.u32()?, r.u32()?));
    }
    let roles = (0..n)
        .map(|_| match r.u8()? {
            0 => Ok(NodeRole::Free),
            1 => Ok(NodeRole::Rigid),
            b => Err(Error::Format(format!("bad role byte {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let id = r.u64()?;
        let feats = Tensor::from_rows(n, sdim, r.f64s(n * sdim)?)?;
        let reference = Tensor::from_rows(n, dim, r.f64s(n * dim)?)?;
        let v0 = Tensor::from_rows(n, dim, r.f64s(n * dim)?)?;
        let frames = (0..=horizon)
            .map(|_| Tensor::from_rows(n, dim, r.f64s(n * dim)?))
            .collect::<Result<Vec<_>>>()?;
        let design = match r.u8()? {
            0 => None,
            1 => {
                let k = r.u32()?;
                let vars = (0..k)
                    .map(|_| {
                        let name = r.str()?;
                        let low = r.f64()?;
                        let high = r.f64()?;
                        let value = r.f64()?;
                        Ok(DesignVar {
                            bounds: VarBounds { name, low, high },
                            value,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(DesignSample { id, vars })
            }
            b => return Err(Error::Format(format!("bad design flag {b}"))),
        };
        let pair = (r.u32()?, r.u32()?);
        let graph = MeshGraph::new(reference, edges.clone(), roles.clone(), feats)?;
        let trajectory = Trajectory::from_positions(frames, v0, dt, design, pair)?;
        trajectory.validate(&graph)?;
        out.push(Sample { id, graph, trajectory });
    }
    r.finish()?;
    Ok(out)
}

/// Sidecar path: the container path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the container and its JSON sidecar; returns both paths.
pub fn write_dataset(path: &Path, samples: &[Sample]) -> Result<(PathBuf, PathBuf)> {
    let bytes = encode_dataset(samples)?;
    fs::write(path, bytes)?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&dataset_header(samples)?)? + "\n")?;
    Ok((path.to_path_buf(), side))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    decode_dataset(&fs::read(path)?)
}
