use serde::{Deserialize, Serialize};

use super::graph::MeshGraph;
use super::prepared::PreparedGraph;
use super::state::NodeState;
use super::stats::NormStats;
use crate::engine::{Tape, Tensor, Var};
use crate::error::{shape_err, Result};

/// Which per-node inputs a model family consumes.
///
/// Widths at `dim = 3` are 5 / 7 / 11.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// velocity ++ role one-hot
    Attention,
    /// velocity ++ role ++ thickness ++ speed
    Mesh,
    /// mesh set ++ displacement from reference ++ its norm
    Hybrid,
}

impl FeatureSet {
    pub fn width(self, dim: usize) -> usize {
        match self {
            FeatureSet::Attention => dim + 2,
            FeatureSet::Mesh => dim + 4,
            FeatureSet::Hybrid => 2 * dim + 5,
        }
    }
}

/// Width of the per-edge feature vector.
pub fn edge_feature_width(dim: usize) -> usize {
    2 * dim + 2
}

fn standardise(tape: &mut Tape, x: Var, mean: &[f64], std: &[f64]) -> Result<Var> {
    let neg = tape.constant(Tensor::from_rows(1, mean.len(), mean.iter().map(|m| -m).collect())?);
    let inv = tape.constant(Tensor::from_rows(1, std.len(), std.iter().map(|s| 1.0 / s).collect())?);
    let c = tape.add_row(x, neg)?;
    tape.mul_row(c, inv)
}

/// Node feature matrix on the tape; differentiable in `x` and `v`.
pub fn node_features(
    tape: &mut Tape,
    ctx: &PreparedGraph,
    stats: &NormStats,
    set: FeatureSet,
    x: Var,
    v: Var,
) -> Result<Var> {
    stats.ensure_fitted()?;
    let dim = ctx.dim();
    if tape.shape(x) != (ctx.node_count(), dim) || tape.shape(v) != (ctx.node_count(), dim) {
        return Err(shape_err(
            "node_features",
            format!("state {:?} for {} nodes", tape.shape(x), ctx.node_count()),
        ));
    }
    let l = stats.layout();
    let fm = &stats.feature_mean;
    let fs = &stats.feature_std;
    let vel = standardise(
        tape,
        v,
        &fm[l.velocity()..l.velocity() + dim],
        &fs[l.velocity()..l.velocity() + dim],
    )?;
    let roles = tape.constant(ctx.role_one_hot.clone());
    let mut parts = vec![vel, roles];
    if set == FeatureSet::Attention {
        return tape.concat(&parts);
    }
    let th = ctx
        .thickness
        .data()
        .iter()
        .map(|t| (t - fm[l.thickness()]) / fs[l.thickness()])
        .collect();
    parts.push(tape.constant(Tensor::from_rows(ctx.node_count(), 1, th)?));
    let speed = tape.row_norm(v);
    parts.push(standardise(
        tape,
        speed,
        &fm[l.speed()..=l.speed()],
        &fs[l.speed()..=l.speed()],
    )?);
    if set == FeatureSet::Mesh {
        return tape.concat(&parts);
    }
    let reference = tape.constant(ctx.reference_positions.clone());
    let u = tape.sub(x, reference)?;
    let d = l.displacement();
    parts.push(standardise(tape, u, &fm[d..d + dim], &fs[d..d + dim])?);
    let un = tape.row_norm(u);
    let dn = l.displacement_norm();
    parts.push(standardise(tape, un, &fm[dn..=dn], &fs[dn..=dn])?);
    tape.concat(&parts)
}

/// Per-edge `[x_j - x_i, |x_j - x_i|, u_j - u_i, |u_j - u_i|]` for edge `(i, j)`,
/// in raw length units.
pub fn edge_features(tape: &mut Tape, ctx: &PreparedGraph, x: Var) -> Result<Var> {
    let reference = tape.constant(ctx.reference_positions.clone());
    let u = tape.sub(x, reference)?;
    let xi = tape.gather_rows(x, ctx.receivers.clone())?;
    let xj = tape.gather_rows(x, ctx.senders.clone())?;
    let dx = tape.sub(xj, xi)?;
    let dxn = tape.row_norm(dx);
    let ui = tape.gather_rows(u, ctx.receivers.clone())?;
    let uj = tape.gather_rows(u, ctx.senders.clone())?;
    let du = tape.sub(uj, ui)?;
    let dun = tape.row_norm(du);
    tape.concat(&[dx, dxn, du, dun])
}

/// Plain-matrix form of [`node_features`] in the graph's own node order.
pub fn assemble_node_features(
    graph: &MeshGraph,
    state: &NodeState,
    stats: &NormStats,
    set: FeatureSet,
) -> Result<Tensor> {
    stats.ensure_fitted()?;
    let ctx = PreparedGraph::identity(graph)?;
    let mut tape = Tape::new();
    let x = tape.constant(state.positions.clone());
    let v = tape.constant(state.velocities.clone());
    let f = node_features(&mut tape, &ctx, stats, set, x, v)?;
    Ok(tape.value(f).clone())
}

/// Plain-matrix form of [`edge_features`], one row per entry of `graph.edges()`.
pub fn build_edge_features(graph: &MeshGraph, state: &NodeState) -> Result<Tensor> {
    if !graph.edges().is_empty() && state.positions.rows() != graph.node_count() {
        return Err(shape_err("edge_features", "state does not match graph"));
    }
    if graph.edges().is_empty() {
        return Err(crate::error::Error::Empty("edge list"));
    }
    let ctx = PreparedGraph::identity(graph)?;
    let mut tape = Tape::new();
    let x = tape.constant(state.positions.clone());
    let e = edge_features(&mut tape, &ctx, x)?;
    Ok(tape.value(e).clone())
}
