use std::cmp::Ordering;
use std::sync::Arc;

use super::graph::{invert_permutation, permute_rows, MeshGraph};
use crate::engine::Tensor;
use crate::error::Result;

/// A mesh relabelled into the order every model computes in, plus the
/// constant tensors derived from it.
///
/// In canonical mode nodes are sorted by reference position, so any
/// relabelling of the same mesh yields the same internal problem and
/// therefore bit-identical outputs after mapping back.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graph: MeshGraph,
    /// `order[k]` is the original index of internal node `k`.
    pub order: Vec<usize>,
    /// `rank[i]` is the internal index of original node `i`.
    pub rank: Vec<usize>,
    pub receivers: Arc<[usize]>,
    pub senders: Arc<[usize]>,
    pub reference_positions: Tensor,
    /// Reference coordinates min-max scaled to `[0, 1]` per axis.
    pub normalised_positions: Tensor,
    pub role_one_hot: Tensor,
    pub thickness: Tensor,
    /// `1` on FREE rows, `0` on RIGID rows, shape `N×dim`.
    pub free_mask: Tensor,
    pub median_edge_length: f64,
}

impl PreparedGraph {
    pub fn canonical(graph: &MeshGraph) -> Result<Self> {
        let x = graph.reference_positions();
        let mut order: Vec<usize> = (0..graph.node_count()).collect();
        order.sort_by(|&a, &b| {
            x.row(a)
                .iter()
                .zip(x.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
                .then_with(|| {
                    let fa = graph.static_features().row(a);
                    let fb = graph.static_features().row(b);
                    fa.iter()
                        .zip(fb)
                        .map(|(p, q)| p.total_cmp(q))
                        .find(|o| *o != Ordering::Equal)
                        .unwrap_or(Ordering::Equal)
                })
                .then(a.cmp(&b))
        });
        Self::with_order(graph, order)
    }

    /// Keep the original labels.
    pub fn identity(graph: &MeshGraph) -> Result<Self> {
        Self::with_order(graph, (0..graph.node_count()).collect())
    }

    fn with_order(graph: &MeshGraph, order: Vec<usize>) -> Result<Self> {
        let n = graph.node_count();
        let rank = invert_permutation(&order, n)?;
        let g = if order.iter().enumerate().all(|(k, &o)| k == o) {
            graph.clone()
        } else {
            graph.relabel(&rank)?
        };
        let dim = g.dim();
        let receivers: Arc<[usize]> = g.edges().iter().map(|e| e.0).collect();
        let senders: Arc<[usize]> = g.edges().iter().map(|e| e.1).collect();
        let reference_positions = g.reference_positions().clone();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for i in 0..n {
            for c in 0..dim {
                let v = reference_positions.get(i, c);
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let mut norm = Vec::with_capacity(n * dim);
        for i in 0..n {
            for c in 0..dim {
                let span = hi[c] - lo[c];
                let v = reference_positions.get(i, c);
                norm.push(if span > 0.0 { (v - lo[c]) / span } else { 0.0 });
            }
        }
        let role_one_hot = Tensor::from_rows(n, 2, g.roles().iter().flat_map(|r| r.one_hot()).collect())?;
        let thickness = Tensor::from_rows(n, 1, (0..n).map(|i| g.thickness(i)).collect())?;
        let free_mask = Tensor::from_rows(
            n,
            dim,
            g.roles()
                .iter()
                .flat_map(|r| std::iter::repeat_n(if r.is_free() { 1.0 } else { 0.0 }, dim))
                .collect(),
        )?;
        Ok(Self {
            median_edge_length: g.median_edge_length(),
            normalised_positions: Tensor::from_rows(n, dim, norm)?,
            graph: g,
            order,
            rank,
            receivers,
            senders,
            reference_positions,
            role_one_hot,
            thickness,
            free_mask,
        })
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    pub fn has_edges(&self) -> bool {
        !self.receivers.is_empty()
    }

    /// Rows of an original-order tensor in internal order.
    pub fn to_internal(&self, t: &Tensor) -> Tensor {
        permute_rows(t, &self.order)
    }

    /// Rows of an internal-order tensor back in original order.
    pub fn to_original(&self, t: &Tensor) -> Tensor {
        permute_rows(t, &self.rank)
    }
}
