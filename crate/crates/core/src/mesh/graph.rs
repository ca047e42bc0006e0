use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    Free,
    Rigid,
}

impl NodeRole {
    pub fn is_free(self) -> bool {
        self == NodeRole::Free
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            NodeRole::Free => [1.0, 0.0],
            NodeRole::Rigid => [0.0, 1.0],
        }
    }
}

/// Column of the per-node thickness inside `static_features`.
pub const THICKNESS_COL: usize = 2;
/// Minimum static feature layout: role one-hot (2) followed by thickness (1).
pub const BASE_STATIC_DIM: usize = 3;

/// Structural mesh: connectivity, node roles, static features and the
/// undeformed reference configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshGraph {
    dim: usize,
    edges: Vec<(usize, usize)>,
    roles: Vec<NodeRole>,
    static_features: Tensor,
    reference_positions: Tensor,
}

impl MeshGraph {
    /// Build from a directed edge list that must contain each direction once.
    pub fn new(
        reference_positions: Tensor,
        mut edges: Vec<(usize, usize)>,
        roles: Vec<NodeRole>,
        static_features: Tensor,
    ) -> Result<Self> {
        let n = reference_positions.rows();
        let dim = reference_positions.cols();
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("spatial dimension {dim} not in 2..=3")));
        }
        if roles.len() != n || static_features.rows() != n {
            return Err(shape_err(
                "mesh_graph",
                format!(
                    "{n} nodes, {} roles, {} feature rows",
                    roles.len(),
                    static_features.rows()
                ),
            ));
        }
        if static_features.cols() < BASE_STATIC_DIM {
            return Err(shape_err(
                "mesh_graph",
                "static features need role one-hot and thickness",
            ));
        }
        if !roles.iter().any(|r| r.is_free()) {
            return Err(Error::InvalidArgument("mesh has no FREE node".into()));
        }
        if !reference_positions.is_finite() || !static_features.is_finite() {
            return Err(Error::InvalidArgument("non-finite reference data".into()));
        }
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidArgument(format!("duplicate edge {:?}", w[0])));
            }
        }
        for &(i, j) in &edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            if edges.binary_search(&(j, i)).is_err() {
                return Err(Error::InvalidArgument(format!("edge ({i},{j}) has no reverse")));
            }
        }
        Ok(Self {
            dim,
            edges,
            roles,
            static_features,
            reference_positions,
        })
    }

    /// Build from undirected pairs, with the base static layout
    /// `[free, rigid, thickness]`.
    pub fn from_undirected(
        reference_positions: Tensor,
        pairs: &[(usize, usize)],
        roles: Vec<NodeRole>,
        thickness: &[f64],
    ) -> Result<Self> {
        let n = reference_positions.rows();
        if thickness.len() != n {
            return Err(shape_err(
                "mesh_graph",
                format!("{} thickness values for {n} nodes", thickness.len()),
            ));
        }
        let mut feats = Vec::with_capacity(n * BASE_STATIC_DIM);
        for (r, &t) in roles.iter().zip(thickness) {
            feats.extend_from_slice(&r.one_hot());
            feats.push(t);
        }
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(i, j) in pairs {
            edges.push((i, j));
            edges.push((j, i));
        }
        Self::new(
            reference_positions,
            edges,
            roles,
            Tensor::from_rows(n, BASE_STATIC_DIM, feats)?,
        )
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Directed edges, sorted, each direction present once.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn static_features(&self) -> &Tensor {
        &self.static_features
    }

    pub fn reference_positions(&self) -> &Tensor {
        &self.reference_positions
    }

    pub fn thickness(&self, node: usize) -> f64 {
        self.static_features.get(node, THICKNESS_COL)
    }

    pub fn free_count(&self) -> usize {
        self.roles.iter().filter(|r| r.is_free()).count()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Reference lengths of undirected edges.
    pub fn edge_lengths(&self) -> Vec<f64> {
        let x = &self.reference_positions;
        self.edges
            .iter()
            .filter(|(i, j)| i < j)
            .map(|&(i, j)| {
                x.row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn median_edge_length(&self) -> f64 {
        let mut l = self.edge_lengths();
        if l.is_empty() {
            return 0.0;
        }
        l.sort_by(f64::total_cmp);
        let m = l.len() / 2;
        if l.len() % 2 == 1 {
            l[m]
        } else {
            0.5 * (l[m - 1] + l[m])
        }
    }

    /// Relabel nodes: new index `perm[i]` holds old node `i`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        let inv = invert_permutation(perm, n)?;
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        let roles = inv.iter().map(|&o| self.roles[o]).collect();
        Self::new(
            permute_rows(&self.reference_positions, &inv),
            edges,
            roles,
            permute_rows(&self.static_features, &inv),
        )
    }
}

/// `out[r] = t[order[r]]`.
pub fn permute_rows(t: &Tensor, order: &[usize]) -> Tensor {
    let c = t.cols();
    let mut out = Vec::with_capacity(order.len() * c);
    for &o in order {
        out.extend_from_slice(t.row(o));
    }
    Tensor::from_rows(order.len(), c, out).expect("permutation preserves size")
}

pub fn invert_permutation(perm: &[usize], n: usize) -> Result<Vec<usize>> {
    if perm.len() != n {
        return Err(shape_err("permutation", format!("length {} for {n} nodes", perm.len())));
    }
    let mut inv = vec![usize::MAX; n];
    for (i, &p) in perm.iter().enumerate() {
        if p >= n || inv[p] != usize::MAX {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        inv[p] = i;
    }
    Ok(inv)
}
