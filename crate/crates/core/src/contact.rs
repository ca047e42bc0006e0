//! Sparse proximity contacts: radius search over the current geometry,
//! thickness-aware gaps and per-node top-k selection.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::mesh::MeshGraph;

/// Radius used when none is configured, as a multiple of the median
/// reference edge length.
pub const DEFAULT_RADIUS_FACTOR: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Search radius in mm; `None` resolves from the mesh.
    pub radius: Option<f64>,
    pub k: usize,
    pub alpha_init: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            radius: None,
            k: 32,
            alpha_init: 1e-3,
        }
    }
}

impl ContactParams {
    pub fn resolve_radius(&self, graph: &MeshGraph) -> f64 {
        self.radius
            .unwrap_or_else(|| DEFAULT_RADIUS_FACTOR * graph.median_edge_length())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "contact radius must be positive, got {r}"
                )));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("contact k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unordered candidate with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    /// Node whose top-k selection admitted the pair.
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub pairs: Vec<ContactPair>,
    pub built_at: usize,
    pub k: usize,
}

impl ContactSet {
    pub fn empty(built_at: usize, k: usize) -> Self {
        Self {
            pairs: Vec::new(),
            built_at,
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Relabel with `map[old] = new`, re-sorting by `(i, j)`.
    pub fn relabel(&self, map: &[usize]) -> Self {
        let mut pairs: Vec<ContactPair> = self
            .pairs
            .iter()
            .map(|p| ContactPair {
                i: map[p.i],
                j: map[p.j],
                ..*p
            })
            .collect();
        pairs.sort_by_key(|p| (p.i, p.j));
        Self {
            pairs,
            built_at: self.built_at,
            k: self.k,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,distance,gap")?;
        for p in &self.pairs {
            writeln!(w, "{},{},{},{}", p.i, p.j, p.distance, p.gap)?;
        }
        Ok(())
    }
}

fn cell_of(p: &[f64], size: f64) -> [i64; 3] {
    let mut c = [0i64; 3];
    for (k, &v) in p.iter().enumerate() {
        c[k] = (v / size).floor() as i64;
    }
    c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// All node pairs within `radius` that are not mesh edges, found with a
/// uniform hash grid of cell size `radius`. Sorted by `(i, j)`.
pub fn radius_search(positions: &Tensor, radius: f64, graph: &MeshGraph) -> Result<Vec<Candidate>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let n = positions.rows();
    let dim = positions.cols();
    if n != graph.node_count() || dim != graph.dim() {
        return Err(shape_err(
            "radius_search",
            format!("{n}x{dim} positions for graph of {}", graph.node_count()),
        ));
    }
    if !positions.is_finite() {
        return Err(Error::InvalidArgument("non-finite positions in radius search".into()));
    }
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for i in 0..n {
        grid.entry(cell_of(positions.row(i), radius)).or_default().push(i);
    }
    let offsets: Vec<[i64; 3]> = {
        let r = |d: usize| if d < dim { -1..=1 } else { 0..=0 };
        let mut v = Vec::new();
        for a in r(0) {
            for b in r(1) {
                for c in r(2) {
                    v.push([a, b, c]);
                }
            }
        }
        v
    };
    let mut out = Vec::new();
    for i in 0..n {
        let pi = positions.row(i);
        let base = cell_of(pi, radius);
        for off in &offsets {
            let key = [base[0] + off[0], base[1] + off[1], base[2] + off[2]];
            let Some(bucket) = grid.get(&key) else { continue };
            for &j in bucket {
                if j <= i || graph.is_edge(i, j) {
                    continue;
                }
                let d = dist(pi, positions.row(j));
                if d <= radius {
                    out.push(Candidate { i, j, distance: d });
                }
            }
        }
    }
    out.sort_by_key(|c| (c.i, c.j));
    Ok(out)
}

/// Thickness-aware gaps and per-node top-k.
///
/// `gap = max(0, distance - (t_i + t_j)/2)`. Every node keeps its `k`
/// nearest incident candidates (ties: smaller distance, then smaller partner
/// index); a pair enters the set once, sourced by the smaller-indexed node
/// that selected it.
pub fn filter_and_sparsify(
    candidates: &[Candidate],
    graph: &MeshGraph,
    params: &ContactParams,
    built_at: usize,
) -> Result<ContactSet> {
    params.validate()?;
    let n = graph.node_count();
    let mut incident: Vec<Vec<(f64, usize, usize)>> = vec![Vec::new(); n];
    for (idx, c) in candidates.iter().enumerate() {
        if c.i >= n || c.j >= n || c.i == c.j {
            return Err(Error::InvalidArgument(format!("bad candidate ({}, {})", c.i, c.j)));
        }
        incident[c.i].push((c.distance, c.j, idx));
        incident[c.j].push((c.distance, c.i, idx));
    }
    let mut source: Vec<Option<usize>> = vec![None; candidates.len()];
    for (node, list) in incident.iter_mut().enumerate() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, _, idx) in list.iter().take(params.k) {
            if source[idx].is_none() {
                source[idx] = Some(node);
            }
        }
    }
    let mut pairs: Vec<ContactPair> = candidates
        .iter()
        .zip(&source)
        .filter_map(|(c, s)| {
            let s = (*s)?;
            let other = if s == c.i { c.j } else { c.i };
            let half = 0.5 * (graph.thickness(c.i) + graph.thickness(c.j));
            Some(ContactPair {
                i: s,
                j: other,
                distance: c.distance,
                gap: (c.distance - half).max(0.0),
            })
        })
        .collect();
    pairs.sort_by_key(|p| (p.i, p.j));
    Ok(ContactSet {
        pairs,
        built_at,
        k: params.k,
    })
}

/// Radius search followed by filtering, for one configuration.
pub fn build_contacts(
    positions: &Tensor,
    graph: &MeshGraph,
    params: &ContactParams,
    built_at: usize,
) -> Result<ContactSet> {
    let r = params.resolve_radius(graph);
    let c = radius_search(positions, r, graph)?;
    filter_and_sparsify(&c, graph, params, built_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NodeRole;

    fn free_graph(pos: &[f64], dim: usize, pairs: &[(usize, usize)], thick: f64) -> MeshGraph {
        let n = pos.len() / dim;
        MeshGraph::from_undirected(
            Tensor::from_rows(n, dim, pos.to_vec()).unwrap(),
            pairs,
            vec![NodeRole::Free; n],
            &vec![thick; n],
        )
        .unwrap()
    }

    #[test]
    fn too_far_is_empty() {
        let g = free_graph(&[0.0, 0.0, 5.0, 0.0], 2, &[], 0.0);
        assert!(radius_search(g.reference_positions(), 4.0, &g).unwrap().is_empty());
    }

    #[test]
    fn one_pair_within_radius() {
        let g = free_graph(&[0.0, 0.0, 3.0, 0.0], 2, &[], 0.0);
        let c = radius_search(g.reference_positions(), 4.0, &g).unwrap();
        assert_eq!(
            c,
            vec![Candidate {
                i: 0,
                j: 1,
                distance: 3.0
            }]
        );
    }

    #[test]
    fn mesh_edges_excluded() {
        let g = free_graph(&[0.0, 0.0, 3.0, 0.0], 2, &[(0, 1)], 0.0);
        assert!(radius_search(g.reference_positions(), 4.0, &g).unwrap().is_empty());
    }

    #[test]
    fn invalid_radius() {
        let g = free_graph(&[0.0, 0.0, 3.0, 0.0], 2, &[], 0.0);
        assert!(radius_search(g.reference_positions(), 0.0, &g).is_err());
    }

    #[test]
    fn k1_keeps_nearest_for_node() {
        let g = free_graph(&[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, -3.0, 0.0], 2, &[], 0.0);
        let cands = radius_search(g.reference_positions(), 10.0, &g).unwrap();
        let params = ContactParams {
            radius: Some(10.0),
            k: 1,
            alpha_init: 0.0,
        };
        let set = filter_and_sparsify(&cands, &g, &params, 0).unwrap();
        let from0: Vec<_> = set.pairs.iter().filter(|p| p.i == 0).collect();
        assert_eq!(from0.len(), 1);
        assert_eq!(from0[0].j, 1);
        assert_eq!(from0[0].distance, 1.0);
    }

    #[test]
    fn gap_clamped_at_zero() {
        let g = free_graph(&[0.0, 0.0, 1.0, 0.0, 10.0, 0.0], 2, &[], 1.5);
        let params = ContactParams {
            radius: Some(20.0),
            k: 4,
            alpha_init: 0.0,
        };
        let set = build_contacts(g.reference_positions(), &g, &params, 3).unwrap();
        assert_eq!(set.built_at, 3);
        let p01 = set.pairs.iter().find(|p| p.i == 0 && p.j == 1).unwrap();
        assert_eq!(p01.gap, 0.0);
        let p12 = set.pairs.iter().find(|p| p.i == 1 && p.j == 2).unwrap();
        assert_eq!(p12.gap, 9.0 - 1.5);
    }

    #[test]
    fn default_radius_is_three_median_edges() {
        let g = free_graph(&[0.0, 0.0, 2.0, 0.0, 4.0, 0.0], 2, &[(0, 1), (1, 2)], 0.0);
        assert_eq!(ContactParams::default().resolve_radius(&g), 6.0);
        assert_eq!(ContactParams::default().k, 32);
    }

    #[test]
    fn csv_dump() {
        let set = ContactSet {
            pairs: vec![ContactPair {
                i: 1,
                j: 4,
                distance: 2.5,
                gap: 1.0,
            }],
            built_at: 0,
            k: 2,
        };
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,distance,gap\n1,4,2.5,1\n");
    }
}
