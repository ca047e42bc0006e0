//! Structural mesh, nodal states, feature assembly and normalisation.

mod features;
mod graph;
mod prepared;
mod state;
mod stats;

pub use features::{
    assemble_node_features, build_edge_features, edge_feature_width, edge_features, node_features, FeatureSet,
};
pub use graph::{invert_permutation, permute_rows, MeshGraph, NodeRole, BASE_STATIC_DIM, THICKNESS_COL};
pub use prepared::PreparedGraph;
pub use state::{estimate_velocity, NodeState, Sample, Trajectory};
pub use stats::{fit_norm_stats, FeatureLayout, NormStats, STD_FLOOR};
