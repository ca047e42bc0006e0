//! Hybrid mesh-attention surrogates for crash trajectories.
//!
//! Local message passing on the structural mesh, token-based global
//! attention, a sparse contact block, and closed-loop Euler rollout, plus the
//! pole-impact oracle, design sampling, split diagnostics and metrics used to
//! train and evaluate them.

pub mod contact;
pub mod engine;
pub mod error;
pub mod groundtruth;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod rollout;
pub mod split;
pub mod train;

pub use contact::{build_contacts, ContactPair, ContactParams, ContactSet};
pub use engine::{Tape, Tensor};
pub use error::{Error, Result};
pub use groundtruth::{DesignSample, DesignSpace, OracleConfig};
pub use mesh::{MeshGraph, NodeRole, NodeState, NormStats, PreparedGraph, Sample, Trajectory};
pub use metrics::{EvalReport, RmseSeries, SurvivalSeries};
pub use model::{Family, HybridModel, ModelConfig};
pub use rollout::{RolloutInit, RolloutResult, Surrogate};
pub use split::{SplitConfig, SplitName, SplitReport};
pub use train::{TrainConfig, TrainHistory, TrainOutcome};
