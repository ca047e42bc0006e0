//! Pole-impact oracle and design-space sampling.

mod design;
mod oracle;

pub use design::{
    lhs_sample, stratum_of, DesignSample, DesignSpace, DesignVar, VarBounds, IMPACT_SPEED, MORPH_CURVATURE,
    MORPH_FRONT_DEPTH, MORPH_SECTION_DEPTH, MORPH_WIDTH, POLE_POSITION, THICKNESS_OUTER, THICKNESS_PATCH,
};
pub use oracle::{build_scene, simulate, OracleConfig, Pole, Scene, Spring, SpringSystem};

use crate::error::{Error, Result};
use crate::mesh::Sample;

/// LHS designs simulated with the oracle; failures carry the sample id.
pub fn generate_samples(n: usize, space: &DesignSpace, cfg: &OracleConfig, seed: u64) -> Result<Vec<Sample>> {
    lhs_sample(n, space, seed)?
        .iter()
        .map(|d| {
            simulate(d, cfg).map_err(|e| Error::Sample {
                sample: d.id,
                source: Box::new(e),
            })
        })
        .collect()
}
