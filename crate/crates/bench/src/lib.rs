//! Shared fixtures for the benchmarks.

use meshcrash::groundtruth::{generate_samples, DesignSpace, OracleConfig};
use meshcrash::mesh::fit_norm_stats;
use meshcrash::{Family, HybridModel, ModelConfig, Sample, Surrogate};

/// A few oracle trajectories on the default lattice.
pub fn samples(n: usize, horizon: usize) -> Vec<Sample> {
    let cfg = OracleConfig {
        horizon,
        ..OracleConfig::default()
    };
    generate_samples(n, &DesignSpace::default(), &cfg, 1).expect("oracle runs")
}

/// Untrained desk-scale surrogate with statistics fitted on `data`.
pub fn surrogate(family: Family, data: &[Sample]) -> Surrogate {
    let (m, p) = HybridModel::new(ModelConfig::desk(family, data[0].graph.dim()), 0).expect("valid config");
    Surrogate::new(m, p, fit_norm_stats(data).expect("non-empty data")).expect("matching stats")
}
