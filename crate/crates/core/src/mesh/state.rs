use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::groundtruth::DesignSample;

use super::graph::MeshGraph;

/// Positions (mm) and velocities (mm/ms) of every node at one output frame.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub positions: Tensor,
    pub velocities: Tensor,
    pub time_index: usize,
}

impl NodeState {
    pub fn new(positions: Tensor, velocities: Tensor, time_index: usize) -> Result<Self> {
        if positions.shape() != velocities.shape() {
            return Err(shape_err(
                "node_state",
                format!(
                    "positions {:?} vs velocities {:?}",
                    positions.shape(),
                    velocities.shape()
                ),
            ));
        }
        if !positions.is_finite() || !velocities.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite state at t={time_index}")));
        }
        Ok(Self {
            positions,
            velocities,
            time_index,
        })
    }
}

/// Backward finite difference `(x_t - x_prev) / dt`.
pub fn estimate_velocity(x_t: &Tensor, x_prev: &Tensor, dt: f64) -> Result<Tensor> {
    if x_t.shape() != x_prev.shape() {
        return Err(shape_err(
            "estimate_velocity",
            format!("{:?} vs {:?}", x_t.shape(), x_prev.shape()),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let v = x_t
        .data()
        .iter()
        .zip(x_prev.data())
        .map(|(a, b)| (a - b) / dt)
        .collect();
    Tensor::new(x_t.shape().to_vec(), v)
}

/// `T + 1` frames at a constant output interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<NodeState>,
    pub dt: f64,
    pub design: Option<DesignSample>,
    pub survival_pair: (usize, usize),
}

impl Trajectory {
    /// Assemble from positions plus the physical initial velocity; later
    /// velocities come from [`estimate_velocity`].
    pub fn from_positions(
        positions: Vec<Tensor>,
        initial_velocity: Tensor,
        dt: f64,
        design: Option<DesignSample>,
        survival_pair: (usize, usize),
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Empty("trajectory positions"));
        }
        let mut states = Vec::with_capacity(positions.len());
        let mut prev: Option<&Tensor> = None;
        for (t, x) in positions.iter().enumerate() {
            let v = match prev {
                None => initial_velocity.clone(),
                Some(p) => estimate_velocity(x, p, dt)?,
            };
            states.push(NodeState::new(x.clone(), v, t)?);
            prev = Some(x);
        }
        Ok(Self {
            states,
            dt,
            design,
            survival_pair,
        })
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.states[0].positions.rows()
    }

    pub fn dim(&self) -> usize {
        self.states[0].positions.cols()
    }

    /// Target accelerations `(v_{t+1} - v_t) / dt` for `t = 0..T`.
    pub fn accelerations(&self) -> Vec<Tensor> {
        self.states
            .windows(2)
            .map(|w| {
                let a = w[1]
                    .velocities
                    .data()
                    .iter()
                    .zip(w[0].velocities.data())
                    .map(|(b, a)| (b - a) / self.dt)
                    .collect();
                Tensor::new(w[0].velocities.shape().to_vec(), a).expect("same shape")
            })
            .collect()
    }

    /// Check frame indexing, shapes and that RIGID nodes never move.
    pub fn validate(&self, graph: &MeshGraph) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let n = graph.node_count();
        let (a, b) = self.survival_pair;
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidArgument(format!("bad survival pair ({a},{b})")));
        }
        let x0 = &self.states[0].positions;
        for (k, s) in self.states.iter().enumerate() {
            if s.time_index != k {
                return Err(Error::InvalidArgument(format!(
                    "state {k} has time index {}",
                    s.time_index
                )));
            }
            if s.positions.rows() != n || s.positions.cols() != graph.dim() {
                return Err(shape_err(
                    "trajectory",
                    format!("state {k} shape {:?}", s.positions.shape()),
                ));
            }
            for (node, role) in graph.roles().iter().enumerate() {
                if !role.is_free() && s.positions.row(node) != x0.row(node) {
                    return Err(Error::InvalidArgument(format!("rigid node {node} moved at t={k}")));
                }
            }
        }
        Ok(())
    }
}

/// One simulated design: its mesh plus trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub graph: MeshGraph,
    pub trajectory: Trajectory,
}
