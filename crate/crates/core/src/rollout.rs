//! Closed-loop autoregressive rollout with forward Euler integration.

use std::time::Instant;

use crate::contact::{build_contacts, ContactSet};
use crate::engine::{ParamStore, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::mesh::{MeshGraph, NodeRole, NodeState, NormStats, PreparedGraph, Sample, Trajectory};
use crate::model::HybridModel;

/// Trained model bundled with its parameters and normalisation statistics.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub model: HybridModel,
    pub params: ParamStore,
    pub stats: NormStats,
}

/// Physical accelerations of one step, in internal order.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// Denormalised accelerations with RIGID rows zeroed.
    pub accel: Var,
    pub slice_weights: Vec<Var>,
    pub contact_count: usize,
}

impl Surrogate {
    pub fn new(model: HybridModel, params: ParamStore, stats: NormStats) -> Result<Self> {
        stats.ensure_fitted()?;
        Ok(Self { model, params, stats })
    }

    /// Contact set for `positions` (internal order of `ctx`), when the family
    /// has a contact block.
    pub fn contacts(&self, ctx: &PreparedGraph, positions: &Tensor, t: usize) -> Result<Option<ContactSet>> {
        match &self.model.config.contact {
            None => Ok(None),
            Some(p) => Ok(Some(build_contacts(positions, &ctx.graph, p, t)?)),
        }
    }

    /// Forward pass, denormalisation and RIGID masking on `tape`.
    pub fn step(&self, tape: &mut Tape, ctx: &PreparedGraph, x: Var, v: Var, t: usize) -> Result<StepOutput> {
        self.step_with(tape, &self.params, ctx, x, v, t)
    }

    /// As [`Surrogate::step`] with an explicit parameter store.
    pub fn step_with(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        ctx: &PreparedGraph,
        x: Var,
        v: Var,
        t: usize,
    ) -> Result<StepOutput> {
        let contacts = self.contacts(ctx, tape.value(x), t)?;
        let f = self
            .model
            .forward(tape, params, ctx, &self.stats, x, v, contacts.as_ref())?;
        let dim = ctx.dim();
        let std = tape.constant(Tensor::from_rows(1, dim, self.stats.accel_std.clone())?);
        let mean = tape.constant(Tensor::from_rows(1, dim, self.stats.accel_mean.clone())?);
        let a = tape.mul_row(f.accel, std)?;
        let a = tape.add_row(a, mean)?;
        let mask = tape.constant(ctx.free_mask.clone());
        Ok(StepOutput {
            accel: tape.mul(a, mask)?,
            slice_weights: f.slice_weights,
            contact_count: contacts.map_or(0, |c| c.len()),
        })
    }
}

/// `v' = v + dt·a`, `x' = x + dt·v'` for FREE nodes; RIGID nodes keep `x`
/// and `v`.
pub fn euler_step(state: &NodeState, accel: &Tensor, dt: f64, roles: &[NodeRole]) -> Result<NodeState> {
    if accel.shape() != state.positions.shape() || roles.len() != state.positions.rows() {
        return Err(shape_err(
            "euler_step",
            format!(
                "acceleration {:?} for state {:?}",
                accel.shape(),
                state.positions.shape()
            ),
        ));
    }
    if !accel.is_finite() {
        return Err(Error::NonFinite { step: state.time_index });
    }
    let dim = state.positions.cols();
    let mut x = state.positions.clone();
    let mut v = state.velocities.clone();
    for (i, role) in roles.iter().enumerate() {
        if !role.is_free() {
            continue;
        }
        for c in 0..dim {
            let k = i * dim + c;
            let vn = v.data()[k] + dt * accel.data()[k];
            v.data_mut()[k] = vn;
            x.data_mut()[k] += dt * vn;
        }
    }
    if !x.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite {
            step: state.time_index + 1,
        });
    }
    Ok(NodeState {
        positions: x,
        velocities: v,
        time_index: state.time_index + 1,
    })
}

/// How the first state of a rollout is formed.
#[derive(Clone, Debug)]
pub enum RolloutInit {
    /// `x_0` and the physical initial velocity.
    State { x0: Tensor, v0: Tensor },
    /// `x_0` and `x_1`; the rollout starts at frame 1 with `v_1` from the
    /// backward difference.
    TwoFrames { x0: Tensor, x1: Tensor },
}

#[derive(Clone, Debug)]
pub struct RolloutResult {
    pub predicted: Trajectory,
    /// Contact pairs used at each predicted step.
    pub per_step_contact_counts: Vec<usize>,
    /// Largest `|Σ_m W_im - 1|` over every slice-weight row seen.
    pub slice_row_error: f64,
    pub wall_time: f64,
}

fn initial_states(init: &RolloutInit, dt: f64) -> Result<Vec<NodeState>> {
    Ok(match init {
        RolloutInit::State { x0, v0 } => vec![NodeState::new(x0.clone(), v0.clone(), 0)?],
        RolloutInit::TwoFrames { x0, x1 } => {
            let v1 = crate::mesh::estimate_velocity(x1, x0, dt)?;
            let z = Tensor::zeros(x0.rows(), x0.cols());
            vec![NodeState::new(x0.clone(), z, 0)?, NodeState::new(x1.clone(), v1, 1)?]
        }
    })
}

/// Generic closed loop: `accel(state)` returns accelerations for every node
/// plus the number of contacts it used.
pub fn rollout_with<F>(
    graph: &MeshGraph,
    init: &RolloutInit,
    horizon: usize,
    dt: f64,
    survival_pair: (usize, usize),
    mut accel: F,
) -> Result<(Trajectory, Vec<usize>)>
where
    F: FnMut(&NodeState) -> Result<(Tensor, usize)>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut states = initial_states(init, dt)?;
    if states[0].positions.rows() != graph.node_count() || states[0].positions.cols() != graph.dim() {
        return Err(shape_err("rollout", "initial state does not match graph"));
    }
    let mut counts = Vec::with_capacity(horizon);
    while states.len() <= horizon {
        let cur = states.last().expect("non-empty");
        let (a, c) = accel(cur)?;
        if !a.is_finite() {
            return Err(Error::NonFinite { step: cur.time_index });
        }
        let next = euler_step(cur, &a, dt, graph.roles())?;
        counts.push(c);
        states.push(next);
    }
    Ok((
        Trajectory {
            states,
            dt,
            design: None,
            survival_pair,
        },
        counts,
    ))
}

/// Autoregressive rollout of a surrogate over `horizon` frames, rebuilding
/// contact from the predicted geometry at each step.
pub fn rollout(
    surrogate: &Surrogate,
    graph: &MeshGraph,
    init: &RolloutInit,
    horizon: usize,
    dt: f64,
    survival_pair: (usize, usize),
) -> Result<RolloutResult> {
    let start = Instant::now();
    let ctx = PreparedGraph::canonical(graph)?;
    let mut slice_err: f64 = 0.0;
    let (predicted, counts) = rollout_with(graph, init, horizon, dt, survival_pair, |s| {
        let mut tape = Tape::new();
        let x = tape.constant(ctx.to_internal(&s.positions));
        let v = tape.constant(ctx.to_internal(&s.velocities));
        let out = surrogate.step(&mut tape, &ctx, x, v, s.time_index)?;
        for w in &out.slice_weights {
            let w = tape.value(*w);
            for r in 0..w.rows() {
                slice_err = slice_err.max((w.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
        Ok((ctx.to_original(tape.value(out.accel)), out.contact_count))
    })?;
    Ok(RolloutResult {
        predicted,
        per_step_contact_counts: counts,
        slice_row_error: slice_err,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Rollout seeded from a sample's frame 0 and physical initial velocity,
/// over the sample's own horizon.
pub fn rollout_sample(surrogate: &Surrogate, sample: &Sample) -> Result<RolloutResult> {
    let t = &sample.trajectory;
    let init = RolloutInit::State {
        x0: t.states[0].positions.clone(),
        v0: t.states[0].velocities.clone(),
    };
    let mut r = rollout(surrogate, &sample.graph, &init, t.horizon(), t.dt, t.survival_pair)?;
    r.predicted.design = t.design.clone();
    Ok(r)
}

/// Zero-acceleration baseline: pure inertial motion from the initial state.
pub fn drift_rollout(sample: &Sample) -> Result<Trajectory> {
    let t = &sample.trajectory;
    let init = RolloutInit::State {
        x0: t.states[0].positions.clone(),
        v0: t.states[0].velocities.clone(),
    };
    let zeros = Tensor::zeros(t.node_count(), t.dim());
    let (mut p, _) = rollout_with(&sample.graph, &init, t.horizon(), t.dt, t.survival_pair, |_| {
        Ok((zeros.clone(), 0))
    })?;
    p.design = t.design.clone();
    Ok(p)
}
