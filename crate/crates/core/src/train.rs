//! Full-rollout training with AdamW, cosine schedule and early stopping.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{AdamWConfig, CosineSchedule, OptimState, ParamStore, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::mesh::{fit_norm_stats, NodeRole, PreparedGraph, Sample, Trajectory};
use crate::model::{HybridModel, ModelConfig};
use crate::rollout::{rollout_sample, Surrogate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub lr: f64,
    pub lr_floor: f64,
    pub optimizer: AdamWConfig,
    pub patience: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Steps between gradient cuts inside a rollout; `None` keeps the whole
    /// horizon on one graph.
    pub truncation: Option<usize>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            epochs: 200,
            lr: 1e-4,
            lr_floor: 0.0,
            optimizer: AdamWConfig::default(),
            patience: 18,
            grad_clip: Some(1.0),
            seed: 0,
            truncation: None,
        }
    }

    /// Schedule used for desktop-scale runs.
    pub fn desk(model: ModelConfig) -> Self {
        Self {
            epochs: 30,
            lr: 3e-3,
            lr_floor: 3e-5,
            ..Self::new(model)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if !(self.lr > 0.0) || self.lr_floor < 0.0 || self.lr_floor > self.lr {
            return Err(Error::InvalidArgument(format!(
                "need lr > 0 and 0 <= lr_floor <= lr, got {} / {}",
                self.lr, self.lr_floor
            )));
        }
        if self.truncation == Some(0) {
            return Err(Error::InvalidArgument("truncation window must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("gradient clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Mean over FREE nodes and steps `1..=T` of the squared position error.
pub fn position_loss(pred: &Trajectory, reference: &Trajectory, roles: &[NodeRole]) -> Result<f64> {
    if pred.horizon() != reference.horizon() || pred.node_count() != reference.node_count() {
        return Err(shape_err("position_loss", "trajectories differ in shape"));
    }
    if roles.len() != pred.node_count() {
        return Err(shape_err("position_loss", "roles do not match node count"));
    }
    let free: Vec<usize> = (0..roles.len()).filter(|&i| roles[i].is_free()).collect();
    if free.is_empty() {
        return Err(Error::Empty("FREE nodes"));
    }
    let t = pred.horizon();
    if t == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in 1..=t {
        let (p, r) = (&pred.states[s].positions, &reference.states[s].positions);
        for &i in &free {
            sum += p
                .row(i)
                .iter()
                .zip(r.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(sum / (t * free.len()) as f64)
}

/// A training sample relabelled into canonical order.
struct Prepared {
    ctx: PreparedGraph,
    x0: Tensor,
    v0: Tensor,
    targets: Vec<Tensor>,
    free: usize,
    dt: f64,
}

fn prepare(s: &Sample) -> Result<Prepared> {
    let ctx = PreparedGraph::canonical(&s.graph)?;
    let t = &s.trajectory;
    Ok(Prepared {
        x0: ctx.to_internal(&t.states[0].positions),
        v0: ctx.to_internal(&t.states[0].velocities),
        targets: t.states[1..].iter().map(|st| ctx.to_internal(&st.positions)).collect(),
        free: s.graph.free_count(),
        dt: t.dt,
        ctx,
    })
}

/// Closed-loop rollout on `tape` and the normalised position loss.
fn rollout_loss(
    tape: &mut Tape,
    surrogate: &Surrogate,
    params: &ParamStore,
    p: &Prepared,
    truncation: Option<usize>,
) -> Result<Var> {
    if p.free == 0 {
        return Err(Error::Empty("FREE nodes"));
    }
    let inv_scale = 1.0 / surrogate.stats.position_scale;
    let horizon = p.targets.len();
    let dt = p.dt;
    let mask = tape.constant(p.ctx.free_mask.clone());
    let mut x = tape.constant(p.x0.clone());
    let mut v = tape.constant(p.v0.clone());
    let mut total: Option<Var> = None;
    for (t, target) in p.targets.iter().enumerate() {
        if let Some(w) = truncation {
            if t > 0 && t % w == 0 {
                x = tape.constant(tape.value(x).clone());
                v = tape.constant(tape.value(v).clone());
            }
        }
        let out = surrogate.step_with(tape, params, &p.ctx, x, v, t)?;
        let dv = tape.scale(out.accel, dt);
        v = tape.add(v, dv)?;
        let moved = tape.mul(v, mask)?;
        let dx = tape.scale(moved, dt);
        x = tape.add(x, dx)?;
        let r = tape.constant(target.clone());
        let e = tape.sub(x, r)?;
        let e = tape.mul(e, mask)?;
        let e = tape.scale(e, inv_scale);
        let sq = tape.mul(e, e)?;
        let s = tape.sum(sq);
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let total = total.ok_or(Error::Empty("trajectory transitions"))?;
    Ok(tape.scale(total, 1.0 / (horizon * p.free) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss in normalised position units.
    pub train_loss: f64,
    /// Mean full-rollout validation loss in mm².
    pub val_loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// Per-epoch losses; wall times are left out so reruns write identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss_mm2,lr,grad_norm,improved")?;
        writeln!(w, "0,,{},,,true", self.initial_val_loss)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.lr, r.grad_norm, r.improved
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub surrogate: Surrogate,
    pub history: TrainHistory,
}

/// Mean full-rollout position loss (mm²) over `samples`.
pub fn validation_loss(surrogate: &Surrogate, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("validation samples"));
    }
    let mut sum = 0.0;
    for s in samples {
        let r = rollout_sample(surrogate, s)?;
        sum += position_loss(&r.predicted, &s.trajectory, s.graph.roles())?;
    }
    Ok(sum / samples.len() as f64)
}

/// Training loss of `sample` under `params`, without gradients.
pub fn sample_loss(
    surrogate: &Surrogate,
    params: &ParamStore,
    sample: &Sample,
    truncation: Option<usize>,
) -> Result<f64> {
    let p = prepare(sample)?;
    let mut tape = Tape::new();
    let loss = rollout_loss(&mut tape, surrogate, params, &p, truncation)?;
    Ok(tape.value(loss).data()[0])
}

/// Gradient of the rollout loss of one sample.
pub fn loss_and_grads(surrogate: &Surrogate, sample: &Sample, truncation: Option<usize>) -> Result<(f64, ParamStore)> {
    let p = prepare(sample)?;
    let mut tape = Tape::new();
    let loss = rollout_loss(&mut tape, surrogate, &surrogate.params, &p, truncation)?;
    tape.backward(loss)?;
    let mut params = surrogate.params.clone();
    params.zero_grads();
    params.accumulate_grads(&tape);
    Ok((tape.value(loss).data()[0], params))
}

/// Train on `train`, early-stopping on `val`. `on_epoch` sees every record
/// and, when validation improved, the new best surrogate.
pub fn train<F>(cfg: &TrainConfig, train: &[Sample], val: &[Sample], mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, Option<&Surrogate>) -> Result<()>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    let stats = fit_norm_stats(train)?;
    let (model, params) = HybridModel::new(cfg.model.clone(), cfg.seed)?;
    let mut current = Surrogate::new(model, params, stats)?;
    let prepared = train.iter().map(prepare).collect::<Result<Vec<_>>>()?;
    let schedule = CosineSchedule {
        initial_lr: cfg.lr,
        floor_lr: cfg.lr_floor,
        total_steps: cfg.epochs * train.len(),
    };
    let mut opt = OptimState::new(&current.params, cfg.optimizer, schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let initial = validation_loss(&current, val)?;
    let mut history = TrainHistory {
        initial_val_loss: initial,
        best_val_loss: initial,
        ..TrainHistory::default()
    };
    let mut best = current.clone();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let lr = opt.current_lr();
        let mut loss_sum = 0.0;
        let mut grad_sum = 0.0;
        for (step, &k) in order.iter().enumerate() {
            let mut tape = Tape::new();
            let loss = rollout_loss(&mut tape, &current, &current.params, &prepared[k], cfg.truncation)?;
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            tape.backward(loss)?;
            current.params.zero_grads();
            current.params.accumulate_grads(&tape);
            let gn = match cfg.grad_clip {
                Some(c) => current.params.clip_grad_norm(c),
                None => current.params.grad_norm(),
            };
            if !gn.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            opt.step(&mut current.params)?;
            loss_sum += lv;
            grad_sum += gn;
        }
        current.params.zero_grads();
        let val_loss = match validation_loss(&current, val) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFinite { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let improved = val_loss < history.best_val_loss;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            lr,
            grad_norm: grad_sum / train.len() as f64,
            improved,
            seconds: start.elapsed().as_secs_f64(),
        };
        if improved {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = current.clone();
            since_best = 0;
            on_epoch(&rec, Some(&best))?;
        } else {
            since_best += 1;
            on_epoch(&rec, None)?;
        }
        history.records.push(rec);
        if since_best >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        surrogate: best,
        history,
    })
}
