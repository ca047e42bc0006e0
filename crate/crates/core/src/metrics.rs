//! Displacement RMSE series, relative error and survival-space error.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::mesh::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseSeries {
    /// `RMSE_t` for `t = 0..=T`; entry 0 is always zero.
    pub per_step: Vec<f64>,
    /// Mean over `t = 1..=T`.
    pub mean: f64,
    pub final_step: f64,
    /// `RMSE_T` over the RMS ground-truth displacement magnitude at `T`.
    pub relative: f64,
}

fn check_pair(pred: &Trajectory, reference: &Trajectory) -> Result<()> {
    if pred.horizon() != reference.horizon() {
        return Err(shape_err(
            "metrics",
            format!("horizon {} vs {}", pred.horizon(), reference.horizon()),
        ));
    }
    if pred.node_count() != reference.node_count() || pred.dim() != reference.dim() {
        return Err(shape_err("metrics", "node count or dimension differ"));
    }
    if pred.dt != reference.dt {
        return Err(Error::InvalidArgument(format!("dt {} vs {}", pred.dt, reference.dt)));
    }
    Ok(())
}

/// Nodal displacement RMSE per step, displacements taken from each
/// trajectory's own frame 0.
pub fn rmse_series(pred: &Trajectory, reference: &Trajectory) -> Result<RmseSeries> {
    check_pair(pred, reference)?;
    let n = pred.node_count() as f64;
    let p0 = pred.states[0].positions.data();
    let r0 = reference.states[0].positions.data();
    let per_step: Vec<f64> = pred
        .states
        .iter()
        .zip(&reference.states)
        .map(|(p, r)| {
            let sq: f64 = p
                .positions
                .data()
                .iter()
                .zip(p0)
                .zip(r.positions.data().iter().zip(r0))
                .map(|((pv, p0), (rv, r0))| {
                    let e = (pv - p0) - (rv - r0);
                    e * e
                })
                .sum();
            (sq / n).sqrt()
        })
        .collect();
    let t = pred.horizon();
    let mean = if t == 0 {
        0.0
    } else {
        per_step[1..].iter().sum::<f64>() / t as f64
    };
    let final_step = per_step[t];
    let last = &reference.states[t].positions;
    let gt: f64 = last.data().iter().zip(r0).map(|(a, b)| (a - b) * (a - b)).sum();
    let gt = (gt / n).sqrt();
    let relative = if gt > 0.0 {
        final_step / gt
    } else if final_step == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(RmseSeries {
        per_step,
        mean,
        final_step,
        relative,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    /// `d_pred - d_ref`; positive means the surrogate leaves more residual
    /// space than the reference.
    pub error: Vec<f64>,
    pub final_error: f64,
}

fn pair_distance(t: &Trajectory) -> Vec<f64> {
    let (a, b) = t.survival_pair;
    t.states
        .iter()
        .map(|s| {
            s.positions
                .row(a)
                .iter()
                .zip(s.positions.row(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub fn survival_space(pred: &Trajectory, reference: &Trajectory) -> Result<SurvivalSeries> {
    check_pair(pred, reference)?;
    if pred.survival_pair != reference.survival_pair {
        return Err(Error::InvalidArgument(format!(
            "survival pair {:?} vs {:?}",
            pred.survival_pair, reference.survival_pair
        )));
    }
    let (a, b) = pred.survival_pair;
    if a >= pred.node_count() || b >= pred.node_count() {
        return Err(Error::InvalidArgument(format!("survival pair ({a},{b}) out of range")));
    }
    let predicted = pair_distance(pred);
    let reference = pair_distance(reference);
    let error: Vec<f64> = predicted.iter().zip(&reference).map(|(p, r)| p - r).collect();
    Ok(SurvivalSeries {
        final_error: *error.last().expect("at least one frame"),
        predicted,
        reference,
        error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: u64,
    pub rmse: RmseSeries,
    pub survival: SurvivalSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleEval>,
    pub rmse_mu: f64,
    pub rmse_final_mean: f64,
    pub rmse_final_std: f64,
    pub rel_rmse: f64,
    /// Mean `e_surv_t` over samples, per step.
    pub survival_mean_series: Vec<f64>,
    pub survival_final_mean: f64,
    pub survival_final_std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.max(0.0).sqrt())
}

impl EvalReport {
    /// Aggregate over `(id, predicted, reference)` triples.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, &'a Trajectory, &'a Trajectory)>,
    {
        let samples = pairs
            .into_iter()
            .map(|(id, p, r)| {
                Ok(SampleEval {
                    id,
                    rmse: rmse_series(p, r)?,
                    survival: survival_space(p, r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let horizon = samples[0].rmse.per_step.len();
        if samples.iter().any(|s| s.rmse.per_step.len() != horizon) {
            return Err(shape_err("eval_report", "samples have different horizons"));
        }
        let mus: Vec<f64> = samples.iter().map(|s| s.rmse.mean).collect();
        let finals: Vec<f64> = samples.iter().map(|s| s.rmse.final_step).collect();
        let rels: Vec<f64> = samples.iter().map(|s| s.rmse.relative).collect();
        let surv: Vec<f64> = samples.iter().map(|s| s.survival.final_error).collect();
        let (rmse_final_mean, rmse_final_std) = mean_std(&finals);
        let (survival_final_mean, survival_final_std) = mean_std(&surv);
        let survival_mean_series = (0..horizon)
            .map(|t| samples.iter().map(|s| s.survival.error[t]).sum::<f64>() / samples.len() as f64)
            .collect();
        Ok(Self {
            rmse_mu: mean_std(&mus).0,
            rmse_final_mean,
            rmse_final_std,
            rel_rmse: mean_std(&rels).0,
            survival_mean_series,
            survival_final_mean,
            survival_final_std,
            samples,
        })
    }

    /// One row per sample and step.
    pub fn write_steps_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sample,step,rmse,d_pred,d_ref,e_surv")?;
        for s in &self.samples {
            for t in 0..s.rmse.per_step.len() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.id, t, s.rmse.per_step[t], s.survival.predicted[t], s.survival.reference[t], s.survival.error[t]
                )?;
            }
        }
        Ok(())
    }

    /// One row per sample with the aggregate columns.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sample,rmse_mu,rmse_final,rel_rmse,e_surv_final")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.id, s.rmse.mean, s.rmse.final_step, s.rmse.relative, s.survival.final_error
            )?;
        }
        Ok(())
    }
}
