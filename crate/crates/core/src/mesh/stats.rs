use serde::{Deserialize, Serialize};

use super::state::Sample;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Normalisation statistics fitted on the training split.
///
/// Feature statistics cover the continuous per-node quantities in the order
/// given by [`NormStats::feature_names`]; one-hot role columns are never
/// normalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub dim: usize,
    pub accel_mean: Vec<f64>,
    pub accel_std: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Mean reference edge length; divides every length-valued edge feature.
    pub length_scale: f64,
    /// RMS displacement component; divides position errors inside the loss.
    pub position_scale: f64,
}

/// Offsets of the continuous feature columns.
#[derive(Clone, Copy, Debug)]
pub struct FeatureLayout {
    pub dim: usize,
}

impl FeatureLayout {
    pub fn velocity(self) -> usize {
        0
    }
    pub fn speed(self) -> usize {
        self.dim
    }
    pub fn displacement(self) -> usize {
        self.dim + 1
    }
    pub fn displacement_norm(self) -> usize {
        2 * self.dim + 1
    }
    pub fn thickness(self) -> usize {
        2 * self.dim + 2
    }
    pub fn width(self) -> usize {
        2 * self.dim + 3
    }
}

impl NormStats {
    /// Placeholder that fails every use until replaced by fitted statistics.
    pub fn unfitted(dim: usize) -> Self {
        Self {
            dim,
            accel_mean: Vec::new(),
            accel_std: Vec::new(),
            feature_mean: Vec::new(),
            feature_std: Vec::new(),
            length_scale: 1.0,
            position_scale: 1.0,
        }
    }

    pub fn is_fitted(&self) -> bool {
        let w = FeatureLayout { dim: self.dim }.width();
        self.accel_mean.len() == self.dim
            && self.accel_std.len() == self.dim
            && self.feature_mean.len() == w
            && self.feature_std.len() == w
    }

    pub fn ensure_fitted(&self) -> Result<()> {
        if self.is_fitted() {
            Ok(())
        } else {
            Err(Error::StatsNotFitted)
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout { dim: self.dim }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let d = self.dim;
        let mut names: Vec<String> = (0..d).map(|c| format!("v{c}")).collect();
        names.push("speed".into());
        names.extend((0..d).map(|c| format!("u{c}")));
        names.push("disp".into());
        names.push("thickness".into());
        names
    }
}

#[derive(Default)]
struct Moments {
    values: Vec<Vec<f64>>,
}

impl Moments {
    fn new(cols: usize) -> Self {
        Self {
            values: vec![Vec::new(); cols],
        }
    }

    fn push(&mut self, col: usize, v: f64) {
        self.values[col].push(v);
    }

    /// Two-pass mean and population std, floored.
    fn finish(&self) -> (Vec<f64>, Vec<f64>) {
        self.values
            .iter()
            .map(|xs| {
                if xs.is_empty() {
                    return (0.0, STD_FLOOR);
                }
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                (mean, var.sqrt().max(STD_FLOOR))
            })
            .unzip()
    }
}

/// Fit statistics over every FREE-node transition of the training samples.
pub fn fit_norm_stats(train: &[Sample]) -> Result<NormStats> {
    let first = train.first().ok_or(Error::Empty("training samples"))?;
    let dim = first.graph.dim();
    if train.iter().all(|s| s.trajectory.horizon() < 1) {
        return Err(Error::InvalidArgument(
            "training trajectories have no transitions".into(),
        ));
    }
    let layout = FeatureLayout { dim };
    let mut acc = Moments::new(dim);
    let mut feat = Moments::new(layout.width());
    let mut disp_sq = 0.0;
    let mut disp_n = 0usize;
    let mut edge_sum = 0.0;
    let mut edge_n = 0usize;
    for s in train {
        if s.graph.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "sample {} has dim {}",
                s.id,
                s.graph.dim()
            )));
        }
        let traj = &s.trajectory;
        let x0 = &traj.states[0].positions;
        let reference = s.graph.reference_positions();
        let accels = traj.accelerations();
        let free: Vec<usize> = (0..s.graph.node_count())
            .filter(|&n| s.graph.roles()[n].is_free())
            .collect();
        for (t, a) in accels.iter().enumerate() {
            let st = &traj.states[t];
            for &n in &free {
                for c in 0..dim {
                    acc.push(c, a.get(n, c));
                }
                let v = st.velocities.row(n);
                for (c, &vc) in v.iter().enumerate() {
                    feat.push(layout.velocity() + c, vc);
                }
                feat.push(layout.speed(), v.iter().map(|a| a * a).sum::<f64>().sqrt());
                let mut u2 = 0.0;
                for c in 0..dim {
                    let u = st.positions.get(n, c) - reference.get(n, c);
                    feat.push(layout.displacement() + c, u);
                    u2 += u * u;
                }
                feat.push(layout.displacement_norm(), u2.sqrt());
                feat.push(layout.thickness(), s.graph.thickness(n));
            }
        }
        for st in &traj.states[1..] {
            for &n in &free {
                for c in 0..dim {
                    let d = st.positions.get(n, c) - x0.get(n, c);
                    disp_sq += d * d;
                    disp_n += 1;
                }
            }
        }
        for l in s.graph.edge_lengths() {
            edge_sum += l;
            edge_n += 1;
        }
    }
    let (accel_mean, accel_std) = acc.finish();
    let (feature_mean, feature_std) = feat.finish();
    let position_scale = if disp_n > 0 {
        (disp_sq / disp_n as f64).sqrt().max(STD_FLOOR)
    } else {
        1.0
    };
    let length_scale = if edge_n > 0 && edge_sum > 0.0 {
        edge_sum / edge_n as f64
    } else {
        1.0
    };
    Ok(NormStats {
        dim,
        accel_mean,
        accel_std,
        feature_mean,
        feature_std,
        length_scale,
        position_scale,
    })
}
