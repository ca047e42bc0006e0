use super::params::ParamStore;
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Of `checked`, entries that mismatched at `h` but agreed at a smaller
    /// step, i.e. the loss has a kink (ReLU switch, contact set change)
    /// within `h` of the current point.
    pub refined: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// Tenfold step reductions tried on a mismatch; agreement at a smaller
    /// step marks a kink within `h` rather than a wrong gradient.
    pub refinements: usize,
    /// Check at most this many entries per parameter tensor, evenly spaced.
    pub max_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-7,
            refinements: 2,
            max_per_param: None,
        }
    }
}

/// Compare the gradients stored in `with_grads` against central differences
/// of `loss` around the values in `with_grads`. Parameters without a stored
/// gradient are expected to have none.
pub fn check_gradients<F>(with_grads: &ParamStore, cfg: &GradCheckConfig, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut probe = with_grads.clone();
    let mut report = GradCheckReport::default();
    let h = cfg.step;
    for id in with_grads.ids().collect::<Vec<_>>() {
        let p = with_grads.get(id);
        let n = p.value.len();
        let zeros = vec![0.0; n];
        let grad = p.grad.as_deref().unwrap_or(&zeros);
        let entries: Vec<usize> = match cfg.max_per_param {
            Some(m) if m < n => (0..m).map(|k| k * (n - 1) / (m - 1).max(1)).collect(),
            _ => (0..n).collect(),
        };
        for e in entries {
            let orig = p.value.data()[e];
            let mut central = |step: f64| -> Result<f64> {
                probe.value_mut(id).data_mut()[e] = orig + step;
                let fp = loss(&probe)?;
                probe.value_mut(id).data_mut()[e] = orig - step;
                let fm = loss(&probe)?;
                probe.value_mut(id).data_mut()[e] = orig;
                Ok((fp - fm) / (2.0 * step))
            };
            let analytic = grad[e];
            let rel_err = |numeric: f64| {
                let err = (analytic - numeric).abs();
                if err <= cfg.abs_floor {
                    0.0
                } else {
                    err / analytic.abs().max(numeric.abs())
                }
            };
            let numeric = central(h)?;
            let rel = rel_err(numeric);
            if rel > cfg.rel_tol {
                let mut step = h;
                let mut kink = None;
                for _ in 0..cfg.refinements {
                    step *= 0.1;
                    let r = rel_err(central(step)?);
                    if r <= cfg.rel_tol {
                        kink = Some(r);
                        break;
                    }
                }
                if let Some(r) = kink {
                    report.checked += 1;
                    report.refined += 1;
                    report.max_rel_error = report.max_rel_error.max(r);
                    continue;
                }
            }
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel > cfg.rel_tol {
                report.failures.push(GradMismatch {
                    param: p.name.clone(),
                    index: e,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
