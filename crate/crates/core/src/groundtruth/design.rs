use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named design variable with its admissible interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarBounds {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl VarBounds {
    pub fn new(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            low,
            high,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignVar {
    pub bounds: VarBounds,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub id: u64,
    pub vars: Vec<DesignVar>,
}

impl DesignSample {
    pub fn new(id: u64, space: &DesignSpace, values: &[f64]) -> Result<Self> {
        if values.len() != space.vars.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} design variables",
                values.len(),
                space.vars.len()
            )));
        }
        let vars = space
            .vars
            .iter()
            .zip(values)
            .map(|(b, &v)| {
                if b.contains(v) {
                    Ok(DesignVar {
                        bounds: b.clone(),
                        value: v,
                    })
                } else {
                    Err(Error::InvalidArgument(format!(
                        "{} = {v} outside [{}, {}]",
                        b.name, b.low, b.high
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { id, vars })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.vars.iter().find(|v| v.bounds.name == name).map(|v| v.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.value).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if !v.bounds.contains(v.value) {
                return Err(Error::InvalidArgument(format!(
                    "sample {}: {} = {} outside [{}, {}]",
                    self.id, v.bounds.name, v.value, v.bounds.low, v.bounds.high
                )));
            }
        }
        Ok(())
    }
}

pub const POLE_POSITION: &str = "pole_position";
pub const THICKNESS_OUTER: &str = "thickness_outer";
pub const THICKNESS_PATCH: &str = "thickness_patch";
pub const MORPH_FRONT_DEPTH: &str = "morph_front_depth";
pub const MORPH_WIDTH: &str = "morph_width";
pub const MORPH_SECTION_DEPTH: &str = "morph_section_depth";
pub const MORPH_CURVATURE: &str = "morph_curvature";
pub const IMPACT_SPEED: &str = "impact_speed";

/// Ordered design variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub vars: Vec<VarBounds>,
}

impl Default for DesignSpace {
    /// Eight variables: pole offset (mm), two thickness regions (mm), four
    /// geometry morphs (mm) and impact speed (mm/ms).
    fn default() -> Self {
        Self {
            vars: vec![
                VarBounds::new(POLE_POSITION, -60.0, 60.0),
                VarBounds::new(THICKNESS_OUTER, 1.2, 1.8),
                VarBounds::new(THICKNESS_PATCH, 0.8, 1.6),
                VarBounds::new(MORPH_FRONT_DEPTH, -2.0, 12.0),
                VarBounds::new(MORPH_WIDTH, -7.0, 7.0),
                VarBounds::new(MORPH_SECTION_DEPTH, -10.0, 10.0),
                VarBounds::new(MORPH_CURVATURE, -10.0, 5.0),
                VarBounds::new(IMPACT_SPEED, 0.4, 0.8),
            ],
        }
    }
}

impl DesignSpace {
    pub fn validate(&self) -> Result<()> {
        if self.vars.is_empty() {
            return Err(Error::Empty("design space"));
        }
        for v in &self.vars {
            if !(v.low.is_finite() && v.high.is_finite()) || v.low > v.high {
                return Err(Error::InvalidArgument(format!(
                    "invalid bounds for {}: [{}, {}]",
                    v.name, v.low, v.high
                )));
            }
        }
        Ok(())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Every variable at the midpoint of its interval.
    pub fn nominal(&self, id: u64) -> Result<DesignSample> {
        let mid: Vec<f64> = self.vars.iter().map(|v| 0.5 * (v.low + v.high)).collect();
        DesignSample::new(id, self, &mid)
    }

    /// Replace the bounds of a named variable.
    pub fn set_bounds(&mut self, name: &str, low: f64, high: f64) -> Result<()> {
        let v = self
            .vars
            .iter_mut()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown design variable `{name}`")))?;
        v.low = low;
        v.high = high;
        self.validate()
    }
}

/// Latin hypercube: in every dimension the `n` values fall one per
/// equal-width stratum, with uniform jitter inside the stratum. Ids are
/// `0..n`.
pub fn lhs_sample(n: usize, space: &DesignSpace, seed: u64) -> Result<Vec<DesignSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("LHS needs n >= 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(space.vars.len());
    for b in &space.vars {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let col: Vec<f64> = strata
            .into_iter()
            .map(|s| {
                let u = (s as f64 + rng.gen::<f64>()) / n as f64;
                let v = (b.low + u * (b.high - b.low)).clamp(b.low, b.high);
                if stratum_of(v, b, n) == s {
                    v
                } else {
                    b.low + (s as f64 + 0.5) / n as f64 * (b.high - b.low)
                }
            })
            .collect();
        columns.push(col);
    }
    (0..n)
        .map(|i| {
            let vals: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            DesignSample::new(i as u64, space, &vals)
        })
        .collect()
}

/// Stratum index of `v` among `n` equal-width strata of `b`.
pub fn stratum_of(v: f64, b: &VarBounds, n: usize) -> usize {
    let span = b.high - b.low;
    if span <= 0.0 {
        return 0;
    }
    (((v - b.low) / span * n as f64).floor() as usize).min(n - 1)
}
