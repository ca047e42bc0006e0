//! TOML run configuration. Every section is optional; command-line flags
//! override file values.
//!
//! ```toml
//! seed = 7
//!
//! [oracle]
//! horizon = 15
//!
//! [design]
//! impact_speed = [0.4, 0.8]
//!
//! [split]
//! ks_threshold = 0.5
//!
//! [model]
//! family = "MeshTransolver+Contact"
//! d_hidden = 16
//!
//! [train]
//! epochs = 30
//! lr = 3e-3
//!
//! [contact]
//! radius = 15.0
//! k = 8
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use meshcrash::{ContactParams, DesignSpace, Family, ModelConfig, OracleConfig, SplitConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub oracle: OracleConfig,
    /// Bounds overrides by design-variable name.
    pub design: BTreeMap<String, [f64; 2]>,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub contact: ContactSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<Family>,
    /// Start from the full-scale preset instead of the desk preset.
    pub full_scale: bool,
    pub d_hidden: Option<usize>,
    pub tokens: Option<usize>,
    pub heads: Option<usize>,
    pub routes: Option<usize>,
    pub l_pre: Option<usize>,
    pub l_attn: Option<usize>,
    pub l_post: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_floor: Option<f64>,
    pub weight_decay: Option<f64>,
    pub patience: Option<usize>,
    pub grad_clip: Option<f64>,
    pub truncation: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub radius: Option<f64>,
    pub k: Option<usize>,
    pub alpha_init: Option<f64>,
}

impl ContactSection {
    pub fn merged(self, over: ContactSection) -> ContactSection {
        ContactSection {
            radius: over.radius.or(self.radius),
            k: over.k.or(self.k),
            alpha_init: over.alpha_init.or(self.alpha_init),
        }
    }

    pub fn apply(&self, p: &mut ContactParams) {
        if let Some(r) = self.radius {
            p.radius = Some(r);
        }
        if let Some(k) = self.k {
            p.k = k;
        }
        if let Some(a) = self.alpha_init {
            p.alpha_init = a;
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(crate::input(path)?).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn design_space(&self) -> Result<DesignSpace> {
        let mut space = DesignSpace::default();
        for (name, [lo, hi]) in &self.design {
            space
                .set_bounds(name, *lo, *hi)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(space)
    }

    pub fn model_config(&self, family: Family, dim: usize, contact: ContactSection) -> ModelConfig {
        let m = &self.model;
        let mut c = if m.full_scale {
            ModelConfig::full_scale(family, dim)
        } else {
            ModelConfig::desk(family, dim)
        };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.d_hidden, m.d_hidden);
        set(&mut c.tokens, m.tokens);
        set(&mut c.heads, m.heads);
        set(&mut c.routes, m.routes);
        set(&mut c.l_pre, m.l_pre);
        set(&mut c.l_attn, m.l_attn);
        set(&mut c.l_post, m.l_post);
        if let Some(p) = c.contact.as_mut() {
            self.contact.merged(contact).apply(p);
        }
        c
    }

    pub fn train_config(&self, model: ModelConfig) -> TrainConfig {
        let t = &self.train;
        let mut c = if self.model.full_scale {
            TrainConfig::new(model)
        } else {
            TrainConfig::desk(model)
        };
        if let Some(v) = t.epochs {
            c.epochs = v;
        }
        if let Some(v) = t.lr {
            c.lr = v;
            c.lr_floor = v * 0.01;
        }
        if let Some(v) = t.lr_floor {
            c.lr_floor = v;
        }
        if let Some(v) = t.weight_decay {
            c.optimizer.weight_decay = v;
        }
        if let Some(v) = t.patience {
            c.patience = v;
        }
        if t.grad_clip.is_some() {
            c.grad_clip = t.grad_clip;
        }
        if t.truncation.is_some() {
            c.truncation = t.truncation;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}
