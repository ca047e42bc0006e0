use crate::engine::{Activation, Init, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        seed: u64,
    ) -> Result<Self> {
        let w = store.add(&format!("{name}.w"), fan_in, fan_out, Init::FanIn, seed)?;
        let b = if bias {
            Some(store.add(&format!("{name}.b"), 1, fan_out, Init::Zeros, seed)?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Layer normalisation with learnable gain and bias.
#[derive(Clone, Debug)]
pub struct Norm {
    pub g: ParamId,
    pub b: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            g: store.add(&format!("{name}.g"), 1, width, Init::Constant(1.0), seed)?,
            b: store.add(&format!("{name}.b"), 1, width, Init::Zeros, seed)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x);
        let g = tape.param(store, self.g);
        let b = tape.param(store, self.b);
        let y = tape.mul_row(n, g)?;
        tape.add_row(y, b)
    }
}

/// Dense stack with an activation between layers and an optional trailing norm.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub act: Activation,
    pub norm: Option<Norm>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        act: Activation,
        norm: bool,
        seed: u64,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.l{i}"), w[0], w[1], true, seed))
            .collect::<Result<Vec<_>>>()?;
        let norm = if norm {
            Some(Norm::new(
                store,
                &format!("{name}.ln"),
                *widths.last().unwrap_or(&0),
                seed,
            )?)
        } else {
            None
        };
        Ok(Self { layers, act, norm })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(tape, store, x)?;
            if i < last {
                x = tape.activation(x, self.act);
            }
        }
        match &self.norm {
            Some(n) => n.forward(tape, store, x),
            None => Ok(x),
        }
    }
}
