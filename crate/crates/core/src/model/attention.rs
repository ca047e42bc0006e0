use crate::engine::{Activation, Init, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

use super::config::{ModelConfig, TokenMixer};
use super::layers::{Linear, Mlp, Norm};

/// Multi-head self-attention over the token matrix.
#[derive(Clone, Debug)]
pub struct DenseMixer {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl DenseMixer {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            heads,
            q: Linear::new(store, &format!("{name}.q"), d, d, false, seed)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, false, seed)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, false, seed)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, false, seed)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, t: Var) -> Result<Var> {
        let d = tape.shape(t).1;
        let dh = d / self.heads;
        let q = self.q.forward(tape, store, t)?;
        let k = self.k.forward(tape, store, t)?;
        let v = self.v.forward(tape, store, t)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh);
            let s = tape.matmul(qh, kt)?;
            let s = tape.scale(s, scale);
            let a = tape.row_softmax(s)?;
            outs.push(tape.matmul(a, vh)?);
        }
        let cat = tape.concat(&outs)?;
        self.o.forward(tape, store, cat)
    }
}

/// Low-rank token interaction: tokens pool into `r` learned routes, then each
/// token reads back from the routes.
#[derive(Clone, Debug)]
pub struct FlareMixer {
    pub routes: ParamId,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl FlareMixer {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, r: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            routes: store.add(&format!("{name}.routes"), r, d, Init::FanIn, seed)?,
            q: Linear::new(store, &format!("{name}.q"), d, d, false, seed)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, false, seed)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, false, seed)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, false, seed)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, t: Var) -> Result<Var> {
        let d = tape.shape(t).1;
        let scale = 1.0 / (d as f64).sqrt();
        let routes = tape.param(store, self.routes);
        let q = self.q.forward(tape, store, t)?;
        let k = self.k.forward(tape, store, t)?;
        let v = self.v.forward(tape, store, t)?;
        let kt = tape.transpose(k);
        let s = tape.matmul(routes, kt)?;
        let s = tape.scale(s, scale);
        let pool = tape.row_softmax(s)?;
        let z = tape.matmul(pool, v)?;
        let rt = tape.transpose(routes);
        let s = tape.matmul(q, rt)?;
        let s = tape.scale(s, scale);
        let read = tape.row_softmax(s)?;
        let y = tape.matmul(read, z)?;
        self.o.forward(tape, store, y)
    }
}

#[derive(Clone, Debug)]
pub enum Mixer {
    Dense(DenseMixer),
    Flare(FlareMixer),
}

impl Mixer {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, t: Var) -> Result<Var> {
        match self {
            Mixer::Dense(m) => m.forward(tape, store, t),
            Mixer::Flare(m) => m.forward(tape, store, t),
        }
    }
}

/// Slice, mix tokens, deslice, then a node-wise feed-forward.
#[derive(Clone, Debug)]
pub struct GlobalBlock {
    pub ln_in: Norm,
    pub slice_keys: ParamId,
    pub geo_keys: Option<ParamId>,
    pub temperature: Option<ParamId>,
    pub tok_ln: Norm,
    pub mixer: Mixer,
    pub tok_ffn_ln: Norm,
    pub tok_ffn: Mlp,
    pub out: Linear,
    pub ffn_ln: Norm,
    pub ffn: Mlp,
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalOutput {
    pub h: Var,
    pub slice_weights: Var,
}

impl GlobalBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let d = cfg.d_hidden;
        let m = cfg.tokens;
        let mixer = match cfg.mixer {
            TokenMixer::Dense => Mixer::Dense(DenseMixer::new(store, &format!("{name}.attn"), d, cfg.heads, seed)?),
            TokenMixer::Flare => Mixer::Flare(FlareMixer::new(store, &format!("{name}.flare"), d, cfg.routes, seed)?),
        };
        Ok(Self {
            ln_in: Norm::new(store, &format!("{name}.ln_in"), d, seed)?,
            slice_keys: store.add(&format!("{name}.slice_keys"), d, m, Init::FanIn, seed)?,
            geo_keys: if cfg.geometry_aware {
                Some(store.add(&format!("{name}.geo_keys"), d, m, Init::FanIn, seed)?)
            } else {
                None
            },
            temperature: if cfg.sharpen {
                Some(store.add(&format!("{name}.temperature"), 1, m, Init::Constant(1.0), seed)?)
            } else {
                None
            },
            tok_ln: Norm::new(store, &format!("{name}.tok_ln"), d, seed)?,
            mixer,
            tok_ffn_ln: Norm::new(store, &format!("{name}.tok_ffn_ln"), d, seed)?,
            tok_ffn: Mlp::new(
                store,
                &format!("{name}.tok_ffn"),
                &[d, d, d],
                Activation::Gelu,
                false,
                seed,
            )?,
            out: Linear::new(store, &format!("{name}.out"), d, d, true, seed)?,
            ffn_ln: Norm::new(store, &format!("{name}.ffn_ln"), d, seed)?,
            ffn: Mlp::new(store, &format!("{name}.ffn"), &[d, d, d], Activation::Gelu, false, seed)?,
        })
    }

    /// Softmax slice weights, `N×M`.
    pub fn slice_weights(&self, tape: &mut Tape, store: &ParamStore, hn: Var, geo: Option<Var>) -> Result<Var> {
        let keys = tape.param(store, self.slice_keys);
        let mut logits = tape.matmul(hn, keys)?;
        if let (Some(gk), Some(g)) = (self.geo_keys, geo) {
            let gk = tape.param(store, gk);
            let gl = tape.matmul(g, gk)?;
            logits = tape.add(logits, gl)?;
        }
        if let Some(t) = self.temperature {
            let t = tape.param(store, t);
            logits = tape.mul_row(logits, t)?;
        }
        tape.row_softmax(logits)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, geo: Option<Var>) -> Result<GlobalOutput> {
        let hn = self.ln_in.forward(tape, store, h)?;
        let w = self.slice_weights(tape, store, hn, geo)?;
        let wt = tape.transpose(w);
        let tokens = tape.matmul(wt, hn)?;
        let tn = self.tok_ln.forward(tape, store, tokens)?;
        let mixed = self.mixer.forward(tape, store, tn)?;
        let u = tape.add(tn, mixed)?;
        let un = self.tok_ffn_ln.forward(tape, store, u)?;
        let f = self.tok_ffn.forward(tape, store, un)?;
        let tt = tape.add(u, f)?;
        let back = tape.matmul(w, tt)?;
        let back = self.out.forward(tape, store, back)?;
        let h1 = tape.add(h, back)?;
        let hn = self.ffn_ln.forward(tape, store, h1)?;
        let f = self.ffn.forward(tape, store, hn)?;
        Ok(GlobalOutput {
            h: tape.add(h1, f)?,
            slice_weights: w,
        })
    }
}
