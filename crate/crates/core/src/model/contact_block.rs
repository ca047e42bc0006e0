use std::sync::Arc;

use crate::contact::ContactSet;
use crate::engine::{Activation, Init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{shape_err, Result};

use super::layers::Mlp;

/// Residual latent correction from proximity pairs, `H + α·ΔH`.
#[derive(Clone, Debug)]
pub struct ContactBlock {
    pub mlp: Mlp,
    pub alpha: ParamId,
}

/// Width of the per-pair geometric features.
pub fn pair_feature_width(dim: usize) -> usize {
    dim + 2
}

impl ContactBlock {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, dim: usize, alpha_init: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(
                store,
                &format!("{name}.mlp"),
                &[2 * d + pair_feature_width(dim), d, d],
                Activation::Relu,
                false,
                seed,
            )?,
            alpha: store.add(&format!("{name}.alpha"), 1, 1, Init::Constant(alpha_init), seed)?,
        })
    }

    /// Per-pair message into `ΔH`, before gating.
    pub fn delta(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        x: Var,
        thickness: &Tensor,
        contacts: &ContactSet,
        radius: f64,
    ) -> Result<Option<Var>> {
        let (n, _) = tape.shape(h);
        if tape.shape(x).0 != n || thickness.rows() != n {
            return Err(shape_err(
                "contact_residual",
                "latent, position and thickness rows differ",
            ));
        }
        if contacts.is_empty() {
            return Ok(None);
        }
        let mut recv = Vec::with_capacity(2 * contacts.len());
        let mut send = Vec::with_capacity(2 * contacts.len());
        for p in &contacts.pairs {
            if p.i >= n || p.j >= n {
                return Err(shape_err(
                    "contact_residual",
                    format!("pair ({}, {}) for {n} nodes", p.i, p.j),
                ));
            }
            recv.extend([p.i, p.j]);
            send.extend([p.j, p.i]);
        }
        let rows = recv.len();
        let half: Vec<f64> = recv
            .iter()
            .zip(&send)
            .map(|(&a, &b)| -0.5 * (thickness.get(a, 0) + thickness.get(b, 0)))
            .collect();
        let recv: Arc<[usize]> = recv.into();
        let send: Arc<[usize]> = send.into();
        let hr = tape.gather_rows(h, recv.clone())?;
        let hs = tape.gather_rows(h, send.clone())?;
        let xr = tape.gather_rows(x, recv.clone())?;
        let xs = tape.gather_rows(x, send)?;
        let off = tape.sub(xs, xr)?;
        let dist = tape.row_norm(off);
        let neg_half = tape.constant(Tensor::from_rows(rows, 1, half)?);
        let gap = tape.add(dist, neg_half)?;
        let gap = tape.relu(gap);
        let eps = tape.constant(Tensor::filled(rows, 1, 1e-9 * radius));
        let safe = tape.add(dist, eps)?;
        let inv = tape.recip(safe);
        let unit = tape.mul_col(off, inv)?;
        let dn = tape.scale(dist, 1.0 / radius);
        let gn = tape.scale(gap, 1.0 / radius);
        let feats = tape.concat(&[hr, hs, dn, gn, unit])?;
        let msg = self.mlp.forward(tape, store, feats)?;
        Ok(Some(tape.scatter_add_rows(msg, recv, n)?))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        x: Var,
        thickness: &Tensor,
        contacts: &ContactSet,
        radius: f64,
    ) -> Result<Var> {
        match self.delta(tape, store, h, x, thickness, contacts, radius)? {
            None => Ok(h),
            Some(dh) => {
                let alpha = tape.param(store, self.alpha);
                let gated = tape.scale_by(dh, alpha)?;
                tape.add(h, gated)
            }
        }
    }
}
