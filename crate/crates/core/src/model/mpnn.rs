use crate::engine::{Activation, ParamStore, Tape, Var};
use crate::error::{shape_err, Result};
use crate::mesh::PreparedGraph;

use super::layers::Mlp;

/// One edge update followed by one node update, both residual and normalised.
#[derive(Clone, Debug)]
pub struct MpnnBlock {
    pub edge: Mlp,
    pub node: Mlp,
}

impl MpnnBlock {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            edge: Mlp::new(
                store,
                &format!("{name}.edge"),
                &[3 * d, d, d],
                Activation::Relu,
                true,
                seed,
            )?,
            node: Mlp::new(
                store,
                &format!("{name}.node"),
                &[2 * d, d, d],
                Activation::Relu,
                true,
                seed,
            )?,
        })
    }

    /// Returns updated node and edge latents.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &PreparedGraph,
        h: Var,
        e: Option<Var>,
    ) -> Result<(Var, Option<Var>)> {
        let n = ctx.node_count();
        if tape.shape(h).0 != n {
            return Err(shape_err(
                "mpnn_block",
                format!("{} latent rows for {n} nodes", tape.shape(h).0),
            ));
        }
        let d = tape.shape(h).1;
        let (agg, e_new) = match e {
            Some(e) if ctx.has_edges() => {
                let hi = tape.gather_rows(h, ctx.receivers.clone())?;
                let hj = tape.gather_rows(h, ctx.senders.clone())?;
                let inp = tape.concat(&[hi, hj, e])?;
                let upd = self.edge.forward(tape, store, inp)?;
                let m = tape.add(e, upd)?;
                (tape.scatter_add_rows(m, ctx.receivers.clone(), n)?, Some(m))
            }
            _ => (tape.constant(crate::engine::Tensor::zeros(n, d)), e),
        };
        let inp = tape.concat(&[h, agg])?;
        let upd = self.node.forward(tape, store, inp)?;
        Ok((tape.add(h, upd)?, e_new))
    }
}
