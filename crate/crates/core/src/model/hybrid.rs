use crate::contact::ContactSet;
use crate::engine::{Activation, ParamStore, Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::mesh::{edge_feature_width, edge_features, node_features, MeshGraph, NodeState, NormStats, PreparedGraph};

use super::attention::GlobalBlock;
use super::config::ModelConfig;
use super::contact_block::ContactBlock;
use super::layers::Mlp;
use super::mpnn::MpnnBlock;

/// Encoder, processors and decoder for one model family.
#[derive(Clone, Debug)]
pub struct HybridModel {
    pub config: ModelConfig,
    pub encoder: Mlp,
    pub edge_encoder: Option<Mlp>,
    pub pre: Vec<MpnnBlock>,
    pub contact: Option<ContactBlock>,
    pub geo: Option<Mlp>,
    pub global: Vec<GlobalBlock>,
    pub post: Vec<MpnnBlock>,
    pub decoder: Mlp,
}

/// Tape handles produced by one forward pass, in internal node order.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Normalised accelerations, `N×dim`.
    pub accel: Var,
    /// Slice weights of each global block.
    pub slice_weights: Vec<Var>,
    /// Latent field after every block.
    pub latents: Vec<Var>,
}

impl HybridModel {
    /// Builds the model and its freshly initialised parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut s = ParamStore::new();
        let d = config.d_hidden;
        let dim = config.dim;
        let encoder = Mlp::new(
            &mut s,
            "encoder",
            &[config.d_node(), d, d],
            Activation::Relu,
            false,
            seed,
        )?;
        let mesh = config.family.uses_mesh();
        let edge_encoder = if mesh {
            Some(Mlp::new(
                &mut s,
                "edge_encoder",
                &[edge_feature_width(dim), d, d],
                Activation::Relu,
                false,
                seed,
            )?)
        } else {
            None
        };
        let pre = (0..config.l_pre)
            .map(|i| MpnnBlock::new(&mut s, &format!("mpnn.{i}"), d, seed))
            .collect::<Result<Vec<_>>>()?;
        let contact = match &config.contact {
            Some(c) => Some(ContactBlock::new(&mut s, "contact", d, dim, c.alpha_init, seed)?),
            None => None,
        };
        let geo = if config.geometry_aware {
            Some(Mlp::new(
                &mut s,
                "geo_embed",
                &[dim, d, d],
                Activation::Gelu,
                false,
                seed,
            )?)
        } else {
            None
        };
        let global = (0..config.l_attn)
            .map(|i| GlobalBlock::new(&mut s, &format!("global.{i}"), &config, seed))
            .collect::<Result<Vec<_>>>()?;
        let post = (0..config.l_post)
            .map(|i| MpnnBlock::new(&mut s, &format!("mpnn.{}", config.l_pre + i), d, seed))
            .collect::<Result<Vec<_>>>()?;
        let decoder = Mlp::new(&mut s, "decoder", &[d, d, dim], Activation::Relu, false, seed)?;
        Ok((
            Self {
                config,
                encoder,
                edge_encoder,
                pre,
                contact,
                geo,
                global,
                post,
                decoder,
            },
            s,
        ))
    }

    pub fn contact_radius(&self, graph: &MeshGraph) -> Option<f64> {
        self.config.contact.as_ref().map(|c| c.resolve_radius(graph))
    }

    /// Forward pass in the internal order of `ctx`. `contacts` must use the
    /// same labels and be present exactly when the family has a contact block.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &PreparedGraph,
        stats: &NormStats,
        x: Var,
        v: Var,
        contacts: Option<&ContactSet>,
    ) -> Result<Forward> {
        let cfg = &self.config;
        if ctx.dim() != cfg.dim {
            return Err(shape_err(
                "hybrid_forward",
                format!("graph dim {} vs config dim {}", ctx.dim(), cfg.dim),
            ));
        }
        match (&self.contact, contacts) {
            (None, Some(_)) => return Err(Error::UnexpectedContact(cfg.family.to_string())),
            (Some(_), None) => return Err(Error::InvalidArgument(format!("{} requires a contact set", cfg.family))),
            _ => {}
        }
        let mut latents = Vec::new();
        let feats = node_features(tape, ctx, stats, cfg.feature_set, x, v)?;
        let mut h = self.encoder.forward(tape, store, feats)?;
        latents.push(h);
        let mut e = match &self.edge_encoder {
            Some(enc) if ctx.has_edges() => {
                let ef = edge_features(tape, ctx, x)?;
                let ef = tape.scale(ef, 1.0 / stats.length_scale);
                Some(enc.forward(tape, store, ef)?)
            }
            _ => None,
        };
        for b in &self.pre {
            (h, e) = b.forward(tape, store, ctx, h, e)?;
            latents.push(h);
        }
        if let (Some(block), Some(c)) = (&self.contact, contacts) {
            let r = self.contact_radius(&ctx.graph).unwrap_or(1.0);
            h = block.forward(tape, store, h, x, &ctx.thickness, c, r)?;
            latents.push(h);
        }
        let gamma = match &self.geo {
            Some(g) => {
                let p = tape.constant(ctx.normalised_positions.clone());
                Some(g.forward(tape, store, p)?)
            }
            None => None,
        };
        let mut slice_weights = Vec::with_capacity(self.global.len());
        for b in &self.global {
            let out = b.forward(tape, store, h, gamma)?;
            h = out.h;
            slice_weights.push(out.slice_weights);
            latents.push(h);
        }
        for b in &self.post {
            (h, e) = b.forward(tape, store, ctx, h, e)?;
            latents.push(h);
        }
        let accel = self.decoder.forward(tape, store, h)?;
        Ok(Forward {
            accel,
            slice_weights,
            latents,
        })
    }
}

/// Normalised accelerations for every node of `graph` at `state`, in the
/// graph's own labels. Computes in canonical order internally.
pub fn hybrid_forward(
    model: &HybridModel,
    store: &ParamStore,
    stats: &NormStats,
    graph: &MeshGraph,
    state: &NodeState,
    contacts: Option<&ContactSet>,
) -> Result<Tensor> {
    let ctx = PreparedGraph::canonical(graph)?;
    let mut tape = Tape::new();
    let x = tape.constant(ctx.to_internal(&state.positions));
    let v = tape.constant(ctx.to_internal(&state.velocities));
    let internal = contacts.map(|c| c.relabel(&ctx.rank));
    let f = model.forward(&mut tape, store, &ctx, stats, x, v, internal.as_ref())?;
    Ok(ctx.to_original(tape.value(f.accel)))
}
