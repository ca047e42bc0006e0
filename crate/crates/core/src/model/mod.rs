//! Encoder, message passing, global token processors, contact block and
//! decoder.

mod attention;
mod config;
mod contact_block;
mod hybrid;
mod layers;
mod mpnn;

pub use attention::{DenseMixer, FlareMixer, GlobalBlock, GlobalOutput, Mixer};
pub(crate) use config::hex_digest;
pub use config::{Family, ModelConfig, TokenMixer};
pub use contact_block::{pair_feature_width, ContactBlock};
pub use hybrid::{hybrid_forward, Forward, HybridModel};
pub use layers::{Linear, Mlp, Norm};
pub use mpnn::MpnnBlock;
