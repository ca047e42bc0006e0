//! Binary dataset containers and checkpoints.

mod checkpoint;
mod codec;
mod container;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use container::{
    dataset_header, decode_dataset, encode_dataset, read_dataset, sidecar_path, write_dataset, DatasetHeader,
    DATASET_MAGIC, DATASET_VERSION,
};

/// SHA-256 hex digest of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::model::hex_digest(bytes)
}
