//! Checkpoints and run configuration files.

mod checkpoint;
mod config;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC,
};
pub use config::{parse_config, parse_phantom_domain, DataConfig, DataKind, RunConfig, CONFIG_KEYS};
