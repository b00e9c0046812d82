//! The network: configuration, parameters, forward pass and weight files.

pub mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{BlockLayer, IdnConfig};
pub use forward::{
    compression, enhancement, fblock, idn_forward, infer, infer_with_capture, skip_resampler, Capture, Mode, Unit,
};
pub use params::{count_params, init_params, ModelParams};
