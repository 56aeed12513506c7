//! Network plumbing shared by the latent dynamics model and the ensembles:
//! named parameter stores, layers with paired plain / taped forward passes,
//! the Adam optimizer, and a bit-exact checkpoint container.

mod checkpoint;
pub mod layers;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use layers::{Activation, GruCell, LayerNorm, Linear, Mlp};
pub use params::{Adam, Leaves, ParamStore};
