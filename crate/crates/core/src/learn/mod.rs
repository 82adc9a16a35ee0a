//! Losses, parameters, checkpoints and the streaming trainer.

mod checkpoint;
mod loss;
mod model;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{actor_loss, total_loss, Anticipators};
pub use model::{ModelParams, IDENTITY_INIT_NOISE};
pub(crate) use trainer::{actor_inputs, map_shape, uniform_attention};
pub use trainer::{train_streams, TrainStats, Trainer};
