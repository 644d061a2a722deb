//! Frame-level feed-forward classifier trained with Adam on cross-entropy.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{
    from_bytes as checkpoint_from_bytes, load_checkpoint, save_checkpoint,
    to_bytes as checkpoint_to_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{
    cross_entropy, cross_entropy_from_logits, log_sum_exp, softmax, Layer, MlpModel,
    DEFAULT_LAYER_DIMS,
};
pub use train::{
    adam_step, adam_update, backward, frame_accuracy, train, AdamState, Gradients, TrainConfig,
    TrainTrace,
};
