//! Dueling Q-network, prioritized replay and the training loop.

mod checkpoint;
mod network;
mod normalize;
mod replay;
mod train;

pub use checkpoint::{load_model, Checkpoint, LayerRecord, QModel, CHECKPOINT_VERSION};
pub use network::{td_targets, Adam, DuelingNetwork, NetworkDims, TENSOR_NAMES};
pub use normalize::Normalizer;
pub use replay::{PrioritizedBuffer, SampledBatch, SumTree, Transition};
pub use train::{
    collect_random_states, train, write_train_log, ClockMode, Exploration, Optimizer, TrainConfig,
    TrainLogRow, TrainResult,
};
