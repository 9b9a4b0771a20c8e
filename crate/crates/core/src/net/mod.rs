//! Feed-forward patch classifier with manual backpropagation.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod optim;
pub mod spec;
pub mod tensor;
pub mod train;

pub use checkpoint::ModelCheckpoint;
pub use layers::{Activation, BatchStats, Layer, Param};
pub use model::{cross_entropy, softmax, Gradients, Network};
pub use optim::{sgd_step, TrainConfig, Velocity};
pub use spec::{derive_pool_side, BlockSpec, NetworkSpec, DEFAULT_SCALES};
pub use tensor::Tensor;
pub use train::{train, LogLine};
