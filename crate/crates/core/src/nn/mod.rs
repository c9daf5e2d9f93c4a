//! Minimal differentiable kernel: tensors, a fixed set of layers, multi-input
//! networks with hand-written backward passes, and SGD.

mod layer;
mod network;
mod optim;
mod params;
mod tensor;

pub use layer::LayerSpec;
pub use network::{sequential, ForwardCache, Network, NetworkSpec};
pub use optim::{Sgd, DEFAULT_LR, DEFAULT_MOMENTUM};
pub use params::{ParamArray, ParamSet, Partition, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tensor::{cast, Scalar, Tensor};
