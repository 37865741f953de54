//! A small differentiable-network engine and the models built on it.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod models;
pub mod optim;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use models::{BeamEncoder, Network, UmanConfig, UmanInput, UmanModel, VranConfig, VranModel, VranOutput};
pub use tensor::{Param, Tensor};
pub use train::{train, TrainConfig, TrainReport};
