//! CycleGAN-style denoising networks with simulation-to-experiment domain adaptation, decoder
//! weight sharing and adversarial feature alignment, trained on the CPU with hand-written
//! backward passes.

pub mod checkpoint;
pub mod error;
pub mod layers;
pub mod model;
pub mod networks;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod trainer;

pub use error::{NnError, Result};
pub use tensor::Tensor;
pub use model::{ModelConfig, PdaNet, Which};
pub use objectives::{GenMode, LossReport, LossWeights};
pub use trainer::{train, StepBatch, TrainConfig, TrainData, TrainState};

/// Single-precision model, the training default.
pub type Model = PdaNet<f32>;
/// Double-precision model, used for gradient checks.
pub type Model64 = PdaNet<f64>;
/// Single-precision trainer.
pub type Trainer = TrainState<f32>;
