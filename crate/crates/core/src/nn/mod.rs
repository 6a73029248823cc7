//! Dense networks with cached backpropagation, gradient reversal, binary
//! cross-entropy and first-order optimizers.

pub mod arch;
mod grl;
mod layer;
mod loss;
mod network;
mod optim;

pub use grl::GradientReversal;
pub use layer::{sigmoid, Activation, Layer, LayerSpec};
pub use loss::{bce, bce_with_logits, PROB_EPS};
pub use network::{GradTape, Mode, Network};
pub use optim::{sgd_step, OptimizerConfig, OptimizerKind, OptimizerState};
