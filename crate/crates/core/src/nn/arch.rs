//! Layer chains for the five networks of the model.

use super::layer::{Activation, LayerSpec};

/// Input features -> hidden -> hidden -> out, LeakyReLU after the first two layers.
pub fn extractor(in_dim: usize, hidden: usize, slope: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(in_dim, hidden, Activation::LeakyRelu(slope)),
        LayerSpec::new(hidden, hidden, Activation::LeakyRelu(slope)),
        LayerSpec::new(hidden, hidden, Activation::Identity),
    ]
}

/// hidden -> hidden -> hidden -> hidden, ReLU after the first two layers.
pub fn decoupler(hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(hidden, hidden, Activation::Relu),
        LayerSpec::new(hidden, hidden, Activation::Relu),
        LayerSpec::new(hidden, hidden, Activation::Identity),
    ]
}

/// hidden -> dropout -> hidden -> sigmoid -> `n_out` logits.
///
/// The last layer scores each domain or class; sigmoid is applied by the loss.
pub fn discriminator(hidden: usize, n_out: usize, dropout_p: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(hidden, hidden, Activation::Identity).with_dropout(dropout_p),
        LayerSpec::new(hidden, hidden, Activation::Sigmoid),
        LayerSpec::new(hidden, n_out, Activation::Identity),
    ]
}
