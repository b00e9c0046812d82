//! Convolution layers, activations and gradient recording.

pub mod conv;
pub mod graph;
pub mod ops;

pub use conv::{
    conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvSpec, LayerParams,
};
pub use graph::{Eager, Gradients, Graph, LayerId, Tape, Var};
pub use ops::{channel_concat, channel_range, channel_slice, leaky_relu, leaky_relu_backward};
