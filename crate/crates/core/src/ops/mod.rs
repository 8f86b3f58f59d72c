//! Layer forward/backward rules.
//!
//! Every op is a pure function from tensors to tensors; the tape
//! (crate::tape) strings them into a differentiable graph. Backward
//! rules live next to their forward rules so the pairing is auditable.

pub mod activation;
pub mod conv;
pub mod loss;
pub mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{
    grouped_conv_backward_input, grouped_conv_backward_weights, grouped_conv_forward, ConvDesc,
};
pub use loss::{softmax_cross_entropy_backward, softmax_cross_entropy_forward};
pub use pool::{
    global_avg_pool_backward, global_avg_pool_forward, max_pool2_backward, max_pool2_forward,
};
