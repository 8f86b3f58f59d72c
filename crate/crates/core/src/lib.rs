//! Logarithmic filter grouping for shallow CNNs.
//!
//! This crate plans filter-group arrays (uniform and logarithmic),
//! runs grouped and factorized convolutions with full backward rules
//! on a small reverse-mode tape, builds the 3-layer residual network
//! those schemes target, computes exact parameter budgets, and trains
//! and evaluates the result on CIFAR-10 or a synthetic stand-in
//! dataset, deterministically for a given seed.

pub mod budget;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod scheme;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scheme::{
    canonical_scheme_table, log_group_sizes, uniform_group_sizes, GroupFamily, GroupScheme,
    SchemeTable, CANONICAL_SCHEME_NAMES,
};
pub use tensor::{Element, Shape, Tensor};
