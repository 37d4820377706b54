//! Differentiable building blocks: the reverse-mode tape, 3-D convolution,
//! parameter storage, optimizers, and finite-difference checking.

pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;

pub use conv::{avg_pool_spatial, ConvSpec};
pub use graph::{Arr, Graph, Var};
pub use optim::{cosine_lr, Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{Init, ParamStore};
