//! Reverse-mode autodiff over dense `f64` tensors, sized for CPU training of
//! small audio models.
//!
//! Kernels (GEMM-backed convolutions, batched matmul, row-wise reductions)
//! split their work through [`exec`], which uses rayon when the `parallel`
//! feature is on and falls back to plain loops otherwise.

pub mod exec;
mod ops;
pub mod optim;
pub mod params;
mod tensor;
pub mod testing;
mod var;

pub use ops::Conv1dSpec;
pub use optim::{AdamState, AdamW};
pub use params::{Binder, Param, ParamId, ParamStore};
pub use tensor::{gemm, Tensor};
pub use var::{Gradients, Var};
