//! Kernel surrogates of functionals on feature space.

pub mod kernel;
pub mod mean;
pub mod surrogate;

pub use kernel::{CosineSpectral, Hess, Kernel, QuadraticKernel};
pub use mean::PriorMean;
pub use surrogate::{assemble_gram, fit, gram, Cross, GpModel, GpSurrogate};
