//! Differentiable building blocks: tensors, LSTM and dense layers, the
//! FiLM-modulated task network, and finite-difference gradient checks.

mod dense;
pub mod gradcheck;
mod lstm;
mod task;
mod tensor;

pub use dense::{Activation, Dense};
pub use gradcheck::{check_gradients, gradient_check, GradCheckReport};
pub use lstm::{Lstm, LstmTrace};
pub use task::{ExtractorTrace, FilmParams, GradientBundle, Head, Loss, TaskNetConfig, TaskNetwork};
pub use tensor::{dot, sign0, Params, Tensor};

