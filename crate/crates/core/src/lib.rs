//! Meta-learning for time series regression.
//!
//! Long multivariate series are cut into labeled windows, grouped into
//! meta-windows, and consecutive meta-windows are paired into *virtual
//! tasks*: adapt on one meta-window, predict the next. On top of that the
//! crate provides
//!
//! * [`maml`]: MAML with fast adaptation restricted to the linear head,
//!   exact meta-gradients, and the closed-form kernel view of a one-step
//!   MAE adaptation;
//! * [`mmaml`]: the multimodal variant, where a variational recurrent
//!   autoencoder embeds a summary of the support meta-window and a
//!   generator emits FiLM parameters that modulate the head;
//! * [`eval`]: the sliding meta-testing protocol, baselines, ablations and
//!   a synthetic task family for desk-scale experiments.
//!
//! All arithmetic is `f64`; gradients are analytic and checked against
//! central finite differences ([`net::gradcheck`]).

// Index loops over several parallel arrays read better than zipped
// iterators in the gradient code, and `!(a > b)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod hash;
pub mod maml;
pub mod mmaml;
pub mod net;
pub mod optim;
pub mod seed;
pub mod series;
pub mod verify;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/windows.md")]
    mod windows {}
    #[doc = include_str!("../../../book/src/maml.md")]
    mod maml {}
    #[doc = include_str!("../../../book/src/mmaml.md")]
    mod mmaml {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
