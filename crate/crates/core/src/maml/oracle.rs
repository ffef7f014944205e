//! Closed-form view of one-step MAE adaptation of the linear head.
//!
//! With frozen features and mean MAE over a support of size `l`, one inner
//! step moves a query prediction by a kernel-weighted vote of the support
//! residual signs:
//!
//! ```text
//! ŷ'_j = θᵀφ(x_j) + b − ε_j
//! ε_j  = −(α/l) Σ_i sign(y_i − θᵀφ(x_i) − b) · κ(x_i, x_j)
//! κ(x_i, x_j) = φ(x_i)ᵀφ(x_j) + 1
//! ```
//!
//! The `+1` is the constant feature carried by the head bias. This module
//! computes `ŷ'_j` directly from kernel sums, without running the inner
//! loop, so it serves as an independent check of [`super::inner_adapt`].

use crate::error::{Error, Result};
use crate::net::{dot, sign0, Loss, TaskNetwork, Tensor};
use crate::series::MetaWindow;

use super::MamlConfig;

/// Feature kernel including the bias feature.
pub fn kernel(phi_i: &[f64], phi_j: &[f64]) -> f64 {
    dot(phi_i, phi_j) + 1.0
}

/// Correcting factor `ε_j` for one query input.
pub fn correcting_factor(net: &TaskNetwork, support: &MetaWindow, query: &Tensor, alpha: f64) -> Result<f64> {
    let head = net.head();
    let phi_j = net.features(query)?;
    let l = support.len() as f64;
    let mut vote = 0.0;
    for w in support.windows() {
        let phi_i = net.features(&w.inputs)?;
        let residual = w.label - (dot(&head.weight, &phi_i) + head.bias);
        vote += sign0(residual) * kernel(&phi_i, &phi_j);
    }
    Ok(-(alpha / l) * vote)
}

/// Query prediction after one MAE inner step, via the kernel expression.
///
/// Only defined for one inner step, MAE loss and an unmodulated head.
pub fn kernel_oracle_predict(
    net: &TaskNetwork,
    support: &MetaWindow,
    query: &Tensor,
    cfg: &MamlConfig,
    loss: Loss,
) -> Result<f64> {
    if cfg.inner_steps != 1 {
        return Err(Error::Config(format!(
            "kernel oracle covers exactly one inner step, got {}",
            cfg.inner_steps
        )));
    }
    if loss != Loss::Mae {
        return Err(Error::Config("kernel oracle covers the MAE loss only".into()));
    }
    if support.is_empty() {
        return Err(Error::Empty("support meta-window"));
    }
    let head = net.head();
    let phi_j = net.features(query)?;
    let eps = correcting_factor(net, support, query, cfg.inner_lr)?;
    Ok(dot(&head.weight, &phi_j) + head.bias - eps)
}
