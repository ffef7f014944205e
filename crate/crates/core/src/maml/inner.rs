use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{sign0, FilmParams, Head, TaskNetwork};
use crate::series::MetaWindow;

use super::MamlConfig;

/// Head after fast adaptation on one support meta-window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedHead {
    pub theta_prime: Head,
    pub steps_taken: usize,
    /// `(series_id, t_index)` of the support meta-window.
    pub source_support: (String, usize),
}

/// Result of running the head-only inner loop on precomputed features.
#[derive(Debug, Clone)]
pub(crate) struct InnerRun {
    pub head: Head,
    /// `S_i = Σ_k sign(y_i − pred_i^(k))` accumulated over the steps.
    pub sign_sums: Vec<f64>,
    /// Mean support MAE before each step, then after the last one.
    pub losses: Vec<f64>,
}

/// Gradient descent on the mean support MAE with respect to the head
/// (`θ` and bias), features frozen:
///
/// `θ ← θ + (α/l) Σ_i sign(y_i − pred_i) γ ⊙ φ_i`, `b ← b + (α/l) Σ_i sign(y_i − pred_i)`.
///
/// The gradient is taken with respect to the unmodulated `θ`, so the chain
/// rule through `γ ⊙ θ + β` contributes the factor `γ`.
pub(crate) fn adapt_on_features(
    head: &Head,
    film: Option<&FilmParams>,
    phis: &[Vec<f64>],
    labels: &[f64],
    alpha: f64,
    steps: usize,
    weight_decay: f64,
) -> Result<InnerRun> {
    let l = phis.len() as f64;
    let mut head = head.clone();
    let mut sign_sums = vec![0.0; phis.len()];
    let mut losses = Vec::with_capacity(steps + 1);
    let f = head.weight.len();
    for step in 0..steps {
        let mut g_w = vec![0.0; f];
        let mut g_b = 0.0;
        let mut loss = 0.0;
        for (i, (phi, &y)) in phis.iter().zip(labels).enumerate() {
            let r = y - head.predict(film, phi);
            loss += r.abs();
            let s = sign0(r);
            if s == 0.0 {
                continue;
            }
            sign_sums[i] += s;
            match film {
                Some(fm) => {
                    for k in 0..f {
                        g_w[k] -= s * fm.gamma()[k] * phi[k];
                    }
                }
                None => {
                    for k in 0..f {
                        g_w[k] -= s * phi[k];
                    }
                }
            }
            g_b -= s;
        }
        losses.push(loss / l);
        let keep = 1.0 - weight_decay;
        for (w, g) in head.weight.iter_mut().zip(&g_w) {
            *w = keep * *w - alpha * g / l;
        }
        head.bias = keep * head.bias - alpha * g_b / l;
        if !head.is_finite() {
            return Err(Error::DivergentInnerLoop { step: step + 1 });
        }
    }
    let final_loss = phis
        .iter()
        .zip(labels)
        .map(|(phi, y)| (y - head.predict(film, phi)).abs())
        .sum::<f64>()
        / l;
    losses.push(final_loss);
    Ok(InnerRun {
        head,
        sign_sums,
        losses,
    })
}

pub(crate) fn support_features(net: &TaskNetwork, mw: &MetaWindow) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let phis = mw
        .windows()
        .iter()
        .map(|w| net.features(&w.inputs))
        .collect::<Result<Vec<_>>>()?;
    Ok((phis, mw.labels().collect()))
}

/// Adapts the head of `net` on `support` with `cfg.inner_steps` steps of
/// gradient descent on the mean MAE. The extractor and `film` are frozen.
pub fn inner_adapt(
    net: &TaskNetwork,
    support: &MetaWindow,
    cfg: &MamlConfig,
    film: Option<&FilmParams>,
) -> Result<AdaptedHead> {
    inner_adapt_steps(net, support, cfg.inner_lr, cfg.inner_steps, film)
}

/// [`inner_adapt`] with an explicit learning rate and step count.
pub fn inner_adapt_steps(
    net: &TaskNetwork,
    support: &MetaWindow,
    alpha: f64,
    steps: usize,
    film: Option<&FilmParams>,
) -> Result<AdaptedHead> {
    if support.is_empty() {
        return Err(Error::Empty("support meta-window"));
    }
    let (phis, labels) = support_features(net, support)?;
    let run = adapt_on_features(&net.head(), film, &phis, &labels, alpha, steps, 0.0)?;
    Ok(AdaptedHead {
        theta_prime: run.head,
        steps_taken: steps,
        source_support: (support.series_id().to_string(), support.t_index()),
    })
}

/// Mean support MAE before each inner step and after the last one.
pub fn inner_loss_trace(
    net: &TaskNetwork,
    support: &MetaWindow,
    alpha: f64,
    steps: usize,
    film: Option<&FilmParams>,
) -> Result<Vec<f64>> {
    let (phis, labels) = support_features(net, support)?;
    Ok(adapt_on_features(&net.head(), film, &phis, &labels, alpha, steps, 0.0)?.losses)
}
