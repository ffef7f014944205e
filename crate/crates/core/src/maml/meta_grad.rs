//! Meta-gradient of the post-adaptation query loss.
//!
//! The inner loop only touches the head, and the support loss is MAE, so
//! every inner step is affine in the head with piecewise-constant residual
//! signs. After `K` steps
//!
//! ```text
//! θ_K = θ + (α/l) γ ⊙ Σ_i S_i φ(x_i)      b_K = b + (α/l) Σ_i S_i
//! ```
//!
//! where `S_i = Σ_k sign(y_i − pred_i^(k))` is locally constant. Almost
//! everywhere, therefore, `∂θ_K/∂θ = I` (the inner Hessian vanishes) and the
//! only second-order paths run through the support features `φ(x_i)` and
//! through `γ`:
//!
//! ```text
//! ∂L/∂φ(x_i) = (α/l) S_i γ ⊙ ∂L/∂θ_K
//! ∂L/∂γ     += (α/l) ∂L/∂θ_K ⊙ Σ_i S_i φ(x_i)
//! ```
//!
//! [`MetaGradient::Exact`] includes both paths; [`MetaGradient::FirstOrder`]
//! drops them, treating the adaptation offset as a constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{sign0, FilmParams, Params, TaskNetwork};
use crate::series::MetaWindow;

use super::inner::adapt_on_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaGradient {
    FirstOrder,
    Exact,
}

/// Query loss of one virtual task and its meta-gradient.
#[derive(Debug, Clone)]
pub struct TaskGradient {
    pub query_loss: f64,
    pub net: TaskNetwork,
    pub film: Option<FilmParams>,
}

/// Mean query MAE after adapting the head on `support`.
pub fn adapted_query_loss(
    net: &TaskNetwork,
    film: Option<&FilmParams>,
    support: &MetaWindow,
    query: &MetaWindow,
    alpha: f64,
    steps: usize,
) -> Result<f64> {
    let (phis, labels) = super::inner::support_features(net, support)?;
    let head = adapt_on_features(&net.head(), film, &phis, &labels, alpha, steps, 0.0)?.head;
    let mut total = 0.0;
    for w in query.windows() {
        total += (head.predict(film, &net.features(&w.inputs)?) - w.label).abs();
    }
    Ok(total / query.len() as f64)
}

/// Loss `mean_j |y_j − f_{θ_K | ρ}(x_j)|` on `query` after `steps` inner
/// steps on `support`, and its gradient with respect to every network
/// parameter and (when given) the FiLM vectors.
pub fn task_meta_gradient(
    net: &TaskNetwork,
    film: Option<&FilmParams>,
    support: &MetaWindow,
    query: &MetaWindow,
    alpha: f64,
    steps: usize,
    order: MetaGradient,
) -> Result<TaskGradient> {
    if support.is_empty() || query.is_empty() {
        return Err(Error::Empty("virtual task"));
    }
    let f = net.feature_size();
    let support_traces = support
        .windows()
        .iter()
        .map(|w| net.extract(&w.inputs))
        .collect::<Result<Vec<_>>>()?;
    let phis: Vec<Vec<f64>> = support_traces.iter().map(|t| t.features().to_vec()).collect();
    let labels: Vec<f64> = support.labels().collect();
    let run = adapt_on_features(&net.head(), film, &phis, &labels, alpha, steps, 0.0)?;
    let adapted = run.head;

    let mut grads = net.zeros_like();
    let mut film_grads = film.map(|fm| fm.zeros_like());
    let w_eff = match film {
        Some(fm) => fm.apply(&adapted.weight),
        None => adapted.weight.clone(),
    };
    let m = query.len() as f64;
    let mut d_theta = vec![0.0; f];
    let mut d_bias = 0.0;
    let mut total = 0.0;
    for w in query.windows() {
        let trace = net.extract(&w.inputs)?;
        let phi = trace.features();
        let pred = adapted.predict(film, phi);
        total += (pred - w.label).abs();
        let dq = sign0(pred - w.label) / m;
        if dq == 0.0 {
            continue;
        }
        for k in 0..f {
            let g = film.map_or(1.0, |fm| fm.gamma()[k]);
            d_theta[k] += dq * g * phi[k];
        }
        d_bias += dq;
        if let Some(gf) = film_grads.as_mut() {
            for k in 0..f {
                gf.gamma_mut()[k] += dq * adapted.weight[k] * phi[k];
                gf.beta_mut()[k] += dq * phi[k];
            }
        }
        let dphi: Vec<f64> = w_eff.iter().map(|v| v * dq).collect();
        net.extractor_backward(&trace, &dphi, &mut grads);
    }
    {
        let (gh, gb) = grads.head_slots_mut();
        gh.iter_mut().zip(&d_theta).for_each(|(g, d)| *g += d);
        *gb += d_bias;
    }
    if order == MetaGradient::Exact && steps > 0 {
        let c = alpha / support.len() as f64;
        if let Some(gf) = film_grads.as_mut() {
            for (phi, s) in phis.iter().zip(&run.sign_sums) {
                if *s == 0.0 {
                    continue;
                }
                for k in 0..f {
                    gf.gamma_mut()[k] += c * d_theta[k] * s * phi[k];
                }
            }
        }
        for (trace, s) in support_traces.iter().zip(&run.sign_sums) {
            if *s == 0.0 {
                continue;
            }
            let dphi: Vec<f64> = (0..f)
                .map(|k| c * s * film.map_or(1.0, |fm| fm.gamma()[k]) * d_theta[k])
                .collect();
            net.extractor_backward(trace, &dphi, &mut grads);
        }
    }
    Ok(TaskGradient {
        query_loss: total / m,
        net: grads,
        film: film_grads,
    })
}
