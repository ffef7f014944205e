//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::series::LabeledWindow;

use super::tensor::Params;
use super::task::{FilmParams, Loss, TaskNetwork};

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat parameter index with the largest discrepancy.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` against `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every
/// coordinate of `x0`.
pub fn check_gradients(
    x0: &[f64],
    analytic: &[f64],
    f: impl Fn(&[f64]) -> f64,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x0.len(), analytic.len(), "one analytic entry per coordinate");
    let mut x = x0.to_vec();
    let mut worst = (0.0_f64, 0usize);
    for i in 0..x.len() {
        x[i] = x0[i] + step;
        let up = f(&x);
        x[i] = x0[i] - step;
        let down = f(&x);
        x[i] = x0[i];
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 || err.is_nan() {
            worst = (if err.is_nan() { f64::INFINITY } else { err }, i);
        }
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        checked: x0.len(),
        tolerance,
        passed: worst.0 < tolerance,
    }
}

/// Checks [`TaskNetwork::backward`] on `batch` for every network parameter
/// and, if given, the FiLM vectors (appended after the network parameters).
pub fn gradient_check(
    net: &TaskNetwork,
    batch: &[&LabeledWindow],
    loss: Loss,
    film: Option<&FilmParams>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = net.backward(batch, loss, film)?;
    let n_net = net.num_params();
    let mut x0 = net.to_flat();
    let mut analytic = grads.net.to_flat();
    if let (Some(f), Some(g)) = (film, grads.film.as_ref()) {
        x0.extend(f.to_flat());
        analytic.extend(g.to_flat());
    }
    let objective = |x: &[f64]| -> f64 {
        let mut n = net.clone();
        n.set_flat(&x[..n_net]);
        let film = film.map(|f| {
            let mut f = f.clone();
            f.set_flat(&x[n_net..]);
            f
        });
        batch
            .iter()
            .map(|w| loss.value(n.forward(&w.inputs, film.as_ref()).expect("shapes checked"), w.label))
            .sum::<f64>()
            / batch.len() as f64
    };
    Ok(check_gradients(&x0, &analytic, objective, DEFAULT_STEP, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Head, TaskNetConfig, Tensor};
    use crate::seed;
    use rand::Rng;

    fn setup(window: usize, seed_idx: u64) -> (TaskNetwork, Vec<LabeledWindow>) {
        let mut rng = seed::rng(5, "gradcheck", seed_idx);
        let cfg = TaskNetConfig {
            channels: 2,
            window_size: window,
            hidden: vec![3, 2],
            feature_dim: Some(4),
            activation: Activation::Tanh,
        };
        let mut net = TaskNetwork::new(cfg, &mut rng).unwrap();
        net.set_head(&Head {
            weight: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.1,
        });
        let ws = (0..5)
            .map(|i| LabeledWindow {
                inputs: Tensor::uniform(&[window, 2], 1.0, &mut rng),
                label: rng.random_range(-1.0..1.0),
                origin_index: i,
            })
            .collect();
        (net, ws)
    }

    #[test]
    fn random_init_passes_for_both_losses_with_and_without_film() {
        let (net, ws) = setup(4, 0);
        let batch: Vec<&LabeledWindow> = ws.iter().collect();
        let film = FilmParams::new(vec![0.8, 1.2, -0.5, 1.0], vec![0.1, -0.3, 0.0, 0.2]).unwrap();
        for loss in [Loss::Mae, Loss::Mse] {
            for f in [None, Some(&film)] {
                let r = gradient_check(&net, &batch, loss, f, 1e-4).unwrap();
                assert!(r.passed, "{loss:?} film={}: {r:?}", f.is_some());
            }
        }
    }

    #[test]
    fn recurrent_sequence_of_eight_passes() {
        let (net, ws) = setup(8, 1);
        let batch: Vec<&LabeledWindow> = ws.iter().collect();
        let r = gradient_check(&net, &batch, Loss::Mse, None, 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (net, ws) = setup(4, 2);
        let batch: Vec<&LabeledWindow> = ws.iter().collect();
        let (_, g) = net.backward(&batch, Loss::Mse, None).unwrap();
        let mut analytic = g.net.to_flat();
        let idx = analytic.iter().position(|v| v.abs() > 1e-3).unwrap();
        analytic[idx] *= 2.0;
        let f = |x: &[f64]| {
            let mut n = net.clone();
            n.set_flat(x);
            n.backward(&batch, Loss::Mse, None).unwrap().0
        };
        let r = check_gradients(&net.to_flat(), &analytic, f, DEFAULT_STEP, 1e-4);
        assert!(!r.passed);
        assert_eq!(r.worst_index, idx);
    }
}
