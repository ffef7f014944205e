//! Seeded self-checks: finite-difference gradient suites for every
//! parameter group and the kernel-oracle equivalence of one-step adaptation.

use rand::Rng as _;
use serde::Serialize;

use crate::error::Result;
use crate::maml::{adapted_query_loss, inner_adapt, kernel_oracle_predict, task_meta_gradient, MamlConfig, MetaGradient};
use crate::mmaml::{MmamlConfig, MmamlModel};
use crate::net::{check_gradients, gradient_check, Activation, FilmParams, GradCheckReport, Head, Loss, Params};
use crate::net::{TaskNetConfig, TaskNetwork, Tensor};
use crate::seed::{self, Rng};
use crate::series::{LabeledWindow, MetaWindow};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn windows(rng: &mut Rng, n: usize, delta: usize, c: usize, t: usize) -> Vec<LabeledWindow> {
    (0..n)
        .map(|i| LabeledWindow {
            inputs: Tensor::uniform(&[delta, c], 1.0, rng),
            label: rng.random_range(-1.0..1.0),
            origin_index: t * n + i,
        })
        .collect()
}

fn small_net(rng: &mut Rng, window: usize, hidden: Vec<usize>) -> Result<TaskNetwork> {
    let cfg = TaskNetConfig {
        channels: 2,
        window_size: window,
        hidden,
        feature_dim: Some(4),
        activation: Activation::Tanh,
    };
    let mut net = TaskNetwork::new(cfg, rng)?;
    net.set_head(&Head {
        weight: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bias: 0.1,
    });
    Ok(net)
}

fn film(rng: &mut Rng) -> Result<FilmParams> {
    FilmParams::new(
        (0..4).map(|_| rng.random_range(0.5..1.5)).collect(),
        (0..4).map(|_| rng.random_range(-0.3..0.3)).collect(),
    )
}

/// Runs every gradient check on small seeded instances:
/// the task network (LSTM extractor through BPTT, dense projection, head)
/// under both losses, the FiLM vectors, the exact meta-gradient through one
/// and three inner steps, and the full MMAML objective (task network,
/// encoder `μ`/`log σ²` through the reparameterization, decoder, generator).
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteCheck>> {
    let tol = GRADIENT_TOLERANCE;
    let mut out = Vec::new();

    let mut rng = seed::rng(seed, "gradcheck-net", 0);
    let net = small_net(&mut rng, 8, vec![3, 2])?;
    let ws = windows(&mut rng, 5, 8, 2, 0);
    let batch: Vec<&LabeledWindow> = ws.iter().collect();
    let f = film(&mut rng)?;
    out.push(SuiteCheck {
        name: "task network, MAE",
        report: gradient_check(&net, &batch, Loss::Mae, None, tol)?,
    });
    out.push(SuiteCheck {
        name: "task network, MSE",
        report: gradient_check(&net, &batch, Loss::Mse, None, tol)?,
    });
    out.push(SuiteCheck {
        name: "task network + FiLM",
        report: gradient_check(&net, &batch, Loss::Mae, Some(&f), tol)?,
    });

    for (steps, name) in [(1, "meta-gradient, 1 inner step"), (3, "meta-gradient, 3 inner steps")] {
        let mut rng = seed::rng(seed, "gradcheck-meta", steps as u64);
        let net = small_net(&mut rng, 3, vec![3])?;
        let f = film(&mut rng)?;
        let s = MetaWindow::new(windows(&mut rng, 6, 3, 2, 0), "s", 0)?;
        let q = MetaWindow::new(windows(&mut rng, 5, 3, 2, 1), "s", 1)?;
        let alpha = 0.3;
        let g = task_meta_gradient(&net, Some(&f), &s, &q, alpha, steps, MetaGradient::Exact)?;
        let n_net = net.num_params();
        let mut x0 = net.to_flat();
        x0.extend(f.to_flat());
        let mut analytic = g.net.to_flat();
        analytic.extend(g.film.as_ref().expect("film gradient requested").to_flat());
        let objective = |x: &[f64]| {
            let mut n = net.clone();
            n.set_flat(&x[..n_net]);
            let mut fm = f.clone();
            fm.set_flat(&x[n_net..]);
            adapted_query_loss(&n, Some(&fm), &s, &q, alpha, steps).expect("shapes checked")
        };
        out.push(SuiteCheck {
            name,
            report: check_gradients(&x0, &analytic, objective, 1e-6, tol),
        });
    }

    let mut rng = seed::rng(seed, "gradcheck-mmaml", 0);
    let cfg = MmamlConfig {
        maml: MamlConfig {
            inner_lr: 0.2,
            ..MamlConfig::default()
        },
        vrae_weight: 0.1,
        latent_dim: 3,
        hidden_size: 4,
        stochastic_encode: true,
        freeze_modulation: false,
    };
    let net = small_net(&mut rng, 3, vec![3])?;
    let mut m = MmamlModel::new(net, &cfg, &mut rng);
    // Move the generator off zero so γ and β differ from the identity.
    let mut flat = m.to_flat();
    let n = flat.len();
    let gen = m.modulation.generator().num_params();
    for v in &mut flat[n - gen..] {
        *v = rng.random_range(-0.3..0.3);
    }
    m.set_flat(&flat);
    let s = MetaWindow::new(windows(&mut rng, 5, 3, 2, 0), "s", 0)?;
    let q = MetaWindow::new(windows(&mut rng, 4, 3, 2, 1), "s", 1)?;
    let eta = m.modulation.sample_noise(&mut rng);
    let terms = m.task_terms(&cfg, &s, &q, Some(eta.clone()))?;
    let objective = |x: &[f64]| {
        let mut p = m.clone();
        p.set_flat(x);
        let o = p.task_terms(&cfg, &s, &q, Some(eta.clone())).expect("shapes checked");
        o.query_loss + cfg.vrae_weight * o.aux_loss
    };
    out.push(SuiteCheck {
        name: "MMAML: task network, encoder, decoder, generator",
        report: check_gradients(&m.to_flat(), &terms.grad.to_flat(), objective, 1e-6, tol),
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A random (network, support, query window, α) instance.
pub fn oracle_instance(seed: u64, idx: u64) -> Result<(TaskNetwork, MetaWindow, Tensor, f64)> {
    let mut rng = seed::rng(seed, "oracle", idx);
    let c = rng.random_range(1..4);
    let delta = rng.random_range(1..6);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..7)).collect();
    let feature_dim = rng.random_bool(0.5).then(|| rng.random_range(2..9));
    let activation = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Identity };
    let cfg = TaskNetConfig {
        channels: c,
        window_size: delta,
        hidden,
        feature_dim,
        activation,
    };
    let mut net = TaskNetwork::new(cfg, &mut rng)?;
    let f = net.feature_size();
    net.set_head(&Head {
        weight: (0..f).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bias: rng.random_range(-0.5..0.5),
    });
    let l = rng.random_range(1..12);
    let ws = (0..l)
        .map(|i| LabeledWindow {
            inputs: Tensor::uniform(&[delta, c], 2.0, &mut rng),
            label: rng.random_range(-1.0..1.0),
            origin_index: i,
        })
        .collect();
    let query = Tensor::uniform(&[delta, c], 2.0, &mut rng);
    let alpha = rng.random_range(0.001..1.0);
    Ok((net, MetaWindow::new(ws, "s", 0)?, query, alpha))
}

/// Compares the prediction after one MAE inner step with the kernel
/// expression on `instances` random instances.
pub fn oracle_suite(seed: u64, instances: usize) -> Result<OracleReport> {
    let mut worst = 0.0_f64;
    for idx in 0..instances as u64 {
        let (net, support, query, alpha) = oracle_instance(seed, idx)?;
        let cfg = MamlConfig {
            inner_lr: alpha,
            ..MamlConfig::default()
        };
        let adapted = inner_adapt(&net, &support, &cfg, None)?;
        let direct = net.with_head(&adapted.theta_prime).forward(&query, None)?;
        let oracle = kernel_oracle_predict(&net, &support, &query, &cfg, Loss::Mae)?;
        let err = (direct - oracle).abs();
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(OracleReport {
        instances,
        max_abs_error: worst,
        tolerance: ORACLE_TOLERANCE,
        passed: worst <= ORACLE_TOLERANCE,
    })
}
