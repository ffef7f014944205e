use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maml::{adapt_on_features, support_features, AdaptedHead};
use crate::net::{Loss, Params, TaskNetwork};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed;
use crate::series::{LabeledWindow, MetaWindow};

use super::{meta_test, FinetuneAdapter, MetaTestConfig};

/// Fine-tuning learning rates searched on validation data.
pub const FINETUNE_LR_GRID: [f64; 3] = [0.01, 0.001, 0.0001];
pub const WEIGHT_DECAY_GRID: [f64; 6] = [0.0, 0.5, 0.1, 0.01, 0.001, 0.0001];

/// Mean support label.
pub fn target_mean_baseline(support: &MetaWindow) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::Empty("support meta-window"));
    }
    Ok(support.labels().sum::<f64>() / support.len() as f64)
}

/// Head-only gradient descent on the support MAE with decoupled weight
/// decay: `θ ← (1 − wd)·θ − lr·∇θ`, likewise for the bias.
pub fn finetune_baseline(
    net: &TaskNetwork,
    support: &MetaWindow,
    lr: f64,
    steps: usize,
    weight_decay: f64,
) -> Result<AdaptedHead> {
    if support.is_empty() {
        return Err(Error::Empty("support meta-window"));
    }
    let (phis, labels) = support_features(net, support)?;
    let run = adapt_on_features(&net.head(), None, &phis, &labels, lr, steps, weight_decay)?;
    Ok(AdaptedHead {
        theta_prime: run.head,
        steps_taken: steps,
        source_support: (support.series_id().to_string(), support.t_index()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr: 0.001,
            epochs: 1000,
            patience: 50,
            batch_size: 128,
            optimizer: OptimizerKind::adam(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epoch: usize,
    pub train_mae: f64,
    pub validation_mae: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Best-validation parameters.
    pub net: TaskNetwork,
    pub best_epoch: usize,
    pub log: Vec<PretrainLog>,
}

fn windows_mae(net: &TaskNetwork, windows: &[LabeledWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("validation windows"));
    }
    let errs = windows
        .par_iter()
        .map(|w| Ok((net.forward(&w.inputs, None)? - w.label).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Mini-batch MAE training of every parameter with early stopping on
/// validation MAE. Batches are reshuffled each epoch from
/// `seed::rng(seed, "pretrain-epoch", e)`.
pub fn pretrain(
    net: TaskNetwork,
    train: &[LabeledWindow],
    validation: &[LabeledWindow],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let mut best_val = windows_mae(&net, validation)?;
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut net = net;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = seed::rng(seed, "pretrain-epoch", epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&LabeledWindow> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, g) = net.backward(&batch, Loss::Mae, None)?;
            total += loss * batch.len() as f64;
            opt.apply(&mut net, &g.net);
        }
        if !net.all_finite() {
            return Err(Error::NonFinite(format!("parameters after pretraining epoch {epoch}")));
        }
        let val = windows_mae(&net, validation)?;
        log.push(PretrainLog {
            epoch,
            train_mae: total / train.len() as f64,
            validation_mae: val,
        });
        if val < best_val {
            best_val = val;
            best = net.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(PretrainOutcome {
        net: best,
        best_epoch,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSelection {
    pub lr: f64,
    pub weight_decay: f64,
    pub validation_mae: f64,
}

/// Grid search of fine-tuning rate and weight decay by meta-testing on
/// validation meta-windows. Ties keep the first grid entry.
pub fn select_finetune(
    net: &TaskNetwork,
    validation: &[MetaWindow],
    lrs: &[f64],
    weight_decays: &[f64],
    cfg: &MetaTestConfig,
) -> Result<FinetuneSelection> {
    let cfg = MetaTestConfig { runs: 1, ..cfg.clone() };
    let mut best: Option<FinetuneSelection> = None;
    for &lr in lrs {
        for &wd in weight_decays {
            let adapter = FinetuneAdapter {
                net: net.clone(),
                lr,
                weight_decay: wd,
            };
            let mae = meta_test(&adapter, validation, &cfg, "")?.aggregate_mae;
            if best.is_none_or(|b| mae < b.validation_mae) {
                best = Some(FinetuneSelection {
                    lr,
                    weight_decay: wd,
                    validation_mae: mae,
                });
            }
        }
    }
    best.ok_or(Error::Empty("fine-tuning grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maml::inner_adapt_steps;
    use crate::net::{Head, TaskNetConfig, Tensor};
    use rand::Rng;

    fn support(labels: &[f64]) -> MetaWindow {
        let ws = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| LabeledWindow {
                inputs: Tensor::from_vec(&[2, 1], vec![i as f64 * 0.1, 1.0]).unwrap(),
                label: y,
                origin_index: i,
            })
            .collect();
        MetaWindow::new(ws, "s", 0).unwrap()
    }

    fn net(seed_idx: u64) -> TaskNetwork {
        let mut rng = seed::rng(8, "baseline", seed_idx);
        let cfg = TaskNetConfig {
            hidden: vec![3],
            feature_dim: Some(3),
            ..TaskNetConfig::new(1, 2)
        };
        let mut n = TaskNetwork::new(cfg, &mut rng).unwrap();
        n.set_head(&Head {
            weight: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.3,
        });
        n
    }

    #[test]
    fn target_mean_examples() {
        assert_eq!(target_mean_baseline(&support(&[1.0, 2.0, 3.0])).unwrap(), 2.0);
        assert_eq!(target_mean_baseline(&support(&[0.7; 4])).unwrap(), 0.7);
        // Query equal to support: MAE is the mean absolute deviation,
        // here |1−3|+|2−3|+|3−3|+|4−3|+|5−3| over 5 = 6/5.
        let s = support(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = target_mean_baseline(&s).unwrap();
        let mae = s.labels().map(|y| (y - m).abs()).sum::<f64>() / 5.0;
        assert!((mae - 1.2).abs() < 1e-15);
    }

    #[test]
    fn zero_decay_matches_inner_adaptation() {
        let n = net(0);
        let s = support(&[0.2, -0.4, 0.9]);
        let a = finetune_baseline(&n, &s, 0.05, 3, 0.0).unwrap();
        let b = inner_adapt_steps(&n, &s, 0.05, 3, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decay_only_step_shrinks_the_head() {
        let n = net(1);
        let a = finetune_baseline(&n, &support(&[0.2, 0.5]), 0.0, 1, 0.5).unwrap();
        let h = n.head();
        assert!(a.theta_prime.weight.iter().zip(&h.weight).all(|(x, y)| *x == 0.5 * y));
        assert_eq!(a.theta_prime.bias, 0.5 * h.bias);
    }

    fn linear_windows(n: usize, rng: &mut seed::Rng, noise: f64) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| {
                let inputs = Tensor::uniform(&[2, 1], 1.0, rng);
                let label = 0.6 * inputs.data()[1] - 0.2 * inputs.data()[0] + 0.5 + noise * rng.random_range(-1.0..1.0);
                LabeledWindow {
                    inputs,
                    label,
                    origin_index: i,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_the_initial_network() {
        let mut rng = seed::rng(2, "pretrain", 0);
        let n = net(2);
        let w = linear_windows(10, &mut rng, 0.0);
        let cfg = PretrainConfig {
            epochs: 0,
            ..PretrainConfig::default()
        };
        let out = pretrain(n.clone(), &w, &w, &cfg, 0).unwrap();
        assert_eq!(out.net.fingerprint(), n.fingerprint());
        assert!(out.log.is_empty());
    }

    #[test]
    fn patience_one_stops_after_one_bad_epoch() {
        let mut rng = seed::rng(3, "pretrain", 0);
        let n = net(3);
        let w = linear_windows(20, &mut rng, 0.0);
        // A huge rate makes the first epoch worse than the start.
        let cfg = PretrainConfig {
            lr: 50.0,
            epochs: 10,
            patience: 1,
            optimizer: OptimizerKind::Sgd,
            ..PretrainConfig::default()
        };
        let out = pretrain(n.clone(), &w, &w, &cfg, 0).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.net.fingerprint(), n.fingerprint());
    }

    #[test]
    fn linear_data_is_fitted_to_the_noise_floor() {
        let mut rng = seed::rng(4, "pretrain", 0);
        let noise = 0.02;
        let train = linear_windows(400, &mut rng, noise);
        let val = linear_windows(100, &mut rng, noise);
        let cfg = PretrainConfig {
            lr: 0.01,
            epochs: 200,
            patience: 200,
            batch_size: 32,
            ..PretrainConfig::default()
        };
        let out = pretrain(net(4), &train, &val, &cfg, 1).unwrap();
        // Uniform noise on ±0.02 has mean absolute value 0.01.
        let best = out.log.iter().map(|l| l.validation_mae).fold(f64::INFINITY, f64::min);
        assert!(best < 0.03, "validation MAE {best}");
    }
}
