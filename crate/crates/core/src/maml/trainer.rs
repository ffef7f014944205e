use std::path::Path;

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Params, TaskNetwork};
use crate::optim::Optimizer;
use crate::seed::{self, Rng};
use crate::series::{MetaWindow, VirtualTask};

use super::{adapted_query_loss, meta_augment, task_meta_gradient, MamlConfig};

/// Query loss, auxiliary loss and outer-objective gradient of one task.
#[derive(Debug, Clone)]
pub struct TaskOutcome<G> {
    pub query_loss: f64,
    /// Extra loss term optimized alongside the query loss (zero for MAML).
    pub aux_loss: f64,
    pub grad: G,
}

/// A model trainable by the meta-training loop. Gradients share the model
/// type, so the outer update is `Params` arithmetic.
pub trait MetaLearner: Params + Clone + Send + Sync {
    type Config: Sync;

    fn maml_config(cfg: &Self::Config) -> &MamlConfig;

    /// Outer-objective gradient for one (already augmented) support and its
    /// query. `rng` drives any sampling inside the model.
    fn task_gradient(
        &self,
        cfg: &Self::Config,
        support: &MetaWindow,
        query: &MetaWindow,
        rng: &mut Rng,
    ) -> Result<TaskOutcome<Self>>;

    /// Deterministic post-adaptation query MAE.
    fn query_loss(&self, cfg: &Self::Config, support: &MetaWindow, query: &MetaWindow) -> Result<f64>;
}

impl MetaLearner for TaskNetwork {
    type Config = MamlConfig;

    fn maml_config(cfg: &MamlConfig) -> &MamlConfig {
        cfg
    }

    fn task_gradient(
        &self,
        cfg: &MamlConfig,
        support: &MetaWindow,
        query: &MetaWindow,
        _rng: &mut Rng,
    ) -> Result<TaskOutcome<Self>> {
        let g = task_meta_gradient(self, None, support, query, cfg.inner_lr, cfg.inner_steps, cfg.meta_gradient())?;
        Ok(TaskOutcome {
            query_loss: g.query_loss,
            aux_loss: 0.0,
            grad: g.net,
        })
    }

    fn query_loss(&self, cfg: &MamlConfig, support: &MetaWindow, query: &MetaWindow) -> Result<f64> {
        adapted_query_loss(self, None, support, query, cfg.inner_lr, cfg.inner_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean query MAE of the sampled batch, before the update.
    pub train_query_mae: f64,
    pub train_aux_loss: f64,
    pub validation_query_mae: f64,
    /// Whether this epoch set a new best validation value.
    pub best: bool,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerState<M> {
    pub model: M,
    pub best_model: M,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub stopped_early: bool,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct MetaTrainOutcome<M> {
    /// Parameters with the best validation query MAE.
    pub model: M,
    pub final_model: M,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub log: Vec<EpochLog>,
}

/// Mean post-adaptation query MAE over `tasks`.
pub fn validation_loss<M: MetaLearner>(model: &M, cfg: &M::Config, tasks: &[VirtualTask<'_>]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::Empty("validation virtual tasks"));
    }
    let losses = tasks
        .par_iter()
        .map(|t| model.query_loss(cfg, t.support, t.query))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Outer loop: each meta-epoch samples a batch of virtual tasks without
/// replacement, averages their meta-gradients (summed in batch order) and
/// applies one optimizer step.
///
/// Every epoch draws from its own stream `seed::rng(seed, "meta-epoch", e)`,
/// so a resumed run follows the same trajectory as an uninterrupted one, and
/// results do not depend on the thread count.
pub struct MetaTrainer<'a, M: MetaLearner> {
    cfg: &'a M::Config,
    train: Vec<VirtualTask<'a>>,
    validation: Vec<VirtualTask<'a>>,
    state: TrainerState<M>,
}

impl<'a, M: MetaLearner> MetaTrainer<'a, M> {
    pub fn new(
        model: M,
        cfg: &'a M::Config,
        train: Vec<VirtualTask<'a>>,
        validation: Vec<VirtualTask<'a>>,
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training virtual tasks"));
        }
        let best_validation = validation_loss(&model, cfg, &validation)?;
        let maml = M::maml_config(cfg);
        let state = TrainerState {
            best_model: model.clone(),
            model,
            optimizer: Optimizer::new(maml.optimizer, maml.meta_lr),
            seed,
            epoch: 0,
            best_epoch: 0,
            best_validation,
            stopped_early: false,
            log: Vec::new(),
        };
        Ok(MetaTrainer {
            cfg,
            train,
            validation,
            state,
        })
    }

    pub fn resume(
        state: TrainerState<M>,
        cfg: &'a M::Config,
        train: Vec<VirtualTask<'a>>,
        validation: Vec<VirtualTask<'a>>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training virtual tasks"));
        }
        if validation.is_empty() {
            return Err(Error::Empty("validation virtual tasks"));
        }
        Ok(MetaTrainer {
            cfg,
            train,
            validation,
            state,
        })
    }

    pub fn state(&self) -> &TrainerState<M> {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped_early || self.state.epoch >= M::maml_config(self.cfg).meta_epochs
    }

    /// Runs one meta-epoch.
    pub fn step(&mut self) -> Result<EpochLog> {
        let maml = M::maml_config(self.cfg);
        let s = &mut self.state;
        let epoch = s.epoch + 1;
        let mut rng = seed::rng(s.seed, "meta-epoch", epoch as u64);
        let k = maml.meta_batch_size.min(self.train.len());
        let picks = rand::seq::index::sample(&mut rng, self.train.len(), k).into_vec();
        let task_seeds: Vec<u64> = picks.iter().map(|_| rng.random()).collect();
        let model = &s.model;
        let cfg = self.cfg;
        let outcomes = picks
            .par_iter()
            .zip(task_seeds.par_iter())
            .map(|(&i, &task_seed)| {
                let mut trng = Rng::seed_from_u64(task_seed);
                let task = self.train[i];
                let support = meta_augment(task.support, maml.noise_level, &mut trng);
                model.task_gradient(cfg, &support, task.query, &mut trng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grad = model.zeros_like();
        let (mut query, mut aux) = (0.0, 0.0);
        for o in &outcomes {
            grad.add_scaled(1.0, &o.grad);
            query += o.query_loss;
            aux += o.aux_loss;
        }
        grad.scale(1.0 / k as f64);
        if !grad.all_finite() {
            return Err(Error::NonFinite(format!("meta-gradient at epoch {epoch}")));
        }
        s.optimizer.apply(&mut s.model, &grad);
        if !s.model.all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let validation = validation_loss(&s.model, cfg, &self.validation)?;
        let best = validation < s.best_validation;
        if best {
            s.best_validation = validation;
            s.best_epoch = epoch;
            s.best_model = s.model.clone();
        } else if epoch - s.best_epoch >= maml.patience {
            s.stopped_early = true;
        }
        s.epoch = epoch;
        let log = EpochLog {
            epoch,
            train_query_mae: query / k as f64,
            train_aux_loss: aux / k as f64,
            validation_query_mae: validation,
            best,
        };
        s.log.push(log.clone());
        Ok(log)
    }

    /// Steps until the epoch budget is spent or early stopping triggers,
    /// calling `on_epoch` after every epoch (for checkpoints and logs).
    pub fn run(&mut self, mut on_epoch: impl FnMut(&TrainerState<M>, &EpochLog) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let log = self.step()?;
            on_epoch(&self.state, &log)?;
        }
        Ok(())
    }

    pub fn into_state(self) -> TrainerState<M> {
        self.state
    }

    pub fn finish(self) -> MetaTrainOutcome<M> {
        let s = self.state;
        MetaTrainOutcome {
            model: s.best_model,
            final_model: s.model,
            best_epoch: s.best_epoch,
            stopped_early: s.stopped_early,
            log: s.log,
        }
    }
}

/// Meta-trains `model` to completion.
pub fn meta_train<M: MetaLearner>(
    model: M,
    cfg: &M::Config,
    train: Vec<VirtualTask<'_>>,
    validation: Vec<VirtualTask<'_>>,
    seed: u64,
) -> Result<MetaTrainOutcome<M>> {
    let mut trainer = MetaTrainer::new(model, cfg, train, validation, seed)?;
    trainer.run(|_, _| Ok(()))?;
    Ok(trainer.finish())
}

pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in log {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
