//! `train`: one model per run seed under `train/<model>/run-<r>/`.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tsmeta::checkpoint;
use tsmeta::eval::{pretrain, PretrainLog};
use tsmeta::maml::{write_log_csv, MetaLearner, MetaTrainer, TrainerState};
use tsmeta::mmaml::MmamlModel;
use tsmeta::net::TaskNetwork;
use tsmeta::seed;
use tsmeta::series::{virtual_tasks, MetaWindowSet};

use crate::config::{ModelKind, RunConfig};
use crate::data::{self, META_TRAIN, META_VALIDATION, TRAIN_WINDOWS, VALIDATION_WINDOWS};

pub const BEST: &str = "best.json";
pub const FINAL: &str = "final.json";
pub const STATE: &str = "state.json";
pub const LOG: &str = "log.csv";

/// Payload of the checkpoint written for the target-mean baseline, which
/// has nothing to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub model: String,
}

pub fn run_seed(cfg: &RunConfig, run: usize) -> u64 {
    seed::derive(cfg.seed, "run", run as u64)
}

pub fn init_net(cfg: &RunConfig, header_channels: usize, run_seed: u64) -> Result<TaskNetwork> {
    let net_cfg = cfg.net.task_net(header_channels, cfg.window.size);
    Ok(TaskNetwork::new(net_cfg, &mut seed::rng(run_seed, "init", 0))?)
}

pub fn train(cfg: &RunConfig, resume: bool, stop_after: Option<usize>) -> Result<()> {
    let hash = cfg.train_hash();
    let root = cfg.output_dir.join("train").join(cfg.model.tag());
    std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    cfg.echo(&root)?;
    match cfg.model {
        ModelKind::TargetMean => {
            for r in 0..cfg.eval.runs {
                let dir = cfg.run_dir(r);
                std::fs::create_dir_all(&dir)?;
                let marker = Marker {
                    model: cfg.model.tag().into(),
                };
                checkpoint::save(&dir.join(BEST), &hash, &marker)?;
                checkpoint::save(&dir.join(FINAL), &hash, &marker)?;
            }
            eprintln!("target-mean has no parameters; wrote marker checkpoints");
            Ok(())
        }
        ModelKind::LstmFinetune => {
            let train = data::windows(&data::load_set(cfg, TRAIN_WINDOWS)?);
            let validation = data::windows(&data::load_set(cfg, VALIDATION_WINDOWS)?);
            let channels = train.first().map_or(0, |w| w.inputs.cols());
            for r in 0..cfg.eval.runs {
                let s = run_seed(cfg, r);
                let dir = cfg.run_dir(r);
                std::fs::create_dir_all(&dir)?;
                let t0 = Instant::now();
                let out = pretrain(init_net(cfg, channels, s)?, &train, &validation, &cfg.pretrain, s)?;
                checkpoint::save(&dir.join(BEST), &hash, &out.net)?;
                checkpoint::save(&dir.join(FINAL), &hash, &out.net)?;
                write_pretrain_log(&dir.join(LOG), &out.log)?;
                eprintln!(
                    "run {r}: pretrained {} epochs (best {}) in {:.1}s",
                    out.log.len(),
                    out.best_epoch,
                    t0.elapsed().as_secs_f64()
                );
            }
            Ok(())
        }
        ModelKind::Maml => {
            let sets = (data::load_set(cfg, META_TRAIN)?, data::load_set(cfg, META_VALIDATION)?);
            let mcfg = cfg.maml.clone();
            for r in 0..cfg.eval.runs {
                let s = run_seed(cfg, r);
                let model = init_net(cfg, sets.0.header.channels, s)?;
                meta_train_run(cfg, r, &sets, model, &mcfg, s, resume, stop_after)?;
            }
            Ok(())
        }
        ModelKind::Mmaml => {
            let sets = (data::load_set(cfg, META_TRAIN)?, data::load_set(cfg, META_VALIDATION)?);
            let mcfg = cfg.mmaml_config();
            for r in 0..cfg.eval.runs {
                let s = run_seed(cfg, r);
                let net = init_net(cfg, sets.0.header.channels, s)?;
                let model = MmamlModel::new(net, &mcfg, &mut seed::rng(s, "modulation", 0));
                meta_train_run(cfg, r, &sets, model, &mcfg, s, resume, stop_after)?;
            }
            Ok(())
        }
    }
}

fn write_pretrain_log(path: &Path, log: &[PretrainLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn meta_train_run<M>(
    cfg: &RunConfig,
    run: usize,
    (train, validation): &(MetaWindowSet, MetaWindowSet),
    model: M,
    mcfg: &M::Config,
    run_seed: u64,
    resume: bool,
    stop_after: Option<usize>,
) -> Result<()>
where
    M: MetaLearner + Serialize + DeserializeOwned,
{
    let hash = cfg.train_hash();
    let dir = cfg.run_dir(run);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let state_path = dir.join(STATE);
    let train_tasks = virtual_tasks(&train.meta_windows, 1);
    let val_tasks = virtual_tasks(&validation.meta_windows, cfg.train.validation_step);
    let mut trainer = if resume && state_path.exists() {
        let state: TrainerState<M> = checkpoint::load(&state_path, Some(&hash))?.payload;
        eprintln!("run {run}: resuming at meta-epoch {}", state.epoch);
        MetaTrainer::resume(state, mcfg, train_tasks, val_tasks)?
    } else {
        MetaTrainer::new(model, mcfg, train_tasks, val_tasks, run_seed)?
    };
    let t0 = Instant::now();
    let mut done = 0;
    while !trainer.is_finished() && stop_after.is_none_or(|n| done < n) {
        let log = trainer.step()?;
        done += 1;
        if log.epoch % cfg.train.checkpoint_every == 0 {
            checkpoint::save(&state_path, &hash, trainer.state())?;
            eprintln!(
                "run {run}: epoch {} validation {:.5} (best {:.5} at {}) {:.1}s",
                log.epoch,
                log.validation_query_mae,
                trainer.state().best_validation,
                trainer.state().best_epoch,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    let state = trainer.state();
    checkpoint::save(&state_path, &hash, state)?;
    write_log_csv(&dir.join(LOG), &state.log)?;
    if !trainer.is_finished() {
        eprintln!("run {run}: stopped at meta-epoch {}; continue with --resume", state.epoch);
        return Ok(());
    }
    checkpoint::save(&dir.join(BEST), &hash, &state.best_model)?;
    checkpoint::save(&dir.join(FINAL), &hash, &state.model)?;
    eprintln!(
        "run {run}: finished after {} meta-epochs{} (best {}), {:.1}s",
        state.epoch,
        if state.stopped_early { ", early stop" } else { "" },
        state.best_epoch,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn load_checkpoint<T: DeserializeOwned>(cfg: &RunConfig, run: usize) -> Result<T> {
    let path = cfg.run_dir(run).join(BEST);
    if !path.exists() {
        anyhow::bail!(tsmeta::Error::Data(format!(
            "{} not found; run `tsmeta train` with this config first",
            path.display()
        )));
    }
    Ok(checkpoint::load(&path, Some(&cfg.train_hash()))
        .with_context(|| format!("loading {}", path.display()))?
        .payload)
}
