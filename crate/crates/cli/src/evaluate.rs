//! `evaluate`: meta-test the trained models of every run.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tsmeta::eval::{
    ablation_sweep, meta_test_run, result_rows, select_finetune, write_ablation_csv, write_curves_csv,
    write_errors_csv, write_results_csv, AblationAxis, Adapter, EvalResult, FinetuneAdapter, FinetuneSelection,
    MamlAdapter, MmamlAdapter, TargetMean,
};
use tsmeta::mmaml::MmamlModel;
use tsmeta::net::TaskNetwork;
use tsmeta::series::MetaWindow;

use crate::config::{ModelKind, RunConfig};
use crate::data::{self, META_TEST, META_VALIDATION};
use crate::train::{load_checkpoint, run_seed, Marker};

enum Trained {
    Maml(Vec<TaskNetwork>),
    Mmaml(Vec<MmamlModel>),
    Finetune(Vec<TaskNetwork>),
    TargetMean,
}

#[derive(Serialize)]
struct Selection {
    run: usize,
    gradient_steps: usize,
    #[serde(flatten)]
    choice: FinetuneSelection,
}

#[derive(Serialize)]
struct Summary {
    gradient_steps: usize,
    eval_hash: String,
    aggregate_mae: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    model: &'static str,
    dataset: &'a str,
    data_hash: String,
    train_hash: String,
    runs: usize,
    results: Vec<Summary>,
    finetune_selection: Vec<Selection>,
}

struct Evaluator<'a> {
    cfg: &'a RunConfig,
    trained: Trained,
    test: Vec<MetaWindow>,
    validation: Vec<MetaWindow>,
    selections: Vec<Selection>,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, steps: usize) -> Result<EvalResult> {
        let cfg = self.cfg;
        let mut at = cfg.clone();
        at.eval.gradient_steps = steps;
        let mt = at.meta_test_config();
        let mut runs = Vec::with_capacity(cfg.eval.runs);
        for r in 0..cfg.eval.runs {
            let s = run_seed(cfg, r);
            let adapter: Box<dyn Adapter> = match &self.trained {
                Trained::Maml(nets) => Box::new(MamlAdapter {
                    net: nets[r].clone(),
                    inner_lr: cfg.maml.inner_lr,
                }),
                Trained::Mmaml(models) => Box::new(MmamlAdapter {
                    model: models[r].clone(),
                    cfg: cfg.mmaml_config(),
                }),
                Trained::Finetune(nets) => {
                    let choice = select_finetune(
                        &nets[r],
                        &self.validation,
                        &cfg.finetune.lr,
                        &cfg.finetune.weight_decay,
                        &mt,
                    )?;
                    self.selections.push(Selection {
                        run: r,
                        gradient_steps: steps,
                        choice,
                    });
                    Box::new(FinetuneAdapter {
                        net: nets[r].clone(),
                        lr: choice.lr,
                        weight_decay: choice.weight_decay,
                    })
                }
                Trained::TargetMean => Box::new(TargetMean),
            };
            runs.push(meta_test_run(adapter.as_ref(), &self.test, &mt, s)?);
        }
        Ok(EvalResult::from_runs(cfg.model.tag(), at.eval_hash(), steps, mt.horizon, runs)?)
    }
}

fn load_trained(cfg: &RunConfig) -> Result<Trained> {
    let n = cfg.eval.runs;
    Ok(match cfg.model {
        ModelKind::Maml => Trained::Maml((0..n).map(|r| load_checkpoint(cfg, r)).collect::<Result<_>>()?),
        ModelKind::Mmaml => Trained::Mmaml((0..n).map(|r| load_checkpoint(cfg, r)).collect::<Result<_>>()?),
        ModelKind::LstmFinetune => {
            Trained::Finetune((0..n).map(|r| load_checkpoint(cfg, r)).collect::<Result<_>>()?)
        }
        ModelKind::TargetMean => {
            for r in 0..n {
                load_checkpoint::<Marker>(cfg, r)?;
            }
            Trained::TargetMean
        }
    })
}

pub fn evaluate(cfg: &RunConfig, gradient_steps: &[usize], sweep: &[usize], errors: bool) -> Result<()> {
    let steps: Vec<usize> = if gradient_steps.is_empty() {
        vec![cfg.eval.gradient_steps]
    } else {
        gradient_steps.to_vec()
    };
    let test = data::load_set(cfg, META_TEST)?.meta_windows;
    let validation = if cfg.model == ModelKind::LstmFinetune {
        data::load_set(cfg, META_VALIDATION)?.meta_windows
    } else {
        Vec::new()
    };
    let mut ev = Evaluator {
        cfg,
        trained: load_trained(cfg)?,
        test,
        validation,
        selections: Vec::new(),
    };
    let results = steps.iter().map(|&k| ev.evaluate(k)).collect::<Result<Vec<_>>>()?;

    let out = cfg.eval_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.echo(&out)?;
    let rows: Vec<_> = results.iter().flat_map(|r| result_rows(&cfg.name, r)).collect();
    write_results_csv(&out.join("results.csv"), &rows)?;
    write_curves_csv(&out.join("curves.csv"), &cfg.name, &results)?;
    if errors {
        for r in &results {
            write_errors_csv(&out.join(format!("errors-k{}.csv", r.gradient_steps)), r)?;
        }
    }
    if !sweep.is_empty() {
        let values: Vec<f64> = sweep.iter().map(|&k| k as f64).collect();
        let rows = ablation_sweep(AblationAxis::GradientSteps, &values, |v| {
            ev.evaluate(v as usize).map_err(|e| match e.downcast::<tsmeta::Error>() {
                Ok(t) => t,
                Err(other) => tsmeta::Error::Data(format!("{other:#}")),
            })
        })?;
        write_ablation_csv(&out.join("ablation.csv"), &rows)?;
    }
    let sidecar = Sidecar {
        model: cfg.model.tag(),
        dataset: &cfg.name,
        data_hash: cfg.data_hash(),
        train_hash: cfg.train_hash(),
        runs: cfg.eval.runs,
        results: results
            .iter()
            .map(|r| Summary {
                gradient_steps: r.gradient_steps,
                eval_hash: r.config_hash.clone(),
                aggregate_mae: r.aggregate_mae,
                ci95: r.ci95_half_width,
            })
            .collect(),
        finetune_selection: ev.selections,
    };
    write_json(&out.join("eval.json"), &sidecar)?;
    for r in &results {
        eprintln!(
            "{} k={}: horizon-1 MAE {:.5} ± {:.5}, horizon-{} mean {:.5} ± {:.5}",
            r.model,
            r.gradient_steps,
            r.horizon_mae[0],
            r.horizon_ci95[0],
            r.horizon,
            r.aggregate_mae,
            r.ci95_half_width
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
