//! Sliding meta-testing protocol, baselines, result tables and the synthetic
//! task family.
//!
//! For every test series with `M` meta-windows, adaptation points are
//! `t = 0, s, 2s, …` with `t + H ≤ M − 1`, where `s` is the meta-testing
//! step (`⌊M/100⌋`, at least 1). At each point the model adapts on `𝒯_t`
//! from the pristine trained parameters and is scored on
//! `𝒯_{t+1} … 𝒯_{t+H}`.

mod ablation;
mod baselines;
mod report;
mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maml::inner_adapt_steps;
use crate::mmaml::{mmaml_adapt_and_predict, MmamlConfig, MmamlModel};
use crate::net::{Params, TaskNetwork};
use crate::seed;
use crate::series::MetaWindow;

pub use ablation::{ablation_sweep, write_ablation_csv, AblationAxis, AblationRow};
pub use baselines::{
    finetune_baseline, pretrain, select_finetune, target_mean_baseline, FinetuneSelection, PretrainConfig,
    PretrainLog, PretrainOutcome, FINETUNE_LR_GRID, WEIGHT_DECAY_GRID,
};
pub use report::{
    rank_results, read_results_csv, result_rows, write_curves_csv, write_errors_csv, write_ranked_csv,
    write_results_csv, Flag, RankedRow, ResultRow,
};
pub use synth::{synth_task_family, SynthConfig, SynthFamily, SynthSeriesParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaTestConfig {
    /// Number of query meta-windows after each support.
    pub horizon: usize,
    /// Fixed stride between adaptation points; `None` uses `⌊M/100⌋` per
    /// series, floored at 1.
    pub meta_test_step: Option<usize>,
    pub gradient_steps: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for MetaTestConfig {
    fn default() -> Self {
        MetaTestConfig {
            horizon: 10,
            meta_test_step: None,
            gradient_steps: 1,
            runs: 5,
            seed: 0,
        }
    }
}

impl MetaTestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.gradient_steps == 0 || self.runs == 0 || self.meta_test_step == Some(0) {
            return Err(Error::Config(
                "horizon, gradient_steps, runs and meta_test_step must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Stride for a series with `m` meta-windows.
    pub fn step_for(&self, m: usize) -> usize {
        self.meta_test_step.unwrap_or(m / 100).max(1)
    }
}

/// Support indices `t = 0, step, …` whose `H` following meta-windows all
/// exist.
pub fn adaptation_points(m: usize, step: usize, horizon: usize) -> Vec<usize> {
    if m <= horizon {
        return Vec::new();
    }
    (0..m - horizon).step_by(step.max(1)).collect()
}

/// Closed form of `adaptation_points(m, step, horizon).len()`.
pub fn adaptation_point_count(m: usize, step: usize, horizon: usize) -> usize {
    if m <= horizon {
        0
    } else {
        (m - 1 - horizon) / step.max(1) + 1
    }
}

/// A trained model (or baseline) under meta-testing.
///
/// `predict` takes `&self`, so every adaptation point starts from the same
/// parameters, and must be deterministic.
pub trait Adapter: Sync {
    fn tag(&self) -> String;

    /// Predictions for every window of every query after adapting on
    /// `support` with `gradient_steps` steps.
    fn predict(&self, support: &MetaWindow, queries: &[&MetaWindow], gradient_steps: usize) -> Result<Vec<Vec<f64>>>;

    /// Fingerprint of the parameters used for adaptation.
    fn fingerprint(&self) -> String;
}

fn predict_with_head(net: &TaskNetwork, head: &crate::net::Head, queries: &[&MetaWindow]) -> Result<Vec<Vec<f64>>> {
    queries
        .iter()
        .map(|q| {
            q.windows()
                .iter()
                .map(|w| Ok(head.predict(None, &net.features(&w.inputs)?)))
                .collect()
        })
        .collect()
}

/// Meta-trained task network; head-only adaptation with rate `inner_lr`.
#[derive(Debug, Clone)]
pub struct MamlAdapter {
    pub net: TaskNetwork,
    pub inner_lr: f64,
}

impl Adapter for MamlAdapter {
    fn tag(&self) -> String {
        "maml".into()
    }

    fn predict(&self, support: &MetaWindow, queries: &[&MetaWindow], steps: usize) -> Result<Vec<Vec<f64>>> {
        let head = inner_adapt_steps(&self.net, support, self.inner_lr, steps, None)?.theta_prime;
        predict_with_head(&self.net, &head, queries)
    }

    fn fingerprint(&self) -> String {
        self.net.fingerprint()
    }
}

#[derive(Debug, Clone)]
pub struct MmamlAdapter {
    pub model: MmamlModel,
    pub cfg: MmamlConfig,
}

impl Adapter for MmamlAdapter {
    fn tag(&self) -> String {
        "mmaml".into()
    }

    fn predict(&self, support: &MetaWindow, queries: &[&MetaWindow], steps: usize) -> Result<Vec<Vec<f64>>> {
        let mut cfg = self.cfg.clone();
        cfg.maml.inner_steps = steps;
        Ok(mmaml_adapt_and_predict(&self.model, support, queries, &cfg)?.predictions)
    }

    fn fingerprint(&self) -> String {
        self.model.fingerprint()
    }
}

/// Pretrained network fine-tuned on the support (head only, with weight
/// decay).
#[derive(Debug, Clone)]
pub struct FinetuneAdapter {
    pub net: TaskNetwork,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Adapter for FinetuneAdapter {
    fn tag(&self) -> String {
        "lstm-finetune".into()
    }

    fn predict(&self, support: &MetaWindow, queries: &[&MetaWindow], steps: usize) -> Result<Vec<Vec<f64>>> {
        let head = finetune_baseline(&self.net, support, self.lr, steps, self.weight_decay)?.theta_prime;
        predict_with_head(&self.net, &head, queries)
    }

    fn fingerprint(&self) -> String {
        self.net.fingerprint()
    }
}

/// Predicts the support label mean everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct TargetMean;

impl Adapter for TargetMean {
    fn tag(&self) -> String {
        "target-mean".into()
    }

    fn predict(&self, support: &MetaWindow, queries: &[&MetaWindow], _steps: usize) -> Result<Vec<Vec<f64>>> {
        let y = target_mean_baseline(support)?;
        Ok(queries.iter().map(|q| vec![y; q.len()]).collect())
    }

    fn fingerprint(&self) -> String {
        String::new()
    }
}

/// Absolute error of one query window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowError {
    pub series_id: String,
    /// `t` of the support meta-window.
    pub support_t: usize,
    /// 1-based distance of the query meta-window from the support.
    pub horizon: usize,
    /// Window index within the query meta-window.
    pub window: usize,
    pub abs_error: f64,
}

/// Raw errors of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunErrors {
    pub seed: u64,
    pub errors: Vec<WindowError>,
}

impl RunErrors {
    pub fn aggregate(&self) -> f64 {
        self.errors.iter().map(|e| e.abs_error).sum::<f64>() / self.errors.len() as f64
    }

    /// Mean error at each horizon `1..=horizon`.
    pub fn horizon_mae(&self, horizon: usize) -> Vec<f64> {
        let mut sum = vec![0.0; horizon];
        let mut n = vec![0usize; horizon];
        for e in &self.errors {
            sum[e.horizon - 1] += e.abs_error;
            n[e.horizon - 1] += 1;
        }
        sum.iter().zip(&n).map(|(s, &c)| s / c as f64).collect()
    }

    /// Number of distinct adaptation points.
    pub fn adaptation_points(&self) -> usize {
        let mut keys: Vec<(&str, usize)> = self.errors.iter().map(|e| (e.series_id.as_str(), e.support_t)).collect();
        keys.dedup();
        keys.len()
    }
}

/// 95% normal-approximation half width `1.96·s/√n` (0 for one value).
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    1.96 * var.sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub config_hash: String,
    pub gradient_steps: usize,
    pub horizon: usize,
    /// Mean over runs of the per-horizon MAE, horizons `1..=H`.
    pub horizon_mae: Vec<f64>,
    pub horizon_ci95: Vec<f64>,
    /// Mean over runs of the MAE over all query windows of all adaptation
    /// points.
    pub aggregate_mae: f64,
    pub ci95_half_width: f64,
    pub run_count: usize,
    pub runs: Vec<RunErrors>,
}

impl EvalResult {
    pub fn from_runs(
        model: impl Into<String>,
        config_hash: impl Into<String>,
        gradient_steps: usize,
        horizon: usize,
        runs: Vec<RunErrors>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("evaluation runs"));
        }
        let aggregates: Vec<f64> = runs.iter().map(RunErrors::aggregate).collect();
        let per_run: Vec<Vec<f64>> = runs.iter().map(|r| r.horizon_mae(horizon)).collect();
        let n = runs.len() as f64;
        let horizon_mae = (0..horizon).map(|h| per_run.iter().map(|r| r[h]).sum::<f64>() / n).collect();
        let horizon_ci95 = (0..horizon)
            .map(|h| ci95_half_width(&per_run.iter().map(|r| r[h]).collect::<Vec<_>>()))
            .collect();
        Ok(EvalResult {
            model: model.into(),
            config_hash: config_hash.into(),
            gradient_steps,
            horizon,
            horizon_mae,
            horizon_ci95,
            aggregate_mae: aggregates.iter().sum::<f64>() / n,
            ci95_half_width: ci95_half_width(&aggregates),
            run_count: runs.len(),
            runs,
        })
    }
}

/// Groups meta-windows into consecutive runs of one series id.
pub fn group_by_series(mws: &[MetaWindow]) -> Vec<&[MetaWindow]> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < mws.len() {
        let id = mws[start].series_id();
        let end = mws[start..]
            .iter()
            .position(|m| m.series_id() != id)
            .map_or(mws.len(), |p| start + p);
        out.push(&mws[start..end]);
        start = end;
    }
    out
}

/// One pass of the protocol over `test` (ordered by series, then `t`).
pub fn meta_test_run<A: Adapter + ?Sized>(
    adapter: &A,
    test: &[MetaWindow],
    cfg: &MetaTestConfig,
    seed: u64,
) -> Result<RunErrors> {
    cfg.validate()?;
    let h = cfg.horizon;
    let groups = group_by_series(test);
    let points: Vec<(&[MetaWindow], usize)> = groups
        .iter()
        .flat_map(|g| adaptation_points(g.len(), cfg.step_for(g.len()), h).into_iter().map(move |t| (*g, t)))
        .collect();
    if points.is_empty() {
        return Err(Error::TooFewMetaWindows {
            required: h + 1,
            available: groups.iter().map(|g| g.len()).max().unwrap_or(0),
        });
    }
    let per_point = points
        .par_iter()
        .map(|&(g, t)| -> Result<Vec<WindowError>> {
            let queries: Vec<&MetaWindow> = g[t + 1..=t + h].iter().collect();
            let preds = adapter.predict(&g[t], &queries, cfg.gradient_steps)?;
            let mut errs = Vec::new();
            for (k, (q, p)) in queries.iter().zip(&preds).enumerate() {
                for (i, (w, y)) in q.windows().iter().zip(p).enumerate() {
                    errs.push(WindowError {
                        series_id: g[t].series_id().to_string(),
                        support_t: g[t].t_index(),
                        horizon: k + 1,
                        window: i,
                        abs_error: (y - w.label).abs(),
                    });
                }
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunErrors {
        seed,
        errors: per_point.into_iter().flatten().collect(),
    })
}

/// Evaluates a fixed adapter. Inference is deterministic, so the `runs`
/// repetitions share one pass and the CI is zero.
pub fn meta_test<A: Adapter + ?Sized>(
    adapter: &A,
    test: &[MetaWindow],
    cfg: &MetaTestConfig,
    config_hash: &str,
) -> Result<EvalResult> {
    let run = meta_test_run(adapter, test, cfg, cfg.seed)?;
    let runs = (0..cfg.runs as u64)
        .map(|r| RunErrors {
            seed: seed::derive(cfg.seed, "run", r),
            errors: run.errors.clone(),
        })
        .collect();
    EvalResult::from_runs(adapter.tag(), config_hash, cfg.gradient_steps, cfg.horizon, runs)
}

/// Evaluates `cfg.runs` independently built adapters; `build` receives the
/// run index and its derived seed (for example to re-run training).
pub fn meta_test_runs<A: Adapter>(
    test: &[MetaWindow],
    cfg: &MetaTestConfig,
    config_hash: &str,
    mut build: impl FnMut(usize, u64) -> Result<A>,
) -> Result<EvalResult> {
    let mut tag = String::new();
    let mut runs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let s = seed::derive(cfg.seed, "run", r as u64);
        let adapter = build(r, s)?;
        tag = adapter.tag();
        runs.push(meta_test_run(&adapter, test, cfg, s)?);
    }
    EvalResult::from_runs(tag, config_hash, cfg.gradient_steps, cfg.horizon, runs)
}
