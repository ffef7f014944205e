use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EvalResult;

/// One cell of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub gradient_steps: usize,
    pub horizon: usize,
    pub mae: f64,
    pub ci95: f64,
}

/// Rows for horizon 1 (the first query meta-window) and horizon `H` (the
/// mean over query meta-windows `1..=H`).
pub fn result_rows(dataset: &str, r: &EvalResult) -> Vec<ResultRow> {
    let row = |horizon, mae, ci95| ResultRow {
        model: r.model.clone(),
        dataset: dataset.to_string(),
        gradient_steps: r.gradient_steps,
        horizon,
        mae,
        ci95,
    };
    let mut rows = vec![row(1, r.horizon_mae[0], r.horizon_ci95[0])];
    if r.horizon > 1 {
        rows.push(row(r.horizon, r.aggregate_mae, r.ci95_half_width));
    }
    rows
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

#[derive(Serialize)]
struct CurveRow<'a> {
    model: &'a str,
    dataset: &'a str,
    gradient_steps: usize,
    horizon: usize,
    mae: f64,
    ci95: f64,
}

/// Per-horizon MAE curves of every result.
pub fn write_curves_csv(path: &Path, dataset: &str, results: &[EvalResult]) -> Result<()> {
    let rows: Vec<CurveRow> = results
        .iter()
        .flat_map(|r| {
            (0..r.horizon).map(move |h| CurveRow {
                model: &r.model,
                dataset,
                gradient_steps: r.gradient_steps,
                horizon: h + 1,
                mae: r.horizon_mae[h],
                ci95: r.horizon_ci95[h],
            })
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    model: &'a str,
    run: usize,
    seed: u64,
    series_id: &'a str,
    support_t: usize,
    horizon: usize,
    window: usize,
    abs_error: f64,
}

/// Raw per-window absolute errors of every run.
pub fn write_errors_csv(path: &Path, result: &EvalResult) -> Result<()> {
    let rows: Vec<ErrorRow> = result
        .runs
        .iter()
        .enumerate()
        .flat_map(|(run, r)| {
            r.errors.iter().map(move |e| ErrorRow {
                model: &result.model,
                run,
                seed: r.seed,
                series_id: &e.series_id,
                support_t: e.support_t,
                horizon: e.horizon,
                window: e.window,
                abs_error: e.abs_error,
            })
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Best,
    Second,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub model: String,
    pub dataset: String,
    pub gradient_steps: usize,
    pub horizon: usize,
    pub mae: f64,
    pub ci95: f64,
    pub flag: Flag,
}

/// Flags the lowest and second-lowest MAE within each
/// `(dataset, gradient_steps, horizon)` column. Every model tied at the
/// minimum is `Best`; the next distinct value is `Second`. A column with a
/// single model is left unflagged. Output is sorted by column, then model.
pub fn rank_results(rows: &[ResultRow]) -> Vec<RankedRow> {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset.clone(), r.gradient_steps, r.horizon))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(rows.len());
    for mut group in groups.into_values() {
        group.sort_by(|a, b| a.model.cmp(&b.model));
        let mut distinct: Vec<f64> = group.iter().map(|r| r.mae).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for r in group.iter() {
            let flag = if group.len() < 2 {
                Flag::None
            } else if r.mae == distinct[0] {
                Flag::Best
            } else if distinct.get(1) == Some(&r.mae) {
                Flag::Second
            } else {
                Flag::None
            };
            out.push(RankedRow {
                model: r.model.clone(),
                dataset: r.dataset.clone(),
                gradient_steps: r.gradient_steps,
                horizon: r.horizon,
                mae: r.mae,
                ci95: r.ci95,
                flag,
            });
        }
    }
    out
}

pub fn write_ranked_csv(path: &Path, rows: &[RankedRow]) -> Result<()> {
    write_rows(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{RunErrors, WindowError};

    fn row(model: &str, horizon: usize, mae: f64) -> ResultRow {
        ResultRow {
            model: model.into(),
            dataset: "d".into(),
            gradient_steps: 1,
            horizon,
            mae,
            ci95: 0.0,
        }
    }

    fn flags(ranked: &[RankedRow]) -> Vec<(&str, Flag)> {
        ranked.iter().map(|r| (r.model.as_str(), r.flag)).collect()
    }

    #[test]
    fn best_and_second_per_column() {
        let rows = vec![row("maml", 1, 0.2), row("mmaml", 1, 0.1), row("mean", 1, 0.5), row("maml", 10, 0.3)];
        let ranked = rank_results(&rows);
        assert_eq!(
            flags(&ranked),
            vec![("maml", Flag::Second), ("mean", Flag::None), ("mmaml", Flag::Best), ("maml", Flag::None)]
        );
    }

    #[test]
    fn ties_share_the_best_flag() {
        let ranked = rank_results(&[row("b", 1, 0.1), row("a", 1, 0.1), row("c", 1, 0.2)]);
        assert_eq!(flags(&ranked), vec![("a", Flag::Best), ("b", Flag::Best), ("c", Flag::Second)]);
    }

    fn result() -> EvalResult {
        let errors = (1..=3)
            .flat_map(|h| {
                (0..2).map(move |w| WindowError {
                    series_id: "s".into(),
                    support_t: 0,
                    horizon: h,
                    window: w,
                    abs_error: h as f64 * 0.1 + w as f64 * 0.01,
                })
            })
            .collect();
        EvalResult::from_runs("maml", "abc", 1, 3, vec![RunErrors { seed: 0, errors }]).unwrap()
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let r = result();
        let rows = result_rows("synth", &r);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].horizon, 1);
        assert!((rows[0].mae - 0.105).abs() < 1e-12);
        assert_eq!(rows[1].horizon, 3);
        assert!((rows[1].mae - 0.205).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("model,dataset,gradient_steps,horizon,mae,ci95\n"));
        assert_eq!(read_results_csv(&p).unwrap(), rows);
    }

    #[test]
    fn curves_and_errors_have_one_row_each() {
        let r = result();
        let dir = tempfile::tempdir().unwrap();
        let (c, e) = (dir.path().join("c.csv"), dir.path().join("e.csv"));
        write_curves_csv(&c, "synth", std::slice::from_ref(&r)).unwrap();
        write_errors_csv(&e, &r).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap().lines().count(), 4);
        let errs = std::fs::read_to_string(&e).unwrap();
        assert_eq!(errs.lines().count(), 7);
        assert!(errs.starts_with("model,run,seed,series_id,support_t,horizon,window,abs_error\n"));
    }
}
