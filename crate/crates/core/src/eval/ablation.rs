use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EvalResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    GradientSteps,
    VraeWeight,
    Horizon,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::GradientSteps => "gradient_steps",
            AblationAxis::VraeWeight => "vrae_weight",
            AblationAxis::Horizon => "horizon",
        }
    }
}

/// One long-format row: the MAE at `horizon` for one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub value: f64,
    pub horizon: usize,
    pub mae: f64,
    pub ci95: f64,
}

/// Runs `evaluate` for each value with everything else held fixed and
/// flattens the per-horizon curves.
pub fn ablation_sweep(
    axis: AblationAxis,
    values: &[f64],
    mut evaluate: impl FnMut(f64) -> Result<EvalResult>,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &v in values {
        let r = evaluate(v)?;
        for h in 0..r.horizon {
            rows.push(AblationRow {
                axis,
                value: v,
                horizon: h + 1,
                mae: r.horizon_mae[h],
                ci95: r.horizon_ci95[h],
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{meta_test, MetaTestConfig, TargetMean};
    use crate::net::Tensor;
    use crate::series::{LabeledWindow, MetaWindow};

    #[test]
    fn one_value_gives_one_row_per_horizon() {
        let test: Vec<MetaWindow> = (0..6)
            .map(|t| {
                let w = LabeledWindow {
                    inputs: Tensor::zeros(&[1, 1]),
                    label: t as f64,
                    origin_index: t,
                };
                MetaWindow::new(vec![w], "a", t).unwrap()
            })
            .collect();
        let rows = ablation_sweep(AblationAxis::GradientSteps, &[1.0], |v| {
            let cfg = MetaTestConfig {
                horizon: 3,
                gradient_steps: v as usize,
                runs: 1,
                ..MetaTestConfig::default()
            };
            meta_test(&TargetMean, &test, &cfg, "")
        })
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.horizon).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(rows[0].mae, 1.0);
        assert_eq!(rows[2].mae, 3.0);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_ablation_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("axis,value,horizon,mae,ci95\ngradient_steps,1.0,1,1.0,0.0\n"));
    }
}
