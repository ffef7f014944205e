use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{summarize, MetaWindow};

use super::MmamlModel;

/// Euclidean distances between per-split mean embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitDistances {
    pub train_test: f64,
    pub train_validation: f64,
    pub test_validation: f64,
}

fn mean(split: &str, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::Data(format!("no embeddings for the {split} split")))?;
    let mut m = vec![0.0; first.len()];
    for p in points {
        if p.len() != m.len() {
            return Err(Error::Shape(format!("embeddings of lengths {} and {}", m.len(), p.len())));
        }
        m.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|a| *a /= points.len() as f64);
    Ok(m)
}

fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("embeddings of lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

pub fn split_similarity(train: &[Vec<f64>], validation: &[Vec<f64>], test: &[Vec<f64>]) -> Result<SplitDistances> {
    let (tr, va, te) = (mean("train", train)?, mean("validation", validation)?, mean("test", test)?);
    Ok(SplitDistances {
        train_test: distance(&tr, &te)?,
        train_validation: distance(&tr, &va)?,
        test_validation: distance(&te, &va)?,
    })
}

/// Mean embedding `μ` of a meta-window.
pub fn embed(model: &MmamlModel, mw: &MetaWindow) -> Result<Vec<f64>> {
    model.check_compatible(mw)?;
    Ok(model.modulation.encode_traced(&summarize(mw), None)?.encoding.mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub series_id: String,
    pub t_index: usize,
    pub z: Vec<f64>,
}

/// Writes `series_id,t_index,z0,…` rows.
pub fn write_embeddings_csv(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.z.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["series_id".to_string(), "t_index".to_string()];
    header.extend((0..dim).map(|d| format!("z{d}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        if r.z.len() != dim {
            return Err(Error::Shape(format!("embedding of length {}, expected {dim}", r.z.len())));
        }
        let mut rec = vec![r.series_id.clone(), r.t_index.to_string()];
        rec.extend(r.z.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
