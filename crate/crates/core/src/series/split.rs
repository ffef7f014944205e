use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{LongSeries, Split};

/// Target fractions of whole series for (train, validation, test).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

/// Assigns whole series to train/validation/test.
///
/// Without a manifest, validation and test each get `round(fraction·M)`
/// series (at least one), the remainder goes to train, and series are taken
/// in input order. A manifest (`series_id → split`) overrides this and must
/// cover every series.
pub fn split_series(
    all: Vec<LongSeries>,
    fractions: SplitFractions,
    manifest: Option<&BTreeMap<String, Split>>,
) -> Result<(Vec<LongSeries>, Vec<LongSeries>, Vec<LongSeries>)> {
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    let assign = |mut s: LongSeries, split: Split, out: &mut (Vec<_>, Vec<_>, Vec<_>)| {
        s.split = split;
        match split {
            Split::Train => out.0.push(s),
            Split::Validation => out.1.push(s),
            Split::Test => out.2.push(s),
        }
    };
    if let Some(manifest) = manifest {
        for s in all {
            let split = *manifest
                .get(&s.id)
                .ok_or_else(|| Error::Data(format!("series '{}' missing from split manifest", s.id)))?;
            assign(s, split, &mut out);
        }
        return Ok(out);
    }
    let m = all.len();
    if m < 3 {
        return Err(Error::Data(format!(
            "need at least 3 series to split without a manifest, got {m}"
        )));
    }
    let val = ((fractions.validation * m as f64).round() as usize).max(1);
    let test = ((fractions.test * m as f64).round() as usize).max(1);
    if val + test >= m {
        return Err(Error::Data(format!("split fractions leave no training series out of {m}")));
    }
    let train = m - val - test;
    for (i, s) in all.into_iter().enumerate() {
        let split = if i < train {
            Split::Train
        } else if i < train + val {
            Split::Validation
        } else {
            Split::Test
        };
        assign(s, split, &mut out);
    }
    Ok(out)
}

/// Reads a two-column CSV manifest `series_id,split` (header optional).
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, Split>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?;
    let mut map = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.display().to_string(),
            source,
        })?;
        if rec.len() != 2 {
            return Err(Error::Data(format!("manifest line {}: expected 2 fields", i + 1)));
        }
        if i == 0 && rec[1].parse::<Split>().is_err() {
            continue;
        }
        map.insert(rec[0].to_string(), rec[1].parse()?);
    }
    Ok(map)
}
