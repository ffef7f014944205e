use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::net::Tensor;

use super::{LongSeries, Split};

/// Column selection for CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Name of the target column.
    pub target: String,
    /// Columns ignored entirely (timestamps, identifiers, ...).
    pub drop: Vec<String>,
    /// Explicit channel columns, in this order. Overrides `drop`.
    pub channels: Option<Vec<String>>,
}

const MISSING: [&str; 5] = ["", "na", "nan", "null", "none"];

fn parse_cell(cell: &str, path: &Path, line: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|_| {
        Error::Data(format!(
            "{}:{line}: column '{column}' has non-numeric value '{cell}'",
            path.display()
        ))
    })
}

/// Reads one long series from a CSV file with a header row. Every column
/// other than the target and the dropped ones becomes an input channel, in
/// file order. Missing cells (`""`, `NA`, `NaN`, `null`) become NaN and are
/// left for imputation. Returns the series (id = file stem, split = train)
/// and the channel names.
pub fn read_series_csv(path: &Path, opts: &CsvOptions) -> Result<(LongSeries, Vec<String>)> {
    let csv_err = |source| Error::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let target_col = headers
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::Data(format!("{}: missing target column '{}'", path.display(), opts.target)))?;
    let channel_cols: Vec<usize> = match &opts.channels {
        Some(names) => names
            .iter()
            .map(|n| {
                headers
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::Data(format!("{}: missing channel column '{n}'", path.display())))
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != target_col && !opts.drop.contains(&headers[i]))
            .collect(),
    };
    if channel_cols.is_empty() {
        return Err(Error::Data(format!("{}: no input channels", path.display())));
    }
    let mut channels = Vec::new();
    let mut target = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = row + 2;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                rec.len()
            )));
        }
        target.push(parse_cell(&rec[target_col], path, line, &headers[target_col])?);
        for &c in &channel_cols {
            channels.push(parse_cell(&rec[c], path, line, &headers[c])?);
        }
    }
    if target.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let names = channel_cols.iter().map(|&c| headers[c].clone()).collect();
    let channels = Tensor::from_vec(&[target.len(), channel_cols.len()], channels)?;
    Ok((LongSeries::new(id, channels, target, Split::Train)?, names))
}

/// Reads every `*.csv` in `dir`, sorted by file name. All files must share
/// the same channel columns.
pub fn read_series_dir(dir: &Path, opts: &CsvOptions) -> Result<(Vec<LongSeries>, Vec<String>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no CSV files in {}", dir.display())));
    }
    let mut all = Vec::with_capacity(paths.len());
    let mut names: Option<Vec<String>> = None;
    for p in &paths {
        let (s, n) = read_series_csv(p, opts)?;
        match &names {
            Some(prev) if *prev != n => {
                return Err(Error::Data(format!(
                    "{}: channel columns differ from the first file",
                    p.display()
                )))
            }
            None => names = Some(n),
            _ => {}
        }
        all.push(s);
    }
    Ok((all, names.unwrap_or_default()))
}
