//! `preprocess` and the artifact loaders used by later stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tsmeta::series::{
    autocorrelation, build_dataset, preprocess as apply_params, read_manifest, read_meta_windows, read_series_csv,
    read_series_dir, split_series, write_meta_windows, LabeledWindow, LongSeries, MetaWindow, MetaWindowSet,
    PreprocessParams, SeriesCounts, SplitData, SplitFractions, StoreHeader,
};

use crate::config::RunConfig;

pub const MAX_ACF_LAG: usize = 100;

/// Artifact file names, one per member of the five-set group plus the raw
/// test windows.
pub const TRAIN_WINDOWS: &str = "train.windows.tsmw";
pub const VALIDATION_WINDOWS: &str = "validation.windows.tsmw";
pub const TEST_WINDOWS: &str = "test.windows.tsmw";
pub const META_TRAIN: &str = "meta_train.tsmw";
pub const META_VALIDATION: &str = "meta_validation.tsmw";
pub const META_TEST: &str = "meta_test.tsmw";

#[derive(Serialize)]
struct Report<'a> {
    config_hash: String,
    target: &'a str,
    channels: &'a [String],
    window_size: usize,
    step_size: usize,
    meta_window_len: usize,
    params: &'a PreprocessParams,
    splits: BTreeMap<&'static str, &'a [SeriesCounts]>,
}

#[derive(Serialize)]
struct AcfRow<'a> {
    split: &'static str,
    series_id: &'a str,
    lag: usize,
    acf: f64,
}

fn read_all(cfg: &RunConfig) -> Result<(Vec<LongSeries>, Vec<String>)> {
    let opts = cfg.data.csv_options();
    if cfg.data.files.is_empty() {
        let dir = cfg.resolve(cfg.data.dir.as_deref().expect("validated"));
        return Ok(read_series_dir(&dir, &opts)?);
    }
    let mut all = Vec::new();
    let mut names: Option<Vec<String>> = None;
    for f in &cfg.data.files {
        let (s, n) = read_series_csv(&cfg.resolve(f), &opts)?;
        match &names {
            Some(first) if *first != n => {
                bail!(tsmeta::Error::Data(format!(
                    "{}: channel columns differ from the first file",
                    f.display()
                )))
            }
            _ => names = Some(n),
        }
        all.push(s);
    }
    Ok((all, names.unwrap_or_default()))
}

/// Window-level set: every labeled window stored as a meta-window of length 1.
fn window_set(cfg: &RunConfig, channels: usize, hash: &str, split: &SplitData) -> Result<MetaWindowSet> {
    let mut mws = Vec::with_capacity(split.windows.len());
    let mut rest: &[LabeledWindow] = &split.windows;
    for s in &split.series {
        let (mine, tail) = rest.split_at(s.windows);
        rest = tail;
        for (i, w) in mine.iter().enumerate() {
            mws.push(MetaWindow::new(vec![w.clone()], s.series_id.clone(), i)?);
        }
    }
    Ok(MetaWindowSet {
        header: header(cfg, channels, 1, hash),
        meta_windows: mws,
    })
}

fn header(cfg: &RunConfig, channels: usize, l: usize, hash: &str) -> StoreHeader {
    StoreHeader {
        window_size: cfg.window.size,
        step_size: cfg.window.step,
        meta_window_len: l,
        channels,
        config_hash: hash.to_string(),
    }
}

/// Builds every artifact in memory first, so a failure leaves no partial
/// output behind.
pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let (all, names) = read_all(cfg)?;
    let manifest = if !cfg.data.splits.is_empty() {
        Some(cfg.data.splits.clone())
    } else if let Some(p) = &cfg.data.manifest {
        Some(read_manifest(&cfg.resolve(p))?)
    } else {
        None
    };
    let (train, validation, test) = split_series(all, SplitFractions::default(), manifest.as_ref())?;
    if train.is_empty() || validation.is_empty() || test.is_empty() {
        bail!(tsmeta::Error::Data(
            "every split needs at least one series (train, validation, test)".into()
        ));
    }
    let spec = cfg.window.spec()?;
    let d = build_dataset(
        &train,
        &validation,
        &test,
        spec,
        cfg.window.meta_window_len,
        Some(cfg.data.imputation_for(&names)),
    )?;
    let hash = cfg.data_hash();
    let c = names.len();
    let l = cfg.window.meta_window_len;
    let mut files: Vec<(&str, MetaWindowSet)> = Vec::new();
    for (name, split) in [(TRAIN_WINDOWS, &d.train), (VALIDATION_WINDOWS, &d.validation), (TEST_WINDOWS, &d.test)] {
        files.push((name, window_set(cfg, c, &hash, split)?));
    }
    for (name, split) in [(META_TRAIN, &d.train), (META_VALIDATION, &d.validation), (META_TEST, &d.test)] {
        files.push((
            name,
            MetaWindowSet {
                header: header(cfg, c, l, &hash),
                meta_windows: split.meta_windows.clone(),
            },
        ));
    }

    let mut acf = Vec::new();
    for (split, series) in [("train", &train), ("validation", &validation), ("test", &test)] {
        for raw in series.iter() {
            let s = apply_params(raw, &d.params)?;
            let max_lag = MAX_ACF_LAG.min(s.len() - 1);
            // A constant target has no defined autocorrelation; report NaN.
            let r = autocorrelation(&s.target, max_lag).unwrap_or_else(|_| vec![f64::NAN; max_lag + 1]);
            for (lag, v) in r.into_iter().enumerate() {
                acf.push((split, raw.id.clone(), lag, v));
            }
        }
    }

    let report = Report {
        config_hash: hash.clone(),
        target: &cfg.data.target,
        channels: &names,
        window_size: cfg.window.size,
        step_size: cfg.window.step,
        meta_window_len: l,
        params: &d.params,
        splits: BTreeMap::from([
            ("train", d.train.series.as_slice()),
            ("validation", d.validation.series.as_slice()),
            ("test", d.test.series.as_slice()),
        ]),
    };

    let out = cfg.data_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (name, set) in &files {
        write_meta_windows(&out.join(name), set)?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(out.join("preprocess.json"), json + "\n").context("writing preprocess.json")?;
    let mut w = csv::Writer::from_path(out.join("acf.csv")).context("writing acf.csv")?;
    for (split, id, lag, v) in &acf {
        w.serialize(AcfRow {
            split,
            series_id: id,
            lag: *lag,
            acf: *v,
        })?;
    }
    w.flush()?;
    cfg.echo(&out)?;

    for (split, sd) in [("train", &d.train), ("validation", &d.validation), ("test", &d.test)] {
        let (w, m): (usize, usize) = sd.series.iter().fold((0, 0), |a, s| (a.0 + s.windows, a.1 + s.meta_windows));
        eprintln!(
            "{split:>10}: {} series, {w} windows, {m} meta-windows",
            sd.series.len()
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Loads one artifact, refusing files produced under another data config.
pub fn load_set(cfg: &RunConfig, name: &str) -> Result<MetaWindowSet> {
    let path: PathBuf = cfg.data_dir().join(name);
    if !path.exists() {
        bail!(tsmeta::Error::Data(format!(
            "{} not found; run `tsmeta preprocess` with this config first",
            path.display()
        )));
    }
    let set = read_meta_windows(&path)?;
    check_hash(&path, &cfg.data_hash(), &set.header.config_hash)?;
    Ok(set)
}

pub fn check_hash(path: &Path, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(tsmeta::Error::HashMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        })
        .with_context(|| format!("{} was produced by a different configuration", path.display()));
    }
    Ok(())
}

/// Flattens a window-level set back into windows.
pub fn windows(set: &MetaWindowSet) -> Vec<LabeledWindow> {
    set.meta_windows.iter().flat_map(|m| m.windows().iter().cloned()).collect()
}
