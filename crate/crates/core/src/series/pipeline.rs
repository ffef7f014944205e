use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{
    generate_meta_windows, preprocess, rolling_window, Imputation, LabeledWindow, LongSeries, MetaWindow,
    PreprocessParams, WindowSpec,
};

/// Windows and meta-windows of one split, series in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitData {
    pub windows: Vec<LabeledWindow>,
    pub meta_windows: Vec<MetaWindow>,
    pub series: Vec<SeriesCounts>,
}

/// Per-series window bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCounts {
    pub series_id: String,
    pub length: usize,
    pub windows: usize,
    pub meta_windows: usize,
    /// Trailing windows dropped by the meta-window grouping.
    pub discarded: usize,
}

impl SplitData {
    /// Meta-windows of each series, in order.
    pub fn meta_windows_by_series(&self) -> Vec<&[MetaWindow]> {
        let mut out = Vec::new();
        let mut start = 0;
        for s in &self.series {
            out.push(&self.meta_windows[start..start + s.meta_windows]);
            start += s.meta_windows;
        }
        out
    }
}

/// The five-way data group: training / validation windows for supervised
/// baselines and meta-training / meta-validation / meta-testing meta-windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub params: PreprocessParams,
    pub spec: WindowSpec,
    pub meta_window_len: usize,
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
}

fn split_data(series: &[LongSeries], params: &PreprocessParams, spec: WindowSpec, l: usize) -> Result<SplitData> {
    let mut out = SplitData::default();
    for raw in series {
        let s = preprocess(raw, params)?;
        let windows = rolling_window(&s, spec)?;
        let mws = generate_meta_windows(&windows, l, &s.id)?;
        out.series.push(SeriesCounts {
            series_id: s.id.clone(),
            length: s.len(),
            windows: windows.len(),
            meta_windows: mws.len(),
            discarded: windows.len() - mws.len() * l,
        });
        out.windows.extend(windows);
        out.meta_windows.extend(mws);
    }
    Ok(out)
}

/// Fits preprocessing on `train`, then preprocesses, windows and groups
/// every split. `imputation` defaults to interpolation for every channel;
/// the target is zero-filled.
pub fn build_dataset(
    train: &[LongSeries],
    validation: &[LongSeries],
    test: &[LongSeries],
    spec: WindowSpec,
    meta_window_len: usize,
    imputation: Option<Vec<Imputation>>,
) -> Result<Dataset> {
    let c = train.first().map_or(0, |s| s.num_channels());
    let imputation = imputation.unwrap_or_else(|| vec![Imputation::Interpolate; c]);
    let params = PreprocessParams::fit(train, imputation, Imputation::Zero)?;
    Ok(Dataset {
        train: split_data(train, &params, spec, meta_window_len)?,
        validation: split_data(validation, &params, spec, meta_window_len)?,
        test: split_data(test, &params, spec, meta_window_len)?,
        params,
        spec,
        meta_window_len,
    })
}
