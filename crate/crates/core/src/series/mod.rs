//! Long series, labeled windows and meta-windows.
//!
//! A long multivariate series is cut by a rolling window into labeled
//! windows; consecutive labeled windows are grouped into meta-windows of a
//! fixed length `l`; two consecutive meta-windows of one series form a
//! virtual task (support, query).

mod acf;
mod csvio;
mod pipeline;
mod preprocess;
mod split;
mod store;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Tensor;

pub use acf::autocorrelation;
pub use csvio::{read_series_csv, read_series_dir, CsvOptions};
pub use pipeline::{build_dataset, Dataset, SeriesCounts, SplitData};
pub use preprocess::{impute, preprocess, Imputation, PreprocessParams};
pub use split::{read_manifest, split_series, SplitFractions};
pub use store::{read_meta_windows, write_meta_windows, MetaWindowSet, StoreHeader};
pub use window::{generate_meta_windows, rolling_window, summarize, virtual_tasks, window_count};

/// Which part of the data a long series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" | "meta-train" => Ok(Split::Train),
            "validation" | "val" | "meta-val" => Ok(Split::Validation),
            "test" | "meta-test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split '{other}'"))),
        }
    }
}

/// One long multivariate series with its target channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LongSeries {
    /// Shape `[L, C]`.
    pub channels: Tensor,
    pub target: Vec<f64>,
    pub id: String,
    pub split: Split,
}

impl LongSeries {
    pub fn new(id: impl Into<String>, channels: Tensor, target: Vec<f64>, split: Split) -> Result<Self> {
        let id = id.into();
        if channels.shape().len() != 2 {
            return Err(Error::Shape(format!("series '{id}': channels must be 2-D")));
        }
        if channels.rows() != target.len() {
            return Err(Error::Shape(format!(
                "series '{id}': {} channel rows but {} targets",
                channels.rows(),
                target.len()
            )));
        }
        if target.is_empty() || channels.cols() == 0 {
            return Err(Error::Data(format!("series '{id}' is empty")));
        }
        Ok(LongSeries {
            channels,
            target,
            id,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.channels.is_finite() && self.target.iter().all(|v| v.is_finite())
    }
}

/// Rolling-window geometry: window size `δ` and stride `k`, in time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_size: usize,
    pub step_size: usize,
}

impl WindowSpec {
    pub fn new(window_size: usize, step_size: usize) -> Result<Self> {
        if window_size == 0 || step_size == 0 {
            return Err(Error::Config("window and step size must be positive".into()));
        }
        Ok(WindowSpec {
            window_size,
            step_size,
        })
    }
}

/// Input window of shape `[δ, C]` and the target value right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub inputs: Tensor,
    pub label: f64,
    pub origin_index: usize,
}

impl LabeledWindow {
    pub fn window_size(&self) -> usize {
        self.inputs.rows()
    }

    pub fn num_channels(&self) -> usize {
        self.inputs.cols()
    }

    /// Time steps of the window, oldest first.
    pub fn steps(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.data().chunks_exact(self.num_channels())
    }
}

/// `l` consecutive labeled windows of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaWindow {
    windows: Vec<LabeledWindow>,
    series_id: String,
    t_index: usize,
}

impl MetaWindow {
    pub fn new(windows: Vec<LabeledWindow>, series_id: impl Into<String>, t_index: usize) -> Result<Self> {
        let series_id = series_id.into();
        let first = windows
            .first()
            .ok_or(Error::Empty("meta-window"))?;
        let shape = first.inputs.shape().to_vec();
        for pair in windows.windows(2) {
            if pair[1].origin_index <= pair[0].origin_index {
                return Err(Error::Data(format!(
                    "meta-window {series_id}/{t_index}: origins not strictly increasing"
                )));
            }
        }
        if windows.iter().any(|w| w.inputs.shape() != shape.as_slice() || !w.label.is_finite()) {
            return Err(Error::Data(format!(
                "meta-window {series_id}/{t_index}: inconsistent window shapes or non-finite label"
            )));
        }
        Ok(MetaWindow {
            windows,
            series_id,
            t_index,
        })
    }

    pub fn windows(&self) -> &[LabeledWindow] {
        &self.windows
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().map(|w| w.label)
    }

    pub fn window_size(&self) -> usize {
        self.windows[0].window_size()
    }

    pub fn num_channels(&self) -> usize {
        self.windows[0].num_channels()
    }

    /// Copy with labels replaced; inputs are untouched.
    pub fn with_labels(&self, labels: &[f64]) -> MetaWindow {
        debug_assert_eq!(labels.len(), self.windows.len());
        let windows = self
            .windows
            .iter()
            .zip(labels)
            .map(|(w, &label)| LabeledWindow {
                label,
                ..w.clone()
            })
            .collect();
        MetaWindow {
            windows,
            series_id: self.series_id.clone(),
            t_index: self.t_index,
        }
    }
}

/// Support meta-window `T_t` and query meta-window `T_{t+1}` of one series.
#[derive(Debug, Clone, Copy)]
pub struct VirtualTask<'a> {
    pub support: &'a MetaWindow,
    pub query: &'a MetaWindow,
}

/// Downsampled meta-window: per window, its first time step across all
/// channels followed by its label. Shape `[l, C + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaWindowSummary {
    pub values: Tensor,
}

impl MetaWindowSummary {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}
