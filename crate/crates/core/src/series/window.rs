use crate::error::{Error, Result};
use crate::net::Tensor;

use super::{LabeledWindow, LongSeries, MetaWindow, MetaWindowSummary, VirtualTask, WindowSpec};

/// Number of labeled windows a series of length `len` yields:
/// `⌊(len − 1 − δ)/k⌋ + 1`, or 0 when there is no room for one label.
pub fn window_count(len: usize, spec: WindowSpec) -> usize {
    if len <= spec.window_size {
        0
    } else {
        (len - 1 - spec.window_size) / spec.step_size + 1
    }
}

/// Cuts `series` into windows `channels[j·k .. j·k+δ]` labeled by
/// `target[j·k+δ]`, for `j = 0, 1, …` while the label index is in range.
pub fn rolling_window(series: &LongSeries, spec: WindowSpec) -> Result<Vec<LabeledWindow>> {
    let len = series.len();
    let delta = spec.window_size;
    if delta == 0 || spec.step_size == 0 {
        return Err(Error::Config("window and step size must be positive".into()));
    }
    if len < delta + 1 {
        return Err(Error::SeriesTooShort { length: len, window: delta });
    }
    if !series.is_finite() {
        return Err(Error::Data(format!(
            "series '{}' has non-finite values; impute before windowing",
            series.id
        )));
    }
    let c = series.num_channels();
    let data = series.channels.data();
    let windows = (0..window_count(len, spec))
        .map(|j| {
            let start = j * spec.step_size;
            let inputs = Tensor::from_vec(&[delta, c], data[start * c..(start + delta) * c].to_vec())
                .expect("slice has δ·C values");
            LabeledWindow {
                inputs,
                label: series.target[start + delta],
                origin_index: start,
            }
        })
        .collect();
    Ok(windows)
}

/// Groups consecutive windows into meta-windows of exactly `l` windows.
///
/// The trailing `|windows| mod l` windows are dropped; `t_index` counts
/// 0, 1, 2, … within the series.
pub fn generate_meta_windows(
    windows: &[LabeledWindow],
    l: usize,
    series_id: &str,
) -> Result<Vec<MetaWindow>> {
    if l == 0 {
        return Err(Error::Config("meta-window length must be positive".into()));
    }
    windows
        .chunks_exact(l)
        .enumerate()
        .map(|(t, chunk)| MetaWindow::new(chunk.to_vec(), series_id, t))
        .collect()
}

/// Pairs `(T_t, T_{t+1})` per series at `t = 0, step, 2·step, …`.
///
/// `meta_windows` must be ordered by `(series_id, t_index)`; pairs never
/// straddle two series.
pub fn virtual_tasks(meta_windows: &[MetaWindow], step: usize) -> Vec<VirtualTask<'_>> {
    let step = step.max(1);
    let mut tasks = Vec::new();
    let mut start = 0;
    while start < meta_windows.len() {
        let id = meta_windows[start].series_id();
        let end = meta_windows[start..]
            .iter()
            .position(|m| m.series_id() != id)
            .map_or(meta_windows.len(), |p| start + p);
        let group = &meta_windows[start..end];
        for t in (0..group.len().saturating_sub(1)).step_by(step) {
            let (support, query) = (&group[t], &group[t + 1]);
            if query.t_index() == support.t_index() + 1 {
                tasks.push(VirtualTask { support, query });
            }
        }
        start = end;
    }
    tasks
}

/// First time step of every window plus its label, one row per window.
pub fn summarize(mw: &MetaWindow) -> MetaWindowSummary {
    let c = mw.num_channels();
    let mut values = Vec::with_capacity(mw.len() * (c + 1));
    for w in mw.windows() {
        values.extend_from_slice(w.inputs.row(0));
        values.push(w.label);
    }
    MetaWindowSummary {
        values: Tensor::from_vec(&[mw.len(), c + 1], values).expect("l·(C+1) values"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Split;

    fn ramp(len: usize, c: usize) -> LongSeries {
        let ch = (0..len * c).map(|v| v as f64).collect();
        let target = (0..len).map(|t| 100.0 + t as f64).collect();
        LongSeries::new("s", Tensor::from_vec(&[len, c], ch).unwrap(), target, Split::Train).unwrap()
    }

    #[test]
    fn ten_steps_window_three_stride_one() {
        let s = ramp(10, 1);
        let w = rolling_window(&s, WindowSpec::new(3, 1).unwrap()).unwrap();
        assert_eq!(w.len(), 7);
        assert_eq!(w[0].inputs.data(), &[0.0, 1.0, 2.0]);
        assert_eq!(w[0].label, 103.0);
    }

    #[test]
    fn boundary_length_gives_one_window() {
        let s = ramp(4, 2);
        let w = rolling_window(&s, WindowSpec::new(3, 1).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn stride_four() {
        let s = ramp(11, 1);
        let w = rolling_window(&s, WindowSpec::new(3, 4).unwrap()).unwrap();
        let labels: Vec<f64> = w.iter().map(|w| w.label).collect();
        assert_eq!(labels, vec![103.0, 107.0]);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let s = ramp(3, 1);
        let err = rolling_window(&s, WindowSpec::new(3, 1).unwrap()).unwrap_err();
        assert!(err.to_string().contains("series shorter than window plus label"));
    }

    #[test]
    fn non_finite_series_is_rejected() {
        let mut s = ramp(8, 1);
        s.target[2] = f64::NAN;
        assert!(rolling_window(&s, WindowSpec::new(3, 1).unwrap()).is_err());
    }

    fn windows(n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| LabeledWindow {
                inputs: Tensor::from_vec(&[1, 1], vec![i as f64]).unwrap(),
                label: i as f64,
                origin_index: i,
            })
            .collect()
    }

    #[test]
    fn meta_window_floor_and_discard() {
        assert_eq!(generate_meta_windows(&windows(103), 50, "s").unwrap().len(), 2);
        assert_eq!(generate_meta_windows(&windows(50), 50, "s").unwrap().len(), 1);
        assert!(generate_meta_windows(&windows(49), 50, "s").unwrap().is_empty());
        assert!(generate_meta_windows(&[], 5, "s").unwrap().is_empty());
        let mws = generate_meta_windows(&windows(10), 3, "s").unwrap();
        assert_eq!(mws.iter().map(|m| m.t_index()).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(mws[2].windows()[0].origin_index, 6);
    }

    fn series_mws(id: &str, n: usize) -> Vec<MetaWindow> {
        generate_meta_windows(&windows(2 * n), 2, id).unwrap()
    }

    #[test]
    fn virtual_task_counts() {
        let five = series_mws("a", 5);
        assert_eq!(virtual_tasks(&five, 1).len(), 4);
        let t: Vec<usize> = virtual_tasks(&five, 2).iter().map(|t| t.support.t_index()).collect();
        assert_eq!(t, vec![0, 2]);
        let mut two = series_mws("a", 3);
        two.extend(series_mws("b", 3));
        let tasks = virtual_tasks(&two, 1);
        assert_eq!(tasks.len(), 4);
        assert!(tasks.iter().all(|t| t.support.series_id() == t.query.series_id()));
    }

    #[test]
    fn summary_takes_first_step_and_label() {
        let ws = vec![
            LabeledWindow {
                inputs: Tensor::from_vec(&[2, 1], vec![0.5, 9.0]).unwrap(),
                label: 1.0,
                origin_index: 0,
            },
            LabeledWindow {
                inputs: Tensor::from_vec(&[2, 1], vec![0.7, 9.0]).unwrap(),
                label: 2.0,
                origin_index: 1,
            },
        ];
        let mw = MetaWindow::new(ws, "s", 0).unwrap();
        assert_eq!(summarize(&mw).values.data(), &[0.5, 1.0, 0.7, 2.0]);
    }

    #[test]
    fn summary_shape_for_thirteen_channels() {
        let ws = (0..50)
            .map(|i| LabeledWindow {
                inputs: Tensor::zeros(&[32, 13]),
                label: 0.0,
                origin_index: i,
            })
            .collect();
        let s = summarize(&MetaWindow::new(ws, "s", 0).unwrap());
        assert_eq!((s.rows(), s.cols()), (50, 14));
    }

    #[test]
    fn constant_series_summary_rows_identical() {
        let s = LongSeries::new(
            "c",
            Tensor::from_vec(&[40, 2], vec![3.0; 80]).unwrap(),
            vec![1.5; 40],
            Split::Train,
        )
        .unwrap();
        let w = rolling_window(&s, WindowSpec::new(4, 1).unwrap()).unwrap();
        let mw = &generate_meta_windows(&w, 5, "c").unwrap()[0];
        let sum = summarize(mw);
        assert!((1..sum.rows()).all(|r| sum.row(r) == sum.row(0)));
    }
}
