use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Tensor;

use super::LongSeries;

/// Standard deviations below this are floored.
pub const STD_FLOOR: f64 = 1e-8;

/// How non-finite entries of one channel are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Linear interpolation between the nearest finite neighbours; edges are
    /// filled with the nearest finite value.
    #[default]
    Interpolate,
    /// Sentinel value, for numeric columns with categorical meaning.
    Constant(f64),
    Zero,
}

impl Imputation {
    fn apply(self, values: &mut [f64]) {
        match self {
            Imputation::Constant(v) => fill_non_finite(values, v),
            Imputation::Zero => fill_non_finite(values, 0.0),
            Imputation::Interpolate => interpolate(values),
        }
    }
}

fn fill_non_finite(values: &mut [f64], v: f64) {
    values.iter_mut().filter(|x| !x.is_finite()).for_each(|x| *x = v);
}

fn interpolate(values: &mut [f64]) {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        values.iter_mut().for_each(|x| *x = 0.0);
        return;
    };
    let (head, tail) = (values[first], values[last]);
    values[..first].iter_mut().for_each(|x| *x = head);
    values[last + 1..].iter_mut().for_each(|x| *x = tail);
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a], values[b]);
        for i in a + 1..b {
            let w = (i - a) as f64 / (b - a) as f64;
            values[i] = va + w * (vb - va);
        }
    }
}

/// Standardization and target scaling parameters, fitted on training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
    pub imputation: Vec<Imputation>,
    pub target_imputation: Imputation,
}

/// Applies the per-channel imputation policies (and the target policy).
pub fn impute(series: &LongSeries, channel_policy: &[Imputation], target_policy: Imputation) -> Result<LongSeries> {
    let (len, c) = (series.len(), series.num_channels());
    if channel_policy.len() != c {
        return Err(Error::Config(format!(
            "{} imputation policies for {c} channels",
            channel_policy.len()
        )));
    }
    let src = series.channels.data();
    let mut data = src.to_vec();
    let mut column = vec![0.0; len];
    for (ch, policy) in channel_policy.iter().enumerate() {
        for t in 0..len {
            column[t] = src[t * c + ch];
        }
        policy.apply(&mut column);
        for t in 0..len {
            data[t * c + ch] = column[t];
        }
    }
    let mut target = series.target.clone();
    target_policy.apply(&mut target);
    LongSeries::new(series.id.clone(), Tensor::from_vec(&[len, c], data)?, target, series.split)
}

impl PreprocessParams {
    /// Fits channel mean/std and target min/max over all training series
    /// (after imputation).
    pub fn fit(train: &[LongSeries], imputation: Vec<Imputation>, target_imputation: Imputation) -> Result<Self> {
        let first = train.first().ok_or(Error::Empty("training split"))?;
        let c = first.num_channels();
        let mut sum = vec![0.0; c];
        let mut sum_sq = vec![0.0; c];
        let mut n = 0usize;
        let mut target_min = f64::INFINITY;
        let mut target_max = f64::NEG_INFINITY;
        let imputed = train
            .iter()
            .map(|s| {
                if s.num_channels() != c {
                    return Err(Error::Shape(format!(
                        "series '{}' has {} channels, expected {c}",
                        s.id,
                        s.num_channels()
                    )));
                }
                impute(s, &imputation, target_imputation)
            })
            .collect::<Result<Vec<_>>>()?;
        for s in &imputed {
            for row in s.channels.data().chunks_exact(c) {
                for (k, v) in row.iter().enumerate() {
                    sum[k] += v;
                }
            }
            n += s.len();
            for &y in &s.target {
                target_min = target_min.min(y);
                target_max = target_max.max(y);
            }
        }
        let means: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for s in &imputed {
            for row in s.channels.data().chunks_exact(c) {
                for (k, v) in row.iter().enumerate() {
                    sum_sq[k] += (v - means[k]).powi(2);
                }
            }
        }
        let stds = sum_sq
            .iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        if !(target_max > target_min) {
            return Err(Error::DegenerateTarget(target_min));
        }
        Ok(PreprocessParams {
            means,
            stds,
            target_min,
            target_max,
            imputation,
            target_imputation,
        })
    }

    /// Min-max maps a target into `[0, 1]`, clamping out-of-range values.
    pub fn normalize_target(&self, y: f64) -> f64 {
        ((y - self.target_min) / (self.target_max - self.target_min)).clamp(0.0, 1.0)
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * (self.target_max - self.target_min) + self.target_min
    }
}

/// Imputes, standardizes channels and min-max scales the target.
pub fn preprocess(raw: &LongSeries, params: &PreprocessParams) -> Result<LongSeries> {
    if !(params.target_max > params.target_min) {
        return Err(Error::DegenerateTarget(params.target_min));
    }
    let c = raw.num_channels();
    if params.means.len() != c {
        return Err(Error::Shape(format!(
            "series '{}' has {c} channels, parameters fitted on {}",
            raw.id,
            params.means.len()
        )));
    }
    let mut s = impute(raw, &params.imputation, params.target_imputation)?;
    for row in s.channels.data_mut().chunks_exact_mut(c) {
        for (k, v) in row.iter_mut().enumerate() {
            *v = (*v - params.means[k]) / params.stds[k];
        }
    }
    s.target.iter_mut().for_each(|y| *y = params.normalize_target(*y));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Split;

    fn series(id: &str, ch: Vec<f64>, target: Vec<f64>, split: Split) -> LongSeries {
        let len = target.len();
        let c = ch.len() / len;
        LongSeries::new(id, Tensor::from_vec(&[len, c], ch).unwrap(), target, split).unwrap()
    }

    #[test]
    fn standardized_training_channel_has_zero_mean() {
        let s = series("a", vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 2.0], Split::Train);
        let p = PreprocessParams::fit(std::slice::from_ref(&s), vec![Imputation::Interpolate], Imputation::Zero).unwrap();
        assert_eq!(p.means, vec![4.0]);
        let out = preprocess(&s, &p).unwrap();
        let mean: f64 = out.channels.data().iter().sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn target_min_max_and_clamping() {
        let train = series("a", vec![0.0, 1.0, 2.0], vec![10.0, 20.0, 30.0], Split::Train);
        let p = PreprocessParams::fit(&[train], vec![Imputation::Interpolate], Imputation::Zero).unwrap();
        assert_eq!(p.normalize_target(10.0), 0.0);
        assert_eq!(p.normalize_target(30.0), 1.0);
        let test = series("b", vec![0.0, 1.0], vec![40.0, 5.0], Split::Test);
        let out = preprocess(&test, &p).unwrap();
        assert_eq!(out.target, vec![1.0, 0.0]);
        for y in [10.0, 12.5, 29.99] {
            assert!((p.denormalize_target(p.normalize_target(y)) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_target_range_is_an_error() {
        let s = series("a", vec![0.0, 1.0], vec![3.0, 3.0], Split::Train);
        let err = PreprocessParams::fit(&[s], vec![Imputation::Interpolate], Imputation::Zero).unwrap_err();
        assert!(err.to_string().contains("degenerate target range"));
    }

    #[test]
    fn imputation_policies() {
        let nan = f64::NAN;
        let s = series(
            "a",
            vec![nan, nan, 1.0, 5.0, nan, 9.0, 3.0, nan, nan, nan, 7.0, 0.0],
            vec![1.0, nan, 2.0, 3.0],
            Split::Train,
        );
        let out = impute(&s, &[Imputation::Interpolate, Imputation::Constant(-1.0), Imputation::Zero], Imputation::Zero)
            .unwrap();
        // rows: [nan, nan, 1], [5, nan, 9], [3, nan, nan], [nan, 7, 0]
        let col = |k: usize| -> Vec<f64> { (0..4).map(|t| out.channels.data()[t * 3 + k]).collect() };
        assert_eq!(col(0), vec![5.0, 5.0, 3.0, 3.0]);
        assert_eq!(col(1), vec![-1.0, -1.0, -1.0, 7.0]);
        assert_eq!(col(2), vec![1.0, 9.0, 0.0, 0.0]);
        assert_eq!(out.target, vec![1.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn interpolation_is_linear_between_known_points() {
        let mut v = vec![0.0, f64::NAN, f64::NAN, 3.0];
        interpolate(&mut v);
        assert_eq!(v, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn near_constant_channel_gets_floored_std() {
        let s = series("a", vec![1.0; 4], vec![0.0, 1.0, 2.0, 3.0], Split::Train);
        let p = PreprocessParams::fit(std::slice::from_ref(&s), vec![Imputation::Interpolate], Imputation::Zero).unwrap();
        assert_eq!(p.stds, vec![STD_FLOOR]);
        assert!(preprocess(&s, &p).unwrap().is_finite());
    }
}
