use crate::error::{Error, Result};

/// Sample autocorrelation at lags `0..=max_lag`:
/// `r_k = Σ_t (y_t − ȳ)(y_{t+k} − ȳ) / Σ_t (y_t − ȳ)²`.
pub fn autocorrelation(y: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if y.len() <= max_lag {
        return Err(Error::Data(format!(
            "autocorrelation needs more than {max_lag} samples, got {}",
            y.len()
        )));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ConstantSeries);
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centered.iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .collect())
}
