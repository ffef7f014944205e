//! Desk-scale task family. Channels are independent AR(1) processes and the
//! target is
//!
//! `y(t) = s(t)·g_r(w_r·(x(t−1) − r) + v_r·(x(t−2) − r)) + r + c(t) + σ·ε(t)`
//!
//! with regime `r = i mod regimes` for series `i`. Channels are centred at
//! `r`, so the regime is visible in the inputs. `g_r` is linear for even
//! regimes and `3·tanh(·/3)` for odd ones. The level `c(t)` and gain `s(t)`
//! drift slowly and are not observed, so adjacent meta-windows share a task
//! while distant ones do not.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Tensor;
use crate::seed;
use crate::series::{LongSeries, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub regimes: usize,
    pub series_count: usize,
    pub length: usize,
    pub channels: usize,
    /// Drift amplitude multiplier; 0 makes every series stationary.
    pub drift: f64,
    /// Standard deviation `σ` of the target noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            regimes: 2,
            series_count: 6,
            length: 1000,
            channels: 3,
            drift: 1.0,
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regimes == 0 {
            return Err(Error::Config("synth regimes must be at least 1".into()));
        }
        if self.series_count == 0 || self.length < 3 || self.channels == 0 {
            return Err(Error::Config(
                "synth needs at least one series, one channel and length ≥ 3".into(),
            ));
        }
        if !(self.drift >= 0.0 && self.drift.is_finite() && self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("synth drift and noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Generator parameters of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSeriesParams {
    pub series_id: String,
    pub regime: usize,
    pub nonlinear: bool,
    pub ar_coefficient: f64,
    /// Mean of every channel.
    pub channel_mean: f64,
    /// Weights on `x(t−1)`.
    pub lag1: Vec<f64>,
    /// Weights on `x(t−2)`.
    pub lag2: Vec<f64>,
    pub offset: f64,
    pub offset_amplitude: f64,
    pub offset_period: f64,
    pub offset_phase: f64,
    pub gain_amplitude: f64,
    pub gain_period: f64,
    pub gain_phase: f64,
    pub noise: f64,
}

impl SynthSeriesParams {
    pub fn level(&self, t: usize) -> f64 {
        self.offset + self.offset_amplitude * (TAU * t as f64 / self.offset_period + self.offset_phase).sin()
    }

    pub fn gain(&self, t: usize) -> f64 {
        1.0 + self.gain_amplitude * (TAU * t as f64 / self.gain_period + self.gain_phase).sin()
    }

    /// Noise-free target at `t ≥ 2` given the channel rows.
    pub fn mean_target(&self, t: usize, x1: &[f64], x2: &[f64]) -> f64 {
        let m = self.channel_mean;
        let u: f64 = self.lag1.iter().zip(x1).map(|(w, x)| w * (x - m)).sum::<f64>()
            + self.lag2.iter().zip(x2).map(|(v, x)| v * (x - m)).sum::<f64>();
        let g = if self.nonlinear { 3.0 * (u / 3.0).tanh() } else { u };
        self.gain(t) * g + m + self.level(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFamily {
    pub series: Vec<LongSeries>,
    pub params: Vec<SynthSeriesParams>,
}

const AR: f64 = 0.9;

pub fn synth_task_family(cfg: &SynthConfig) -> Result<SynthFamily> {
    cfg.validate()?;
    let c = cfg.channels;
    // Per-regime maps and channel means.
    let regimes: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.regimes)
        .map(|r| {
            let mut rng = seed::rng(cfg.seed, "synth-regime", r as u64);
            let lag1 = (0..c).map(|_| rng.random_range(1.0..2.0)).collect();
            let lag2 = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
            (lag1, lag2)
        })
        .collect();
    let mut series = Vec::with_capacity(cfg.series_count);
    let mut params = Vec::with_capacity(cfg.series_count);
    for i in 0..cfg.series_count {
        let mut rng = seed::rng(cfg.seed, "synth-series", i as u64);
        let r = i % cfg.regimes;
        let (lag1, lag2) = regimes[r].clone();
        let p = SynthSeriesParams {
            series_id: format!("synth-{i:03}"),
            regime: r,
            nonlinear: r % 2 == 1,
            ar_coefficient: AR,
            channel_mean: r as f64,
            lag1,
            lag2,
            offset: rng.random_range(-0.1..0.1),
            offset_amplitude: cfg.drift * rng.random_range(0.8..1.2),
            offset_period: rng.random_range(250.0..400.0),
            offset_phase: rng.random_range(0.0..TAU),
            gain_amplitude: cfg.drift * 0.3,
            gain_period: rng.random_range(250.0..400.0),
            gain_phase: rng.random_range(0.0..TAU),
            noise: cfg.noise,
        };
        let innovation = Normal::new(0.0, (1.0 - AR * AR).sqrt()).expect("valid std");
        let mut x = vec![0.0; cfg.length * c];
        for k in 0..c {
            x[k] = rng.sample(StandardNormal);
        }
        for t in 1..cfg.length {
            for k in 0..c {
                x[t * c + k] = AR * x[(t - 1) * c + k] + innovation.sample(&mut rng);
            }
        }
        x.iter_mut().for_each(|v| *v += p.channel_mean);
        let mut target = vec![0.0; cfg.length];
        for t in 0..cfg.length {
            let (t1, t2) = (t.saturating_sub(1), t.saturating_sub(2));
            let eps: f64 = rng.sample(StandardNormal);
            target[t] = p.mean_target(t, &x[t1 * c..(t1 + 1) * c], &x[t2 * c..(t2 + 1) * c]) + cfg.noise * eps;
        }
        series.push(LongSeries::new(
            p.series_id.clone(),
            Tensor::from_vec(&[cfg.length, c], x)?,
            target,
            Split::Train,
        )?);
        params.push(p);
    }
    Ok(SynthFamily { series, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::autocorrelation;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig {
            length: 200,
            ..SynthConfig::default()
        };
        let a = synth_task_family(&cfg).unwrap();
        assert_eq!(a, synth_task_family(&cfg).unwrap());
        assert_eq!(a.series.len(), 6);
        assert!(a.series.iter().all(|s| s.len() == 200 && s.num_channels() == 3 && s.is_finite()));
        assert_eq!(a.params.iter().map(|p| p.regime).collect::<Vec<_>>(), vec![0, 1, 0, 1, 0, 1]);
        let b = synth_task_family(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.series[0].target, b.series[0].target);
    }

    #[test]
    fn noise_free_target_is_recovered_from_logged_parameters() {
        let cfg = SynthConfig {
            length: 300,
            noise: 0.0,
            ..SynthConfig::default()
        };
        let f = synth_task_family(&cfg).unwrap();
        for (s, p) in f.series.iter().zip(&f.params) {
            for t in 2..s.len() {
                let y = p.mean_target(t, s.channels.row(t - 1), s.channels.row(t - 2));
                assert!((y - s.target[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_drift_is_stationary() {
        let f = synth_task_family(&SynthConfig {
            drift: 0.0,
            length: 50,
            ..SynthConfig::default()
        })
        .unwrap();
        for p in &f.params {
            assert!((0..50).all(|t| p.gain(t) == 1.0 && p.level(t) == p.offset));
        }
    }

    #[test]
    fn target_autocorrelation_decreases_over_lags_1_to_100() {
        let f = synth_task_family(&SynthConfig {
            series_count: 2,
            length: 200_000,
            ..SynthConfig::default()
        })
        .unwrap();
        for s in &f.series {
            let r = autocorrelation(&s.target, 100).unwrap();
            for k in 1..100 {
                assert!(r[k + 1] < r[k], "{}: lag {k}: {} then {}", s.id, r[k], r[k + 1]);
            }
        }
    }

    #[test]
    fn regimes_differ_in_level_and_map() {
        let f = synth_task_family(&SynthConfig::default()).unwrap();
        let (a, b) = (&f.params[0], &f.params[1]);
        assert_eq!(b.channel_mean - a.channel_mean, 1.0);
        assert!(a.lag1 != b.lag1 && a.lag2 != b.lag2);
        assert!(!a.nonlinear && b.nonlinear);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(synth_task_family(&SynthConfig {
            regimes: 0,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(synth_task_family(&SynthConfig {
            noise: -1.0,
            ..SynthConfig::default()
        })
        .is_err());
    }

}
