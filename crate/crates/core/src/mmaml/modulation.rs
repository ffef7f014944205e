use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dense, FilmParams, Lstm, LstmTrace, Params, Tensor};
use crate::series::MetaWindowSummary;

/// Variational recurrent autoencoder over meta-window summaries plus the
/// linear generator of FiLM parameters.
///
/// * encoder: LSTM over the `l` summary rows, then two dense maps of the
///   last hidden state to `μ` and `log σ²`;
/// * decoder: LSTM fed `z` at each of `l` steps, each hidden state read out
///   densely into one `C+1` summary row;
/// * generator: dense `z ↦ (γ_raw ‖ β)` with `γ = 1 + γ_raw`, initialized
///   to zero so that training starts from identity modulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationNetwork {
    encoder: Lstm,
    mu: Dense,
    logvar: Dense,
    decoder: Lstm,
    readout: Dense,
    generator: Dense,
}

/// Encoder outputs for one summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    /// Standard normal draw behind `z`, when sampled.
    pub eta: Option<Vec<f64>>,
    pub z: Vec<f64>,
}

pub(crate) struct EncoderTrace {
    pub lstm: LstmTrace,
    pub encoding: Encoding,
}

impl ModulationNetwork {
    /// `columns = C + 1` summary columns, `features = F` head size.
    pub fn new<R: Rng + ?Sized>(columns: usize, features: usize, hidden: usize, latent: usize, rng: &mut R) -> Self {
        ModulationNetwork {
            encoder: Lstm::new(columns, hidden, rng),
            mu: Dense::new(hidden, latent, rng),
            logvar: Dense::new(hidden, latent, rng),
            decoder: Lstm::new(latent, hidden, rng),
            readout: Dense::new(hidden, columns, rng),
            generator: Dense::zeros(latent, 2 * features),
        }
    }

    pub fn summary_columns(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.output_size()
    }

    pub fn feature_size(&self) -> usize {
        self.generator.output_size() / 2
    }

    pub fn generator(&self) -> &Dense {
        &self.generator
    }

    pub(crate) fn check_summary(&self, summary: &MetaWindowSummary) -> Result<()> {
        if summary.cols() != self.summary_columns() || summary.rows() == 0 {
            return Err(Error::Shape(format!(
                "summary is {}×{}, modulation network expects {} columns",
                summary.rows(),
                summary.cols(),
                self.summary_columns()
            )));
        }
        Ok(())
    }

    /// Encoder pass; `z = μ + exp(½ log σ²) ⊙ η` when `eta` is given.
    pub(crate) fn encode_traced(&self, summary: &MetaWindowSummary, eta: Option<Vec<f64>>) -> Result<EncoderTrace> {
        self.check_summary(summary)?;
        let rows: Vec<&[f64]> = (0..summary.rows()).map(|i| summary.row(i)).collect();
        let lstm = self.encoder.forward(&rows);
        let mu = self.mu.forward(lstm.last_hidden());
        let logvar = self.logvar.forward(lstm.last_hidden());
        let z = match &eta {
            Some(e) if e.len() != mu.len() => {
                return Err(Error::Shape(format!("noise of length {} for latent size {}", e.len(), mu.len())))
            }
            Some(e) => reparameterize(&mu, &logvar, e),
            None => mu.clone(),
        };
        Ok(EncoderTrace {
            lstm,
            encoding: Encoding { mu, logvar, eta, z },
        })
    }

    pub(crate) fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.latent_dim()).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// `z = μ + exp(½ log σ²) ⊙ η` with `η ~ N(0, I)` when `stochastic`,
    /// otherwise `z = μ`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        summary: &MetaWindowSummary,
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Encoding> {
        let eta = stochastic.then(|| self.sample_noise(rng));
        Ok(self.encode_traced(summary, eta)?.encoding)
    }

    /// Encoding with a given noise draw `η`.
    pub fn encode_with_noise(&self, summary: &MetaWindowSummary, eta: &[f64]) -> Result<Encoding> {
        Ok(self.encode_traced(summary, Some(eta.to_vec()))?.encoding)
    }

    /// Generator output split into `γ = 1 + raw[..F]` and `β = raw[F..]`.
    pub fn modulate(&self, z: &[f64]) -> Result<FilmParams> {
        if z.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent of length {}, expected {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let raw = self.generator.forward(z);
        let f = self.feature_size();
        FilmParams::new(raw[..f].iter().map(|r| 1.0 + r).collect(), raw[f..].to_vec())
    }

    pub(crate) fn decode_traced(&self, z: &[f64], rows: usize) -> (LstmTrace, Tensor) {
        let inputs = vec![z; rows];
        let trace = self.decoder.forward(&inputs);
        let cols = self.summary_columns();
        let mut out = Vec::with_capacity(rows * cols);
        for h in trace.outputs() {
            out.extend(self.readout.forward(h));
        }
        (trace, Tensor::from_vec(&[rows, cols], out).expect("rows·cols values"))
    }

    /// Reconstruction of an `rows × (C+1)` summary from `z`.
    pub fn decode(&self, z: &[f64], rows: usize) -> Tensor {
        self.decode_traced(z, rows).1
    }

    /// Backward pass of the decoder for `∂L/∂recon`; returns `∂L/∂z`.
    pub(crate) fn decoder_backward(&self, trace: &LstmTrace, d_recon: &Tensor, grads: &mut ModulationNetwork) -> Vec<f64> {
        let dh: Vec<Vec<f64>> = trace
            .outputs()
            .iter()
            .enumerate()
            .map(|(t, h)| self.readout.backward(h, d_recon.row(t), &mut grads.readout))
            .collect();
        let dx = self.decoder.backward(trace, &dh, &mut grads.decoder);
        let mut dz = vec![0.0; self.latent_dim()];
        for row in dx {
            dz.iter_mut().zip(&row).for_each(|(a, b)| *a += b);
        }
        dz
    }

    /// Backward pass of the generator for `∂L/∂γ`, `∂L/∂β`; returns `∂L/∂z`.
    pub(crate) fn generator_backward(&self, z: &[f64], d_film: &FilmParams, grads: &mut ModulationNetwork) -> Vec<f64> {
        let mut d_raw = d_film.gamma().to_vec();
        d_raw.extend_from_slice(d_film.beta());
        self.generator.backward(z, &d_raw, &mut grads.generator)
    }

    /// Backward pass of the encoder for `∂L/∂μ` and `∂L/∂log σ²`.
    pub(crate) fn encoder_backward(&self, trace: &EncoderTrace, d_mu: &[f64], d_logvar: &[f64], grads: &mut ModulationNetwork) {
        let h = trace.lstm.last_hidden();
        let mut dh_last = self.mu.backward(h, d_mu, &mut grads.mu);
        let d2 = self.logvar.backward(h, d_logvar, &mut grads.logvar);
        dh_last.iter_mut().zip(&d2).for_each(|(a, b)| *a += b);
        let steps = trace.lstm.steps();
        let mut dh = vec![vec![0.0; dh_last.len()]; steps];
        dh[steps - 1] = dh_last;
        self.encoder.backward(&trace.lstm, &dh, &mut grads.encoder);
    }

    /// Parameters of the decoder and readout only.
    pub fn decoder_params(&self) -> Vec<&Tensor> {
        let mut p = self.decoder.params();
        p.extend(self.readout.params());
        p
    }
}

impl Params for ModulationNetwork {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.mu.params());
        p.extend(self.logvar.params());
        p.extend(self.decoder.params());
        p.extend(self.readout.params());
        p.extend(self.generator.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.mu.params_mut());
        p.extend(self.logvar.params_mut());
        p.extend(self.decoder.params_mut());
        p.extend(self.readout.params_mut());
        p.extend(self.generator.params_mut());
        p
    }
}

pub(crate) fn reparameterize(mu: &[f64], logvar: &[f64], eta: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eta)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// `KL[N(μ, diag σ²) ‖ N(0, I)] = ½ Σ_d (μ_d² + σ_d² − log σ_d² − 1)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

/// Mean squared reconstruction error over all summary entries.
pub fn reconstruction_error(summary: &MetaWindowSummary, reconstruction: &Tensor) -> Result<f64> {
    if reconstruction.shape() != summary.values.shape() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs summary {:?}",
            reconstruction.shape(),
            summary.values.shape()
        )));
    }
    let n = reconstruction.len() as f64;
    Ok(summary
        .values
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// Reconstruction MSE plus the KL divergence of the posterior from `N(0, I)`.
pub fn vae_loss(summary: &MetaWindowSummary, reconstruction: &Tensor, mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::Shape(format!("μ has {} entries, log σ² has {}", mu.len(), logvar.len())));
    }
    Ok(reconstruction_error(summary, reconstruction)? + kl_divergence(mu, logvar))
}
