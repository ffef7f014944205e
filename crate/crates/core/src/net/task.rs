use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{LabeledWindow, MetaWindow};

use super::dense::{Activation, Dense};
use super::lstm::{Lstm, LstmTrace};
use super::tensor::{dot, sign0, Params, Tensor};

/// Samples per gradient chunk. Chunk boundaries are fixed so reductions are
/// identical for any thread count.
pub(crate) const GRAD_CHUNK: usize = 16;

/// Per-sample regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Mae,
    Mse,
}

impl Loss {
    pub fn value(self, pred: f64, label: f64) -> f64 {
        match self {
            Loss::Mae => (pred - label).abs(),
            Loss::Mse => (pred - label).powi(2),
        }
    }

    /// `∂ℓ/∂pred`, with the MAE subgradient `sign(0) = 0`.
    pub fn derivative(self, pred: f64, label: f64) -> f64 {
        match self {
            Loss::Mae => sign0(pred - label),
            Loss::Mse => 2.0 * (pred - label),
        }
    }
}

/// Architecture of the task network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskNetConfig {
    pub channels: usize,
    pub window_size: usize,
    /// Hidden sizes of the stacked recurrent layers.
    pub hidden: Vec<usize>,
    /// Width `F` of the dense projection after the recurrent stack; `None`
    /// uses the last hidden state directly as the feature vector.
    pub feature_dim: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl TaskNetConfig {
    pub fn new(channels: usize, window_size: usize) -> Self {
        TaskNetConfig {
            channels,
            window_size,
            hidden: vec![120, 120],
            feature_dim: Some(128),
            activation: Activation::Identity,
        }
    }

    pub fn feature_size(&self) -> usize {
        self.feature_dim
            .unwrap_or_else(|| self.hidden.last().copied().unwrap_or(self.channels))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.window_size == 0 {
            return Err(Error::Config("task network needs channels ≥ 1 and window ≥ 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("task network needs at least one non-empty recurrent layer".into()));
        }
        if self.feature_dim == Some(0) {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        crate::hash::config_hash(self)
    }
}

/// Linear head `θ` and its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl Head {
    pub fn zeros(features: usize) -> Self {
        Head {
            weight: vec![0.0; features],
            bias: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weight.iter().all(|v| v.is_finite())
    }

    /// `(γ ⊙ θ + β)ᵀ φ + b`; the bias is never modulated.
    pub fn predict(&self, film: Option<&FilmParams>, phi: &[f64]) -> f64 {
        match film {
            None => dot(&self.weight, phi) + self.bias,
            Some(f) => {
                let s: f64 = self
                    .weight
                    .iter()
                    .zip(f.gamma())
                    .zip(f.beta())
                    .zip(phi)
                    .map(|(((w, g), b), p)| (g * w + b) * p)
                    .sum();
                s + self.bias
            }
        }
    }
}

/// Feature-wise affine modulation `(γ, β)` of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmParams {
    gamma: Tensor,
    beta: Tensor,
}

impl FilmParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::Shape(format!(
                "FiLM γ has {} entries, β has {}",
                gamma.len(),
                beta.len()
            )));
        }
        let n = gamma.len();
        Ok(FilmParams {
            gamma: Tensor::from_vec(&[n], gamma)?,
            beta: Tensor::from_vec(&[n], beta)?,
        })
    }

    /// `γ = 1, β = 0`.
    pub fn identity(features: usize) -> Self {
        FilmParams::new(vec![1.0; features], vec![0.0; features]).expect("equal lengths")
    }

    pub fn gamma(&self) -> &[f64] {
        self.gamma.data()
    }

    pub fn beta(&self) -> &[f64] {
        self.beta.data()
    }

    pub fn gamma_mut(&mut self) -> &mut [f64] {
        self.gamma.data_mut()
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        self.beta.data_mut()
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// `FiLM(θ | ρ) = γ ⊙ θ + β`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.gamma())
            .zip(self.beta())
            .map(|((t, g), b)| g * t + b)
            .collect()
    }
}

impl Params for FilmParams {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Recurrent feature extractor `φ` followed by a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNetwork {
    config: TaskNetConfig,
    lstms: Vec<Lstm>,
    projection: Option<Dense>,
    head: Tensor,
    head_bias: Tensor,
}

/// Cached activations of one extractor pass.
#[derive(Debug, Clone)]
pub struct ExtractorTrace {
    lstm: Vec<LstmTrace>,
    features: Vec<f64>,
}

impl ExtractorTrace {
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Gradients of a batch loss: one tensor per network parameter, plus the
/// FiLM inputs when the forward pass was modulated.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub net: TaskNetwork,
    pub film: Option<FilmParams>,
}

impl TaskNetwork {
    /// Recurrent and projection weights uniform in `±1/√fan_in`; head zero.
    pub fn new<R: Rng + ?Sized>(config: TaskNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut lstms = Vec::with_capacity(config.hidden.len());
        let mut input = config.channels;
        for &h in &config.hidden {
            lstms.push(Lstm::new(input, h, rng));
            input = h;
        }
        let projection = config.feature_dim.map(|f| Dense::new(input, f, rng));
        let f = config.feature_size();
        Ok(TaskNetwork {
            config,
            lstms,
            projection,
            head: Tensor::zeros(&[f]),
            head_bias: Tensor::zeros(&[1]),
        })
    }

    pub fn config(&self) -> &TaskNetConfig {
        &self.config
    }

    pub fn feature_size(&self) -> usize {
        self.head.len()
    }

    pub fn head(&self) -> Head {
        Head {
            weight: self.head.data().to_vec(),
            bias: self.head_bias.data()[0],
        }
    }

    pub fn set_head(&mut self, head: &Head) {
        self.head.data_mut().copy_from_slice(&head.weight);
        self.head_bias.data_mut()[0] = head.bias;
    }

    pub fn with_head(&self, head: &Head) -> TaskNetwork {
        let mut n = self.clone();
        n.set_head(head);
        n
    }

    /// Gradient slots of the head weight and bias.
    pub(crate) fn head_slots_mut(&mut self) -> (&mut [f64], &mut f64) {
        (self.head.data_mut(), &mut self.head_bias.data_mut()[0])
    }

    /// Extractor parameters only (recurrent stack and projection).
    pub fn extractor_params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.lstms.iter().flat_map(|l| l.params()).collect();
        if let Some(p) = &self.projection {
            v.extend(p.params());
        }
        v
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.config.window_size, self.config.channels];
        if x.shape() != want {
            return Err(Error::Shape(format!(
                "window has shape {:?}, network expects {want:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn extract(&self, x: &Tensor) -> Result<ExtractorTrace> {
        self.check_input(x)?;
        let steps: Vec<&[f64]> = x.data().chunks_exact(self.config.channels).collect();
        let mut traces: Vec<LstmTrace> = Vec::with_capacity(self.lstms.len());
        for (i, lstm) in self.lstms.iter().enumerate() {
            let tr = if i == 0 {
                lstm.forward(&steps)
            } else {
                lstm.forward(traces[i - 1].outputs())
            };
            traces.push(tr);
        }
        let last = traces.last().expect("at least one layer").last_hidden();
        let features = match &self.projection {
            Some(p) => p
                .forward(last)
                .into_iter()
                .map(|v| self.config.activation.apply(v))
                .collect(),
            None => last.to_vec(),
        };
        Ok(ExtractorTrace {
            lstm: traces,
            features,
        })
    }

    /// Feature vector `φ(x)`.
    pub fn features(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.extract(x)?.features)
    }

    /// Backpropagates `∂L/∂φ` through the extractor into `grads`.
    pub fn extractor_backward(&self, trace: &ExtractorTrace, dphi: &[f64], grads: &mut TaskNetwork) {
        let dh_last = match &self.projection {
            Some(p) => {
                let dpre: Vec<f64> = dphi
                    .iter()
                    .zip(&trace.features)
                    .map(|(d, y)| d * self.config.activation.derivative_from_output(*y))
                    .collect();
                let input = trace.lstm.last().unwrap().last_hidden();
                p.backward(input, &dpre, grads.projection.as_mut().expect("same architecture"))
            }
            None => dphi.to_vec(),
        };
        let steps = self.config.window_size;
        let mut dh: Vec<Vec<f64>> = vec![vec![0.0; dh_last.len()]; steps];
        dh[steps - 1] = dh_last;
        for (i, lstm) in self.lstms.iter().enumerate().rev() {
            let dx = lstm.backward(&trace.lstm[i], &dh, &mut grads.lstms[i]);
            if i > 0 {
                dh = dx;
            }
        }
    }

    /// Prediction `FiLM(θ | ρ)ᵀ φ(x) + b`; identity modulation when `film`
    /// is `None`.
    pub fn forward(&self, x: &Tensor, film: Option<&FilmParams>) -> Result<f64> {
        self.check_film(film)?;
        let phi = self.features(x)?;
        Ok(self.head().predict(film, &phi))
    }

    fn check_film(&self, film: Option<&FilmParams>) -> Result<()> {
        match film {
            Some(f) if f.len() != self.feature_size() => Err(Error::Shape(format!(
                "FiLM has {} entries, head has {}",
                f.len(),
                self.feature_size()
            ))),
            _ => Ok(()),
        }
    }

    /// Mean batch loss and its exact gradient with respect to every network
    /// parameter and, when modulated, the FiLM vectors.
    pub fn backward(
        &self,
        batch: &[&LabeledWindow],
        loss: Loss,
        film: Option<&FilmParams>,
    ) -> Result<(f64, GradientBundle)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        self.check_film(film)?;
        let head = self.head();
        let n = batch.len() as f64;
        let partials = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<(f64, GradientBundle)> {
                let mut g = GradientBundle {
                    net: self.zeros_like(),
                    film: film.map(|f| f.zeros_like()),
                };
                let mut total = 0.0;
                for w in chunk {
                    let trace = self.extract(&w.inputs)?;
                    let phi = trace.features();
                    let pred = head.predict(film, phi);
                    total += loss.value(pred, w.label);
                    let dpred = loss.derivative(pred, w.label) / n;
                    if dpred == 0.0 {
                        continue;
                    }
                    let w_eff = match film {
                        Some(f) => f.apply(&head.weight),
                        None => head.weight.clone(),
                    };
                    {
                        let gh = g.net.head.data_mut();
                        match film {
                            Some(f) => {
                                for k in 0..phi.len() {
                                    gh[k] += dpred * f.gamma()[k] * phi[k];
                                }
                            }
                            None => {
                                for k in 0..phi.len() {
                                    gh[k] += dpred * phi[k];
                                }
                            }
                        }
                    }
                    g.net.head_bias.data_mut()[0] += dpred;
                    if let Some(gf) = g.film.as_mut() {
                        for k in 0..phi.len() {
                            gf.gamma_mut()[k] += dpred * head.weight[k] * phi[k];
                            gf.beta_mut()[k] += dpred * phi[k];
                        }
                    }
                    let dphi: Vec<f64> = w_eff.iter().map(|v| v * dpred).collect();
                    self.extractor_backward(&trace, &dphi, &mut g.net);
                }
                Ok((total, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut iter = partials.into_iter();
        let (mut total, mut grads) = iter.next().expect("nonempty batch");
        for (t, g) in iter {
            total += t;
            grads.net.add_scaled(1.0, &g.net);
            if let (Some(a), Some(b)) = (grads.film.as_mut(), g.film.as_ref()) {
                a.add_scaled(1.0, b);
            }
        }
        Ok((total / n, grads))
    }

    /// Unnormalized head gradient `Δ = Σ_i ∂ℓ/∂pred_i · γ ⊙ φ(x_i)` over a
    /// meta-window (bias component: `Σ_i ∂ℓ/∂pred_i`). For MAE this is
    /// `−Σ_i sign(y_i − pred_i) · φ_eff(x_i)`.
    pub fn head_gradient(&self, mw: &MetaWindow, loss: Loss, film: Option<&FilmParams>) -> Result<Head> {
        self.check_film(film)?;
        let head = self.head();
        let mut delta = Head::zeros(self.feature_size());
        for w in mw.windows() {
            let phi = self.features(&w.inputs)?;
            let d = loss.derivative(head.predict(film, &phi), w.label);
            for (k, p) in phi.iter().enumerate() {
                let g = film.map_or(1.0, |f| f.gamma()[k]);
                delta.weight[k] += d * g * p;
            }
            delta.bias += d;
        }
        Ok(delta)
    }

    pub fn hash(&self) -> String {
        self.fingerprint()
    }
}

impl Params for TaskNetwork {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.extractor_params();
        v.push(&self.head);
        v.push(&self.head_bias);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.lstms.iter_mut().flat_map(|l| l.params_mut()).collect();
        if let Some(p) = self.projection.as_mut() {
            v.extend(p.params_mut());
        }
        v.push(&mut self.head);
        v.push(&mut self.head_bias);
        v
    }
}
