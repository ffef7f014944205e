use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maml::{adapted_query_loss, inner_adapt_steps, task_meta_gradient, MetaLearner, MetaTrainOutcome, TaskOutcome};
use crate::net::{Head, Params, TaskNetwork, Tensor};
use crate::seed;
use crate::series::{summarize, MetaWindow, VirtualTask};

use super::modulation::{kl_divergence, reconstruction_error, ModulationNetwork};
use super::MmamlConfig;

/// Task network and modulation network, trained jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmamlModel {
    pub net: TaskNetwork,
    pub modulation: ModulationNetwork,
}

impl MmamlModel {
    pub fn new<R: Rng + ?Sized>(net: TaskNetwork, cfg: &MmamlConfig, rng: &mut R) -> Self {
        let modulation = ModulationNetwork::new(
            net.config().channels + 1,
            net.feature_size(),
            cfg.hidden_size,
            cfg.latent_dim,
            rng,
        );
        MmamlModel { net, modulation }
    }

    /// Checks that the two networks fit each other and `mw`.
    pub fn check_compatible(&self, mw: &MetaWindow) -> Result<()> {
        let c = self.net.config();
        if self.modulation.summary_columns() != c.channels + 1 || self.modulation.feature_size() != self.net.feature_size() {
            return Err(Error::Shape(format!(
                "modulation network ({} summary columns, {} features) does not match task network ({} channels, {} features)",
                self.modulation.summary_columns(),
                self.modulation.feature_size(),
                c.channels,
                self.net.feature_size()
            )));
        }
        if mw.num_channels() != c.channels || mw.window_size() != c.window_size {
            return Err(Error::Shape(format!(
                "meta-window of {}×{} windows, model expects {}×{}",
                mw.window_size(),
                mw.num_channels(),
                c.window_size,
                c.channels
            )));
        }
        Ok(())
    }

    /// Query loss, VAE loss and the gradient of `L_query + λ·L_vae` for one
    /// task, with the reparameterization noise `eta` (or `z = μ` if `None`).
    pub fn task_terms(
        &self,
        cfg: &MmamlConfig,
        support: &MetaWindow,
        query: &MetaWindow,
        eta: Option<Vec<f64>>,
    ) -> Result<TaskOutcome<MmamlModel>> {
        self.check_compatible(support)?;
        let m = &self.modulation;
        let summary = summarize(support);
        let enc = m.encode_traced(&summary, eta)?;
        let (mu, logvar, z) = (&enc.encoding.mu, &enc.encoding.logvar, &enc.encoding.z);
        let film = m.modulate(z)?;
        let maml = &cfg.maml;
        let g = task_meta_gradient(
            &self.net,
            Some(&film),
            support,
            query,
            maml.inner_lr,
            maml.inner_steps,
            maml.meta_gradient(),
        )?;
        let mut grads = MmamlModel {
            net: g.net,
            modulation: m.zeros_like(),
        };
        let d_film = g.film.expect("film gradient is returned for a modulated head");
        let mut dz = m.generator_backward(z, &d_film, &mut grads.modulation);

        let (trace, recon) = m.decode_traced(z, summary.rows());
        let recon_err = reconstruction_error(&summary, &recon)?;
        let kl = kl_divergence(mu, logvar);
        let lambda = cfg.vrae_weight;
        let mut d_mu = vec![0.0; mu.len()];
        let mut d_logvar = vec![0.0; mu.len()];
        if lambda != 0.0 {
            let scale = 2.0 * lambda / recon.len() as f64;
            let diff: Vec<f64> = recon
                .data()
                .iter()
                .zip(summary.values.data())
                .map(|(r, s)| scale * (r - s))
                .collect();
            let d_recon = Tensor::from_vec(recon.shape(), diff)?;
            let dz_dec = m.decoder_backward(&trace, &d_recon, &mut grads.modulation);
            dz.iter_mut().zip(&dz_dec).for_each(|(a, b)| *a += b);
            for d in 0..mu.len() {
                d_mu[d] += lambda * mu[d];
                d_logvar[d] += lambda * 0.5 * (logvar[d].exp() - 1.0);
            }
        }
        for d in 0..mu.len() {
            d_mu[d] += dz[d];
            if let Some(eta) = &enc.encoding.eta {
                d_logvar[d] += dz[d] * eta[d] * 0.5 * (0.5 * logvar[d]).exp();
            }
        }
        m.encoder_backward(&enc, &d_mu, &d_logvar, &mut grads.modulation);
        if cfg.freeze_modulation {
            grads.modulation = m.zeros_like();
        }
        Ok(TaskOutcome {
            query_loss: g.query_loss,
            aux_loss: recon_err + kl,
            grad: grads,
        })
    }
}

impl Params for MmamlModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.net.params();
        p.extend(self.modulation.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.net.params_mut();
        p.extend(self.modulation.params_mut());
        p
    }
}

impl MetaLearner for MmamlModel {
    type Config = MmamlConfig;

    fn maml_config(cfg: &MmamlConfig) -> &crate::maml::MamlConfig {
        &cfg.maml
    }

    fn task_gradient(
        &self,
        cfg: &MmamlConfig,
        support: &MetaWindow,
        query: &MetaWindow,
        rng: &mut seed::Rng,
    ) -> Result<TaskOutcome<Self>> {
        let eta = cfg.stochastic_encode.then(|| self.modulation.sample_noise(rng));
        self.task_terms(cfg, support, query, eta)
    }

    fn query_loss(&self, cfg: &MmamlConfig, support: &MetaWindow, query: &MetaWindow) -> Result<f64> {
        self.check_compatible(support)?;
        let z = self.modulation.encode_traced(&summarize(support), None)?.encoding.z;
        let film = self.modulation.modulate(&z)?;
        adapted_query_loss(&self.net, Some(&film), support, query, cfg.maml.inner_lr, cfg.maml.inner_steps)
    }
}

/// Meta-trains task and modulation networks jointly against
/// `L_query + λ·(reconstruction + KL)`.
pub fn mmaml_meta_train(
    model: MmamlModel,
    cfg: &MmamlConfig,
    train: Vec<VirtualTask<'_>>,
    validation: Vec<VirtualTask<'_>>,
    seed: u64,
) -> Result<MetaTrainOutcome<MmamlModel>> {
    crate::maml::meta_train(model, cfg, train, validation, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmamlPrediction {
    /// Predictions per query meta-window, one per window.
    pub predictions: Vec<Vec<f64>>,
    /// MAE per query meta-window.
    pub mae: Vec<f64>,
    pub head: Head,
}

/// Inference: summarize the support, encode with `z = μ`, modulate, adapt
/// the modulated head on the support, and predict every query window. The
/// decoder is not used.
pub fn mmaml_adapt_and_predict(
    model: &MmamlModel,
    support: &MetaWindow,
    queries: &[&MetaWindow],
    cfg: &MmamlConfig,
) -> Result<MmamlPrediction> {
    model.check_compatible(support)?;
    let z = model.modulation.encode_traced(&summarize(support), None)?.encoding.z;
    let film = model.modulation.modulate(&z)?;
    let adapted = inner_adapt_steps(&model.net, support, cfg.maml.inner_lr, cfg.maml.inner_steps, Some(&film))?;
    let head = adapted.theta_prime;
    let mut predictions = Vec::with_capacity(queries.len());
    let mut mae = Vec::with_capacity(queries.len());
    for q in queries {
        model.check_compatible(q)?;
        let preds = q
            .windows()
            .iter()
            .map(|w| Ok(head.predict(Some(&film), &model.net.features(&w.inputs)?)))
            .collect::<Result<Vec<_>>>()?;
        let err = preds.iter().zip(q.labels()).map(|(p, y)| (p - y).abs()).sum::<f64>() / q.len() as f64;
        predictions.push(preds);
        mae.push(err);
    }
    Ok(MmamlPrediction { predictions, mae, head })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maml::{meta_train, MamlConfig};
    use crate::net::{check_gradients, Activation, TaskNetConfig};
    use crate::optim::OptimizerKind;
    use crate::series::{virtual_tasks, LabeledWindow};

    fn meta_windows(id: &str, n: usize, l: usize, slope: f64, rng: &mut seed::Rng) -> Vec<MetaWindow> {
        (0..n)
            .map(|t| {
                let ws = (0..l)
                    .map(|i| {
                        let inputs = Tensor::uniform(&[3, 2], 1.0, rng);
                        let label = slope * inputs.data()[4] + 0.5;
                        LabeledWindow {
                            inputs,
                            label,
                            origin_index: t * l + i,
                        }
                    })
                    .collect();
                MetaWindow::new(ws, id, t).unwrap()
            })
            .collect()
    }

    fn small_cfg() -> MmamlConfig {
        MmamlConfig {
            maml: MamlConfig {
                inner_lr: 0.2,
                meta_lr: 0.01,
                meta_batch_size: 4,
                meta_epochs: 5,
                optimizer: OptimizerKind::adam(),
                ..MamlConfig::default()
            },
            vrae_weight: 0.1,
            latent_dim: 3,
            hidden_size: 4,
            stochastic_encode: true,
            freeze_modulation: false,
        }
    }

    fn model(idx: u64, cfg: &MmamlConfig) -> (MmamlModel, seed::Rng) {
        let mut rng = seed::rng(13, "mmaml", idx);
        let net_cfg = TaskNetConfig {
            channels: 2,
            window_size: 3,
            hidden: vec![3],
            feature_dim: Some(4),
            activation: Activation::Tanh,
        };
        let mut net = TaskNetwork::new(net_cfg, &mut rng).unwrap();
        net.set_head(&Head {
            weight: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.1,
        });
        let mut m = MmamlModel::new(net, cfg, &mut rng);
        // Move the generator off zero so γ and β differ from identity.
        let mut flat = m.to_flat();
        let n = flat.len();
        let gen = m.modulation.generator().num_params();
        for v in &mut flat[n - gen..] {
            *v = rng.random_range(-0.3..0.3);
        }
        m.set_flat(&flat);
        (m, rng)
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        // Common random numbers: the noise η is fixed, so the objective is a
        // deterministic function of every parameter.
        for idx in 0..3 {
            let cfg = small_cfg();
            let (m, mut rng) = model(idx, &cfg);
            let s = &meta_windows("s", 1, 5, 0.4, &mut rng)[0];
            let q = &meta_windows("s", 1, 4, 0.4, &mut rng)[0];
            let eta = m.modulation.sample_noise(&mut rng);
            let out = m.task_terms(&cfg, s, q, Some(eta.clone())).unwrap();
            let objective = |x: &[f64]| {
                let mut p = m.clone();
                p.set_flat(x);
                let o = p.task_terms(&cfg, s, q, Some(eta.clone())).unwrap();
                o.query_loss + cfg.vrae_weight * o.aux_loss
            };
            let r = check_gradients(&m.to_flat(), &out.grad.to_flat(), objective, 1e-6, 1e-4);
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn identity_modulation_matches_maml() {
        let cfg = MmamlConfig {
            vrae_weight: 0.0,
            ..small_cfg()
        };
        let mut rng = seed::rng(1, "identity", 0);
        let net = TaskNetwork::new(
            TaskNetConfig {
                hidden: vec![4],
                feature_dim: Some(3),
                ..TaskNetConfig::new(2, 3)
            },
            &mut rng,
        )
        .unwrap();
        let m = MmamlModel::new(net.clone(), &cfg, &mut rng);
        let mws = meta_windows("a", 3, 5, 0.3, &mut rng);
        for t in virtual_tasks(&mws, 1) {
            let a = m.query_loss(&cfg, t.support, t.query).unwrap();
            let b = net.query_loss(&cfg.maml, t.support, t.query).unwrap();
            assert!((a - b).abs() <= 1e-12);
            let ga = m.task_terms(&cfg, t.support, t.query, None).unwrap();
            let gb = net.task_gradient(&cfg.maml, t.support, t.query, &mut rng).unwrap();
            assert!((ga.query_loss - gb.query_loss).abs() <= 1e-12);
            assert_eq!(ga.grad.net.to_flat(), gb.grad.to_flat());
        }
    }

    #[test]
    fn frozen_identity_modulation_follows_the_maml_trajectory() {
        let cfg = MmamlConfig {
            vrae_weight: 0.0,
            freeze_modulation: true,
            ..small_cfg()
        };
        let mut rng = seed::rng(2, "identity", 0);
        let net = TaskNetwork::new(
            TaskNetConfig {
                hidden: vec![4],
                feature_dim: Some(3),
                ..TaskNetConfig::new(2, 3)
            },
            &mut rng,
        )
        .unwrap();
        let m = MmamlModel::new(net.clone(), &cfg, &mut rng);
        let train = meta_windows("a", 8, 5, 0.3, &mut rng);
        let val = meta_windows("b", 3, 5, -0.2, &mut rng);
        let a = mmaml_meta_train(m.clone(), &cfg, virtual_tasks(&train, 1), virtual_tasks(&val, 1), 9).unwrap();
        let b = meta_train(net, &cfg.maml, virtual_tasks(&train, 1), virtual_tasks(&val, 1), 9).unwrap();
        assert_eq!(a.final_model.net.fingerprint(), b.final_model.fingerprint());
        assert_eq!(a.final_model.modulation, m.modulation);
        let la: Vec<f64> = a.log.iter().map(|e| e.validation_query_mae).collect();
        let lb: Vec<f64> = b.log.iter().map(|e| e.validation_query_mae).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn decoder_gradient_comes_only_from_the_vae_term() {
        let (m, mut rng) = model(3, &small_cfg());
        let s = &meta_windows("s", 1, 5, 0.4, &mut rng)[0];
        let q = &meta_windows("s", 1, 5, 0.4, &mut rng)[0];
        let decoder_norm = |cfg: &MmamlConfig| {
            let g = m.task_terms(cfg, s, q, None).unwrap().grad;
            g.modulation
                .decoder_params()
                .iter()
                .flat_map(|t| t.data().iter())
                .map(|v| v.abs())
                .sum::<f64>()
        };
        let off = MmamlConfig {
            vrae_weight: 0.0,
            ..small_cfg()
        };
        assert_eq!(decoder_norm(&off), 0.0);
        assert!(decoder_norm(&small_cfg()) > 0.0);
    }

    #[test]
    fn inference_is_deterministic_and_reduces_to_forward() {
        let cfg = small_cfg();
        let (m, mut rng) = model(4, &cfg);
        let s = &meta_windows("s", 1, 5, 0.4, &mut rng)[0];
        let qs = meta_windows("s", 2, 5, 0.4, &mut rng);
        let refs: Vec<&MetaWindow> = qs.iter().collect();
        let a = mmaml_adapt_and_predict(&m, s, &refs, &cfg).unwrap();
        let b = mmaml_adapt_and_predict(&m, s, &refs, &cfg).unwrap();
        assert_eq!(a, b);

        let mut plain_cfg = cfg.clone();
        plain_cfg.maml.inner_lr = 0.0;
        let plain = MmamlModel::new(m.net.clone(), &plain_cfg, &mut rng);
        let p = mmaml_adapt_and_predict(&plain, s, &refs, &plain_cfg).unwrap();
        for (q, preds) in qs.iter().zip(&p.predictions) {
            for (w, y) in q.windows().iter().zip(preds) {
                assert_eq!(*y, m.net.forward(&w.inputs, None).unwrap());
            }
        }
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let cfg = small_cfg();
        let (m, mut rng) = model(5, &cfg);
        let bad: Vec<MetaWindow> = (0..1)
            .map(|_| {
                let ws = vec![LabeledWindow {
                    inputs: Tensor::uniform(&[3, 3], 1.0, &mut rng),
                    label: 0.0,
                    origin_index: 0,
                }];
                MetaWindow::new(ws, "x", 0).unwrap()
            })
            .collect();
        assert!(mmaml_adapt_and_predict(&m, &bad[0], &[], &cfg).is_err());
    }
}
