use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Binder;
use super::{LatentError, Model, ModelConfig, Result, TrainConfig};
use crate::geometry::VoxelGrid;
use crate::tensor::{adam_step, AdamConfig, OptimizerState, Tape, Tensor};

/// Which rows are mixed with which, and by how much.
///
/// Row `i` of the interpolated batch decodes `α_i·z_i + (1 − α_i)·z_partner[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationBatch {
    pub partner: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl InterpolationBatch {
    /// Random partners forming a single cycle (no row pairs with itself) and
    /// weights uniform over `range`.
    pub fn sample(batch: usize, range: [f64; 2], rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..batch).collect();
        order.shuffle(rng);
        let mut partner = vec![0; batch];
        for j in 0..batch {
            partner[order[j]] = order[(j + 1) % batch];
        }
        let alpha = (0..batch)
            .map(|_| if range[0] == range[1] { range[0] } else { rng.random_range(range[0]..range[1]) })
            .collect();
        Self { partner, alpha }
    }

    fn check(&self, batch: usize) -> Result<()> {
        if self.partner.len() != batch || self.alpha.len() != batch {
            return Err(LatentError::Dimension(format!(
                "interpolation batch of {} partners / {} weights for {batch} rows",
                self.partner.len(),
                self.alpha.len()
            )));
        }
        if self.partner.iter().any(|&p| p >= batch) {
            return Err(LatentError::InvalidArgument("partner index out of range".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(LatentError::InvalidArgument(format!("alpha {a} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u8,
    pub epoch: usize,
    pub ae_loss: f64,
    /// Absent in phase 1.
    pub critic_loss: Option<f64>,
    /// Mean IoU of thresholded train-mode reconstructions against their inputs.
    pub reconstruction_iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

struct AeForward {
    loss: f64,
    x_hat: Tensor,
    x_hat_alpha: Option<Tensor>,
    grads: BTreeMap<String, Tensor>,
    stats: Vec<(String, crate::tensor::BatchStats)>,
}

/// Autoencoder loss and its gradients with respect to `enc.*` and `dec.*`.
///
/// Without `interp` (or with λ = 0 and no interpolation) this is plain BCE.
/// The critic is evaluated with its weights held fixed.
fn ae_forward(model: &Model, x: &Tensor, interp: Option<&InterpolationBatch>) -> Result<AeForward> {
    let batch = x.shape()[0];
    let mut tape = Tape::new();
    let mut b = Binder::new(&model.params, true).freezing("critic.");
    let xv = tape.constant(x.clone());
    let z = model.encoder(&mut tape, &mut b, xv)?;
    let x_hat = model.decoder(&mut tape, &mut b, z)?;
    let mut loss = tape.bce(x_hat, x)?;
    let mut x_hat_alpha = None;
    if let Some(ib) = interp {
        ib.check(batch)?;
        let zp = tape.rows(z, &ib.partner)?;
        let z_mix = tape.mix(z, zp, &ib.alpha)?;
        let xa = model.decoder(&mut tape, &mut b, z_mix)?;
        let c = model.critic(&mut tape, &mut b, xa)?;
        let reg = tape.squared_error(c, &Tensor::zeros(&[batch, 1]))?;
        let reg = tape.scale(reg, model.config.lambda);
        loss = tape.add(loss, reg)?;
        x_hat_alpha = Some(tape.value(xa).clone());
    }
    let grads = tape.backward(loss)?.into_params();
    Ok(AeForward {
        loss: tape.value(loss).item()?,
        x_hat: tape.value(x_hat).clone(),
        x_hat_alpha,
        grads,
        stats: b.stats,
    })
}

/// Loss, gradients and train-mode statistics of one critic step.
fn critic_forward(
    model: &Model,
    x: &Tensor,
    x_hat: &Tensor,
    x_hat_alpha: &Tensor,
    alpha: &[f64],
) -> Result<(f64, BTreeMap<String, Tensor>, Vec<(String, crate::tensor::BatchStats)>)> {
    x.check_same_shape(x_hat, "critic inputs")?;
    x.check_same_shape(x_hat_alpha, "critic inputs")?;
    let batch = x.shape()[0];
    if alpha.len() != batch {
        return Err(LatentError::Dimension(format!("{} weights for batch {batch}", alpha.len())));
    }
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(LatentError::InvalidArgument(format!("alpha {a} outside [0, 1]")));
    }
    let gamma = model.config.gamma;
    let mixture = Tensor::from_fn(x.shape(), |i| gamma * x.data()[i] + (1.0 - gamma) * x_hat.data()[i]);
    let mut tape = Tape::new();
    let mut b = Binder::new(&model.params, true);
    let xa = tape.constant(x_hat_alpha.clone());
    let xm = tape.constant(mixture);
    let ca = model.critic(&mut tape, &mut b, xa)?;
    let cm = model.critic(&mut tape, &mut b, xm)?;
    let fit = tape.squared_error(ca, &Tensor::new(vec![batch, 1], alpha.to_vec())?)?;
    let reg = tape.squared_error(cm, &Tensor::zeros(&[batch, 1]))?;
    let loss = tape.add(fit, reg)?;
    let grads = tape.backward(loss)?.into_params();
    Ok((tape.value(loss).item()?, grads, b.stats))
}

/// Critic loss `mean (C(x̂_α) − α)² + mean C(γx + (1 − γ)x̂)²` with train-mode
/// batch norm, and its gradients with respect to the critic parameters.
pub fn critic_loss_with_gradients(
    model: &Model,
    x: &Tensor,
    x_hat: &Tensor,
    x_hat_alpha: &Tensor,
    alpha: &[f64],
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let (loss, grads, _) = critic_forward(model, x, x_hat, x_hat_alpha, alpha)?;
    Ok((loss, keep_prefix(grads, "critic.")))
}

/// Autoencoder loss `BCE(x̂, x) + λ·mean C(x̂_α)²` with train-mode batch norm,
/// and its gradients with respect to the encoder and decoder parameters.
pub fn ae_loss_with_gradients(
    model: &Model,
    x: &Tensor,
    interp: &InterpolationBatch,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let f = ae_forward(model, x, Some(interp))?;
    Ok((f.loss, keep_prefix(f.grads, "")))
}

fn keep_prefix(grads: BTreeMap<String, Tensor>, prefix: &str) -> BTreeMap<String, Tensor> {
    grads.into_iter().filter(|(k, _)| k.starts_with(prefix)).collect()
}

fn batch_iou(x: &Tensor, x_hat: &Tensor) -> f64 {
    let batch = x.shape()[0];
    let n = x.len() / batch;
    let mut total = 0.0;
    for s in 0..batch {
        let (mut inter, mut union) = (0usize, 0usize);
        for i in s * n..(s + 1) * n {
            let (a, b) = (x.data()[i] > 0.5, x_hat.data()[i] > 0.5);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    total / batch as f64
}

/// Shuffled minibatches; a trailing remainder of one sample joins the previous batch.
fn minibatches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// Two-phase training.
///
/// Phase 1 fits the autoencoder alone on reconstruction BCE. Phase 2 computes
/// the autoencoder and critic gradients from the same parameters for every
/// batch, then applies both updates. All randomness comes from `seed`.
pub fn train(model: &mut Model, corpus: &[VoxelGrid], cfg: &TrainConfig, seed: u64) -> Result<TrainingReport> {
    cfg.validate()?;
    model.config.validate()?;
    if corpus.len() < cfg.batch_size {
        return Err(LatentError::InvalidArgument(format!(
            "corpus of {} shapes is smaller than batch size {}",
            corpus.len(),
            cfg.batch_size
        )));
    }
    let r = model.config.resolution;
    if let Some(g) = corpus.iter().find(|g| g.resolution() != r) {
        return Err(LatentError::Dimension(format!(
            "corpus grid at resolution {} for model resolution {r}",
            g.resolution()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TrainingReport {
        seed,
        model: model.config.clone(),
        train: cfg.clone(),
        epochs: Vec::new(),
    };
    let ae_names: Vec<String> = [model.params.trainable_with_prefix("enc."), model.params.trainable_with_prefix("dec.")].concat();
    let critic_names = model.params.trainable_with_prefix("critic.");

    let mut opt = OptimizerState::new(AdamConfig::with_learning_rate(cfg.phase1_learning_rate), &model.params, &ae_names)?;
    for epoch in 0..cfg.phase1_epochs {
        let (mut loss_sum, mut iou_sum, mut seen) = (0.0, 0.0, 0usize);
        for idx in minibatches(corpus.len(), cfg.batch_size, &mut rng) {
            let grids: Vec<&VoxelGrid> = idx.iter().map(|&i| &corpus[i]).collect();
            let x = model.batch_tensor(&grids)?;
            let f = ae_forward(model, &x, None)?;
            adam_step(&mut model.params, &f.grads, &mut opt)?;
            model.update_running_stats(&f.stats)?;
            loss_sum += f.loss * idx.len() as f64;
            iou_sum += batch_iou(&x, &f.x_hat) * idx.len() as f64;
            seen += idx.len();
        }
        let rec = EpochRecord {
            phase: 1,
            epoch,
            ae_loss: loss_sum / seen as f64,
            critic_loss: None,
            reconstruction_iou: iou_sum / seen as f64,
        };
        info!("phase 1 epoch {epoch}: loss {:.5} iou {:.4}", rec.ae_loss, rec.reconstruction_iou);
        report.epochs.push(rec);
    }

    let mut ae_opt = OptimizerState::new(AdamConfig::with_learning_rate(cfg.ae_learning_rate), &model.params, &ae_names)?;
    let mut critic_opt =
        OptimizerState::new(AdamConfig::with_learning_rate(cfg.critic_learning_rate), &model.params, &critic_names)?;
    for epoch in 0..cfg.phase2_epochs {
        let (mut ae_sum, mut critic_sum, mut iou_sum, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for idx in minibatches(corpus.len(), cfg.batch_size, &mut rng) {
            let grids: Vec<&VoxelGrid> = idx.iter().map(|&i| &corpus[i]).collect();
            let x = model.batch_tensor(&grids)?;
            let ib = InterpolationBatch::sample(idx.len(), model.config.alpha_range, &mut rng);
            let f = ae_forward(model, &x, Some(&ib))?;
            let x_hat_alpha = f.x_hat_alpha.as_ref().expect("interpolated pass");
            let (critic_loss, critic_grads, critic_stats) = critic_forward(model, &x, &f.x_hat, x_hat_alpha, &ib.alpha)?;
            adam_step(&mut model.params, &f.grads, &mut ae_opt)?;
            adam_step(&mut model.params, &critic_grads, &mut critic_opt)?;
            model.update_running_stats(&f.stats)?;
            model.update_running_stats(&critic_stats)?;
            let n = idx.len() as f64;
            ae_sum += f.loss * n;
            critic_sum += critic_loss * n;
            iou_sum += batch_iou(&x, &f.x_hat) * n;
            seen += idx.len();
        }
        let rec = EpochRecord {
            phase: 2,
            epoch,
            ae_loss: ae_sum / seen as f64,
            critic_loss: Some(critic_sum / seen as f64),
            reconstruction_iou: iou_sum / seen as f64,
        };
        info!(
            "phase 2 epoch {epoch}: ae {:.5} critic {:.5} iou {:.4}",
            rec.ae_loss,
            rec.critic_loss.unwrap_or_default(),
            rec.reconstruction_iou
        );
        report.epochs.push(rec);
    }
    Ok(report)
}
