//! Binary cross-entropy training of [`WdpnModel`] with hand-written gradients.

mod backprop;

pub use backprop::{backward, batch_gradient, bce_loss};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, LabeledExample};
use crate::nn::{BatchNormParams, DenseLayerParams, PointLayer, WdpnModel};
use crate::{rng, Error, Result, TOOL_VERSION};

/// Point-MLP widths; the last width is the latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    pub batchnorm: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 64],
            batchnorm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Weights start uniform in `[−s, s]` with `s = init_scale / √in_dim`.
    pub init_scale: f64,
    /// Fraction of examples held out for evaluation.
    pub holdout: f64,
    /// Weight of the previous value in the batch-norm running statistics.
    pub bn_momentum: f64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed,
            init_scale: 1.0,
            holdout: 0.25,
            bn_momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init scale must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("batch-norm momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub tool_version: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub arch: ArchConfig,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_balanced_accuracy: f64,
    /// Balanced accuracy on the held-out split (`None` without one).
    pub holdout_balanced_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub model_checksum: String,
}

/// Randomly initialised model; batch norm starts as identity statistics.
pub fn init_model(k: usize, d: usize, arch: &ArchConfig, init_scale: f64, seed: u64) -> Result<WdpnModel> {
    if arch.hidden.contains(&0) {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    let mut r = rng::substream(seed, 1);
    let mut dense = |in_dim: usize, out_dim: usize| {
        let s = init_scale / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| r.random_range(-s..=s)).collect();
        let b = (0..out_dim).map(|_| r.random_range(-s..=s)).collect();
        DenseLayerParams::new(in_dim, out_dim, w, b)
    };
    let mut layers = Vec::new();
    let mut width = 3;
    if k > 0 {
        for &h in &arch.hidden {
            layers.push(PointLayer {
                dense: dense(width, h)?,
                batchnorm: arch.batchnorm.then(|| BatchNormParams::identity(h)),
                relu: true,
            });
            width = h;
        }
    }
    let latent = if k == 0 { 0 } else { width };
    let fusion = dense(latent + d, 1)?;
    WdpnModel::new(k, d, layers, fusion)
}

/// Mean of per-class recalls at threshold `logit > 0`; 0.5 when only one
/// class is present.
pub fn balanced_accuracy(logits: &[f64], labels: &[u8]) -> f64 {
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&l, &y) in logits.iter().zip(labels) {
        let y = usize::from(y == 1);
        total[y] += 1;
        if usize::from(l > 0.0) == y {
            hit[y] += 1;
        }
    }
    if total[0] == 0 || total[1] == 0 {
        return 0.5;
    }
    (hit[0] as f64 / total[0] as f64 + hit[1] as f64 / total[1] as f64) / 2.0
}

pub fn evaluate(model: &WdpnModel, examples: &[&LabeledExample]) -> Result<f64> {
    let logits = examples
        .iter()
        .map(|e| model.logit(&e.input))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok(balanced_accuracy(&logits, &labels))
}

/// Seeded split into `(train, holdout)` example indices.
pub fn split_indices(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::substream(seed, 2));
    let n_hold = ((n as f64) * holdout).floor() as usize;
    let n_hold = n_hold.min(n.saturating_sub(1));
    let mut hold = idx[..n_hold].to_vec();
    let mut train = idx[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

fn update_running_stats(model: &mut WdpnModel, batch: &[&LabeledExample], momentum: f64) -> Result<()> {
    let n_layers = model.point_mlp().len();
    if model.num_points() == 0 || model.point_mlp().iter().all(|l| l.batchnorm.is_none()) {
        return Ok(());
    }
    // every layer's statistics come from the same pre-update forward pass
    let traces = batch
        .iter()
        .map(|e| backprop::forward_trace(model, &e.input))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..n_layers {
        let Some(bn) = model.point_mlp()[i].batchnorm.as_ref() else { continue };
        let c = bn.channels();
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut count = 0.0;
        for t in &traces {
            for pre in t.pre_activations(i) {
                for ch in 0..c {
                    sum[ch] += pre[ch];
                    sq[ch] += pre[ch] * pre[ch];
                }
                count += 1.0;
            }
        }
        let bn = model.point_mlp_mut()[i].batchnorm.as_mut().expect("checked above");
        for ch in 0..c {
            let mean = sum[ch] / count;
            let var = (sq[ch] / count - mean * mean).max(0.0);
            bn.running_mean[ch] = momentum * bn.running_mean[ch] + (1.0 - momentum) * mean;
            bn.running_var[ch] = momentum * bn.running_var[ch] + (1.0 - momentum) * var;
        }
    }
    Ok(())
}

/// Mini-batch training. Each step differentiates the model with its current
/// batch-norm statistics, applies the optimizer, then moves the running
/// statistics toward the batch's pre-normalisation moments.
pub fn train(dataset: &Dataset, arch: &ArchConfig, config: &TrainConfig) -> Result<(WdpnModel, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let (k, d) = (dataset.manifest.k, dataset.manifest.d);
    let mut model = init_model(k, d, arch, config.init_scale, config.seed)?;
    let (train_idx, hold_idx) = split_indices(dataset.len(), config.holdout, config.seed);
    let mut order = train_idx.clone();
    let mut shuffle = rng::substream(config.seed, 3);

    let n_params = model.num_parameters();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step = 0i32;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &dataset.examples[i]).collect();
            let (loss, grad) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            loss_sum += loss * batch.len() as f64;
            step += 1;
            let mut params = model.parameters();
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for i in 0..n_params {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                        params[i] -= config.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                }
            }
            model.set_parameters(&params)?;
            update_running_stats(&mut model, &batch, config.bn_momentum)?;
        }
        let epoch_loss = loss_sum / order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0, loss: epoch_loss });
        }
        epoch_losses.push(epoch_loss);
    }

    let subset = |idx: &[usize]| idx.iter().map(|&i| &dataset.examples[i]).collect::<Vec<_>>();
    let train_acc = evaluate(&model, &subset(&train_idx))?;
    let hold_acc = if hold_idx.is_empty() {
        None
    } else {
        Some(evaluate(&model, &subset(&hold_idx))?)
    };
    let report = TrainReport {
        tool_version: TOOL_VERSION.to_string(),
        seed: config.seed,
        config: config.clone(),
        arch: arch.clone(),
        epoch_losses,
        train_balanced_accuracy: train_acc,
        holdout_balanced_accuracy: hold_acc,
        n_train: train_idx.len(),
        n_holdout: hold_idx.len(),
        model_checksum: model.checksum(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_accuracy_conventions() {
        assert_eq!(balanced_accuracy(&[1.0, -1.0], &[1, 1]), 0.5);
        assert_eq!(balanced_accuracy(&[1.0, 1.0, -1.0, 1.0], &[1, 1, 0, 0]), 0.75);
        assert_eq!(balanced_accuracy(&[1.0, -1.0, -2.0], &[1, 0, 0]), 1.0);
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let (a, b) = split_indices(10, 0.3, 4);
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.3, 4), (a, b));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let arch = ArchConfig::default();
        let m = init_model(16, 0, &arch, 1.0, 9).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!(m.point_mlp()[0].dense.weights().iter().all(|w| w.abs() <= s));
        assert_eq!(m.checksum(), init_model(16, 0, &arch, 1.0, 9).unwrap().checksum());
        assert_eq!(m.latent_dim(), 64);
        let tab = init_model(0, 3, &arch, 1.0, 9).unwrap();
        assert_eq!(tab.num_parameters(), 4);
    }
}
