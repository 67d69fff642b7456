//! Mini-batch training loops for the residual generator and the skill
//! classifier. Both run shuffled mini-batch Adam; the classifier additionally
//! holds out a stratified validation split and stops early once accuracy
//! fails to improve for `patience` consecutive epochs.

use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{adam_step, AdamState};
use super::classifier::SkillClassifier;
use super::tensor::Tensor;
use super::vdsr::ResidualNet;
use crate::error::{Error, Result};

/// Optimizer and schedule options for one training run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Consecutive non-improving validation epochs before stopping.
    pub patience: usize,
    /// Accepted for configuration parity; not consulted by either loop.
    pub max_time_step: u64,
}

impl TrainOptions {
    /// Residual-generator defaults: lr 1e-3, Adam (0.9, 0.999), batch 20,
    /// 5 epochs.
    pub fn vdsr_defaults() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 20,
            epochs: 5,
            patience: 5,
            max_time_step: 1000,
        }
    }

    /// Classifier defaults: lr 1e-3, Adam (0.9, 0.9999), batch 32, 50 epochs,
    /// patience 5.
    pub fn classifier_defaults() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.9999,
            batch_size: 32,
            epochs: 50,
            patience: 5,
            max_time_step: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::InvalidInput("Adam betas must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trains the residual generator on `(genome, target-matrix)` pairs with MSE
/// over the composed prediction `broadcast(x) + R`. Returns the mean training
/// loss per epoch.
pub fn train_vdsr<R: Rng>(
    net: &mut ResidualNet,
    dataset: &[(Vec<f64>, Tensor)],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    opts.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("vdsr training set"));
    }
    let mut params = net.params_flat();
    let mut state = AdamState::new(params.len());
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(opts.batch_size) {
            let mut grads = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (x, target) = &dataset[idx];
                let (loss, g) = net.loss_and_grads_mse(x, target)?;
                batch_loss += loss;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            adam_step(&mut params, &grads, &mut state, opts.learning_rate, opts.beta1, opts.beta2);
            net.set_params_flat(&params);
            loss_sum += batch_loss;
            seen += batch.len();
        }
        epoch_losses.push(loss_sum / seen as f64);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("training diverged to non-finite parameters".into()));
    }
    net.mark_trained();
    Ok(epoch_losses)
}

/// Outcome of one classifier training run.
#[derive(Debug, Clone)]
pub struct ClassifierTrainReport {
    /// Validation accuracy after each completed epoch.
    pub val_accuracy: Vec<f64>,
    /// Best accuracy observed; the returned parameters correspond to it.
    pub best_accuracy: f64,
    pub epochs_run: usize,
}

/// Trains the skill classifier on `(matrix, label)` pairs with cross-entropy.
///
/// The dataset is split 80/20 stratified by class. Training stops early after
/// `patience` consecutive epochs whose validation accuracy does not exceed
/// the running maximum, and the parameters of the best epoch are restored.
pub fn train_classifier<R: Rng>(
    net: &mut SkillClassifier,
    dataset: &[(Tensor, usize)],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<ClassifierTrainReport> {
    opts.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("classifier training set"));
    }
    let (train_idx, val_idx) = stratified_split(dataset, rng);
    let classes: std::collections::BTreeSet<usize> =
        train_idx.iter().map(|&i| dataset[i].1).collect();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }

    let mut params = net.params_flat();
    let mut state = AdamState::new(params.len());
    let mut best_params = params.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut stall = 0usize;
    let mut val_accuracy = Vec::new();
    let mut order = train_idx.clone();

    for _epoch in 0..opts.epochs {
        order.shuffle(rng);
        for batch in order.chunks(opts.batch_size) {
            let mut grads = vec![0.0; params.len()];
            for &idx in batch {
                let (matrix, label) = &dataset[idx];
                let (_, g) = net.loss_and_grads_ce(matrix, *label)?;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            adam_step(&mut params, &grads, &mut state, opts.learning_rate, opts.beta1, opts.beta2);
            net.set_params_flat(&params);
        }

        // When every class is a singleton the holdout is empty; fall back to
        // training accuracy for the stopping signal.
        let eval_idx = if val_idx.is_empty() { &train_idx } else { &val_idx };
        let acc = accuracy(net, dataset, eval_idx)?;
        val_accuracy.push(acc);
        if acc > best_accuracy {
            best_accuracy = acc;
            best_params.copy_from_slice(&params);
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.patience {
                break;
            }
        }
    }

    net.set_params_flat(&best_params);
    net.mark_trained();
    Ok(ClassifierTrainReport {
        epochs_run: val_accuracy.len(),
        val_accuracy,
        best_accuracy,
    })
}

/// Classification accuracy over the chosen subset.
pub fn accuracy(
    net: &SkillClassifier,
    dataset: &[(Tensor, usize)],
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for &i in indices {
        let (matrix, label) = &dataset[i];
        let logits = net.logits(matrix)?;
        if super::classifier::argmax_tie_lowest(&logits) == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / indices.len() as f64)
}

/// 80/20 split stratified by class; every class with at least two samples
/// contributes at least one validation sample.
fn stratified_split<R: Rng>(
    dataset: &[(Tensor, usize)],
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, (_, label)) in dataset.iter().enumerate() {
        by_class.entry(*label).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut indices) in by_class {
        indices.shuffle(rng);
        let n_val = if indices.len() >= 2 { (indices.len() / 5).max(1) } else { 0 };
        val.extend_from_slice(&indices[..n_val]);
        train.extend_from_slice(&indices[n_val..]);
    }
    (train, val)
}
