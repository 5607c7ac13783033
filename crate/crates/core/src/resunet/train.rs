use super::infer::{argmax_mask, batch_from_samples};
use super::layers::{weighted_cross_entropy, Mode, Params};
use super::net::ResUNetPlus;
use super::NetError;
use crate::autolabel::{LabeledDataset, MaskSource, Sample, Split};
use crate::eval::Confusion;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_iou: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ResUNetPlus,
    pub history: Vec<EpochRecord>,
    pub class_weights: Vec<f64>,
}

/// SGD with classical momentum: `v <- mu v - lr g`, `theta <- theta + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(net: &ResUNetPlus, learning_rate: f64, momentum: f64) -> Self {
        let mut p = Vec::new();
        net.params("", &mut p);
        Self {
            learning_rate,
            momentum,
            velocity: p.iter().map(|(_, s)| vec![0.0; s.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut ResUNetPlus, grads: &ResUNetPlus) {
        let mut g = Vec::new();
        grads.params("", &mut g);
        let mut p = Vec::new();
        net.params_mut("", &mut p);
        for ((v, (_, theta)), (_, grad)) in self.velocity.iter_mut().zip(p).zip(g) {
            for ((vi, ti), gi) in v.iter_mut().zip(theta.iter_mut()).zip(grad) {
                *vi = self.momentum * *vi - self.learning_rate * gi;
                *ti += *vi;
            }
        }
    }
}

/// Inverse-frequency class weights `total / (classes * count_c)` over the
/// given samples; a class with no pixels gets weight 1.
pub fn inverse_frequency_weights<'a>(samples: impl IntoIterator<Item = &'a Sample>, classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for s in samples {
        for &l in s.mask.labels() {
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { total as f64 / (classes * c) as f64 })
        .collect()
}

/// Runs one optimisation step on a batch; returns the batch loss.
pub fn train_step(
    net: &mut ResUNetPlus,
    opt: &mut Sgd,
    x: &super::tensor::Tensor,
    labels: &[u8],
    weights: &[f64],
) -> Result<f64, NetError> {
    let (loss, grads, cache) = net.loss_and_grads(x, labels, weights, Mode::Train)?;
    if !loss.is_finite() {
        return Err(NetError::DivergenceDetected {
            epoch: 0,
            step: 0,
            loss,
            history: Vec::new(),
        });
    }
    net.absorb(&cache);
    opt.step(net, &grads);
    Ok(loss)
}

/// Loss and pooled confusion over a split, evaluated in eval mode.
pub fn evaluate_split(
    net: &ResUNetPlus,
    samples: &[&Sample],
    weights: &[f64],
) -> Result<(f64, Confusion), NetError> {
    let mut confusion = Confusion::default();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for chunk in samples.chunks(net.config.batch_size.max(1)) {
        let (x, labels) = batch_from_samples(chunk, net.config.in_channels)?;
        let (logits, _) = net.forward(&x, Mode::Eval)?;
        let (loss, _) = weighted_cross_entropy(&logits, &labels, weights);
        loss_sum += loss;
        batches += 1;
        for (b, s) in chunk.iter().enumerate() {
            let pred = argmax_mask(&logits, b, MaskSource::Predicted);
            confusion.add(&pred, &s.mask).map_err(|e| NetError::InvalidConfig(e.to_string()))?;
        }
    }
    Ok((loss_sum / batches.max(1) as f64, confusion))
}

/// Trains for `config.max_epochs` epochs over the training split, recording
/// the mean training loss and validation loss/IoU after each epoch.
///
/// Mini-batch order is reshuffled every epoch from `config.seed`, so the
/// whole run, including the history, is a pure function of its inputs.
pub fn train(mut net: ResUNetPlus, dataset: &LabeledDataset) -> Result<TrainOutcome, NetError> {
    let cfg = net.config.clone();
    cfg.validate()?;
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for s in &dataset.samples {
        if s.image.rows != cfg.input_tile || s.image.cols != cfg.input_tile {
            return Err(NetError::ShapeMismatch {
                expected: vec![cfg.input_tile, cfg.input_tile],
                got: vec![s.image.rows, s.image.cols],
            });
        }
    }
    let weights = match &cfg.class_weights {
        Some(w) => w.clone(),
        None => inverse_frequency_weights(train_idx.iter().map(|&i| &dataset.samples[i]), cfg.classes),
    };
    let val: Vec<&Sample> = dataset
        .indices(Split::Validation)
        .into_iter()
        .map(|i| &dataset.samples[i])
        .collect();

    let mut opt = Sgd::new(&net, cfg.learning_rate, cfg.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut order = train_idx.clone();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            let (x, labels) = batch_from_samples(&batch, cfg.in_channels)?;
            match train_step(&mut net, &mut opt, &x, &labels, &weights) {
                Ok(loss) => loss_sum += loss,
                Err(NetError::DivergenceDetected { loss, .. }) => {
                    return Err(NetError::DivergenceDetected {
                        epoch,
                        step: steps + 1,
                        loss,
                        history,
                    })
                }
                Err(e) => return Err(e),
            }
            steps += 1;
        }
        let (val_loss, val_iou) = if val.is_empty() {
            (None, None)
        } else {
            let (l, c) = evaluate_split(&net, &val, &weights)?;
            (Some(l), Some(c.iou().mean))
        };
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_loss,
            val_iou,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:?}, val IoU {:?}",
            rec.train_loss,
            rec.val_loss,
            rec.val_iou
        );
        history.push(rec);
    }
    Ok(TrainOutcome {
        net,
        history,
        class_weights: weights,
    })
}
