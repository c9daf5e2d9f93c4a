//! Minibatch SGD on the adaptive loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::{to_tensors, DiagnosisModel};
use super::loss::{adaptive_loss, TaskState};
use super::metrics::{mean_f1_with_positives, metric_counts, MetricCounts, THRESHOLD};
use crate::dsp::ModelInput;
use crate::error::{Error, Result};
use crate::nn::{Sgd, Tensor, DEFAULT_LR, DEFAULT_MOMENTUM};
use crate::seed::{self, stream};

/// One training example by reference.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a ModelInput,
    pub labels: &'a [u8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm cap per step.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            epochs: 2,
            batch_size: 16,
            lr: DEFAULT_LR,
            momentum: DEFAULT_MOMENTUM,
            clip_norm: None,
            seed: 0,
        }
    }
}

/// Training log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample adaptive loss.
    pub loss: f64,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    /// Mean F1 over tasks with positives; `None` when no task has any.
    pub mean_f1: Option<f64>,
    /// Loss of the last epoch (or of the evaluation pass when no epoch ran).
    pub loss: f64,
    pub counts: Vec<MetricCounts>,
    pub log: Vec<EpochLog>,
}

/// Forward and backward over a batch; returns predictions and loss sum, and
/// accumulates the batch-mean gradient into a fresh gradient set.
fn batch_step(
    model: &DiagnosisModel,
    batch: &[Sample<'_>],
    state: &TaskState,
) -> Result<(Vec<Vec<f64>>, f64, crate::nn::ParamSet<f32>)> {
    let mut grads = model.params.zeros_like();
    let mut preds = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let (y, cache) = model
            .net
            .forward(&model.params, to_tensors(&model.net, s.input)?)?;
        let y64: Vec<f64> = y.data.iter().map(|&v| v as f64).collect();
        let out = adaptive_loss(&[&y64[..]], &[s.labels], state)?;
        loss += out.total;
        let g = Tensor::from_vec(out.grad[0].iter().map(|&g| (g * scale) as f32).collect());
        model
            .net
            .backward_into(&model.params, cache, &g, &mut grads)?;
        preds.push(y64);
    }
    Ok((preds, loss, grads))
}

/// Runs `cfg.epochs` epochs. `state.f` is refreshed from each epoch's
/// training predictions; `opt` carries momentum between calls.
pub fn train_local(
    model: &mut DiagnosisModel,
    data: &[Sample<'_>],
    cfg: &LocalConfig,
    state: &mut TaskState,
    opt: &mut Sgd<f32>,
) -> Result<LocalOutcome> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(Error::Data("no training batch can be formed".into()));
    }
    if state.n_tasks() != model.n_tasks {
        return Err(Error::Data(format!(
            "task state has {} tasks, model {}",
            state.n_tasks(),
            model.n_tasks
        )));
    }
    let labels: Vec<&[u8]> = data.iter().map(|s| s.labels).collect();
    if cfg.epochs == 0 {
        let preds = data
            .iter()
            .map(|s| model.predict(s.input))
            .collect::<Result<Vec<_>>>()?;
        let loss = adaptive_loss(&preds, &labels, state)?.total / data.len() as f64;
        let counts = metric_counts(&preds, &labels, THRESHOLD);
        return Ok(LocalOutcome {
            mean_f1: mean_f1_with_positives(&counts),
            loss,
            counts,
            log: Vec::new(),
        });
    }
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.clip_norm = cfg.clip_norm;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut counts = Vec::new();
    let mut loss = 0.0;
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(cfg.seed, &[stream::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let mut preds = vec![Vec::new(); data.len()];
        let mut total = 0.0;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (p, l, grads) = batch_step(model, &batch, state)?;
            total += l;
            for (&i, y) in chunk.iter().zip(p) {
                preds[i] = y;
            }
            opt.step(&mut model.params, &grads)?;
        }
        counts = metric_counts(&preds, &labels, THRESHOLD);
        state.update(&counts);
        loss = total / data.len() as f64;
        log.push(EpochLog {
            epoch,
            loss,
            f1: counts.iter().map(|c| c.metrics().f1).collect(),
        });
    }
    Ok(LocalOutcome {
        mean_f1: mean_f1_with_positives(&counts),
        loss,
        counts,
        log,
    })
}

/// Writes the training log as CSV: epoch, loss, one F1 column per task.
pub fn write_epoch_log(
    path: &std::path::Path,
    log: &[EpochLog],
    task_names: &[&str],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    header.extend(task_names.iter().map(|n| format!("f1_{n}")));
    w.write_record(&header)?;
    for row in log {
        let mut rec = vec![row.epoch.to_string(), format!("{}", row.loss)];
        rec.extend(row.f1.iter().map(|f| format!("{f}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
