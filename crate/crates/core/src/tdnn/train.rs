use ndarray::ArrayView2;

use super::model::{Mode, TdnnModel};
use super::optim::{sgd_step, OptimizerState};
use super::TdnnError;
use crate::dataset::{sample_labels, SamplerConfig, WindowExample};
use crate::ensemble::evaluate;
use crate::types::{argmax, PunctClass};

/// Batch loss above which training is declared diverged: half the loss of
/// a prediction sitting on the probability floor, `−ln(PROB_FLOOR) / 2`.
pub const DIVERGENCE_LOSS: f64 = 13.815510557964274;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub sampler: SamplerConfig,
    /// Stop after the first epoch whose training accuracy reaches this.
    pub target_accuracy: Option<f64>,
    /// Measure Eval-mode accuracy on the training set after every epoch.
    pub track_accuracy: bool,
    /// Abort with [`TdnnError::Diverged`] when a batch loss exceeds this.
    pub divergence_loss: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            sampler: SamplerConfig::default(),
            target_accuracy: None,
            track_accuracy: true,
            divergence_loss: Some(DIVERGENCE_LOSS),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub train_accuracy: Option<f64>,
    /// Overall F1 (percent) on the validation set, when one is supplied.
    pub val_f1: Option<f64>,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\tsteps\tmean_loss\ttrain_accuracy\tval_f1_overall";

    pub fn tsv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        format!("{}\t{}\t{:.6}\t{}\t{}", self.epoch, self.steps, self.mean_loss, opt(self.train_accuracy), opt(self.val_f1))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

fn views(examples: &[WindowExample]) -> Vec<ArrayView2<'_, f32>> {
    examples.iter().map(|e| e.window.view()).collect()
}

/// Eval-mode argmax predictions.
pub fn predict_classes(model: &TdnnModel, examples: &[WindowExample]) -> Result<Vec<PunctClass>, TdnnError> {
    Ok(model.predict_proba(&views(examples), 64)?.iter().map(argmax).collect())
}

pub fn accuracy(model: &TdnnModel, examples: &[WindowExample]) -> Result<f64, TdnnError> {
    let preds = predict_classes(model, examples)?;
    let correct = preds.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    Ok(correct as f64 / examples.len().max(1) as f64)
}

pub fn train(
    model: &mut TdnnModel,
    opt: &mut OptimizerState,
    examples: &[WindowExample],
    validation: Option<&[WindowExample]>,
    options: &TrainOptions,
) -> Result<TrainingLog, TdnnError> {
    train_with_callback(model, opt, examples, validation, options, &mut |_| {})
}

/// Mini-batch training. Each epoch draws `sampler.epoch_size` indices on
/// ChaCha stream `epoch` and steps once per consecutive chunk of
/// `batch_size` (the last chunk may be shorter).
pub fn train_with_callback(
    model: &mut TdnnModel,
    opt: &mut OptimizerState,
    examples: &[WindowExample],
    validation: Option<&[WindowExample]>,
    options: &TrainOptions,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainingLog, TdnnError> {
    if examples.is_empty() {
        return Err(TdnnError::EmptyDataset);
    }
    if options.batch_size == 0 {
        return Err(TdnnError::Config("batch_size must be positive".into()));
    }
    let mut log = TrainingLog::default();
    let labels: Vec<PunctClass> = examples.iter().map(|e| e.label).collect();
    let previous_mode = model.mode;
    model.set_mode(Mode::Train);

    for epoch in 0..options.epochs {
        let order = sample_labels(&labels, &options.sampler, epoch as u64).map_err(|_| TdnnError::EmptyDataset)?;
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<ArrayView2<'_, f32>> = chunk.iter().map(|&i| examples[i].window.view()).collect();
            let batch_labels: Vec<PunctClass> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = model.forward_batch(&batch)?;
            let loss = cache.loss(&batch_labels);
            if !loss.is_finite() {
                return Err(TdnnError::NonFiniteActivation { stage: "loss".into() });
            }
            if options.divergence_loss.is_some_and(|limit| loss > limit) {
                return Err(TdnnError::Diverged { epoch: epoch + 1, step: steps + 1, loss });
            }
            let grads = model.backward(&cache, &batch_labels)?;
            model.update_running_stats(&cache);
            sgd_step(model, &grads, opt)?;
            if !model.params().is_finite() {
                return Err(TdnnError::NonFiniteActivation { stage: "parameters after update".into() });
            }
            loss_sum += loss;
            steps += 1;
        }

        let train_accuracy = if options.track_accuracy || options.target_accuracy.is_some() {
            Some(accuracy(model, examples)?)
        } else {
            None
        };
        let val_f1 = match validation {
            Some(val) if !val.is_empty() => {
                let preds = predict_classes(model, val)?;
                let golds: Vec<PunctClass> = val.iter().map(|e| e.label).collect();
                Some(evaluate(&preds, &golds).map_err(|e| TdnnError::Shape(e.to_string()))?.overall_f1)
            }
            _ => None,
        };
        let entry = EpochLog { epoch: epoch + 1, steps, mean_loss: loss_sum / steps.max(1) as f64, train_accuracy, val_f1 };
        on_epoch(&entry);
        log.epochs.push(entry);
        if let (Some(target), Some(acc)) = (options.target_accuracy, train_accuracy) {
            if acc >= target {
                break;
            }
        }
    }
    model.set_mode(previous_mode);
    Ok(log)
}
