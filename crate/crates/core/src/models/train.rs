use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Instance;

use super::encode::Example;
use super::objective::{example_loglik, objective_encoded, GradSink, Params, SparseGrad};
use super::predict::evaluate_examples;
use super::{ModelError, Result, TaskModel, TrainingConfig};

/// Patience-based early stopping on a validation score (higher is better).
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the score of `epoch` (1-based). Only strict improvements reset
    /// the patience counter.
    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// One epoch of one learning-rate run.
#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub learning_rate: f64,
    pub epoch: usize,
    pub validation_score: f64,
    /// Full-data training objective after the epoch, when tracing.
    pub train_objective: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TaskModel,
    pub validation_score: f64,
    pub learning_rate: f64,
    pub best_epoch: usize,
    pub history: Vec<Progress>,
}

/// Mini-batch gradient ascent on the task log-likelihood with L2 penalty.
///
/// Each learning rate starts from zero weights and the same shuffling
/// stream; training stops once the validation metric has not improved for
/// `patience` epochs. The weights of the best validation epoch of the best
/// learning rate are returned.
pub fn train(model: &TaskModel, labeled: &[&Instance], validation: &[&Instance], config: &TrainingConfig) -> Result<TrainOutcome> {
    train_impl(model, labeled, validation, config, false)
}

/// As [`train`], also recording the full-data objective after every epoch.
pub fn train_traced(model: &TaskModel, labeled: &[&Instance], validation: &[&Instance], config: &TrainingConfig) -> Result<TrainOutcome> {
    train_impl(model, labeled, validation, config, true)
}

fn train_impl(
    model: &TaskModel,
    labeled: &[&Instance],
    validation: &[&Instance],
    config: &TrainingConfig,
    trace: bool,
) -> Result<TrainOutcome> {
    config.validate().map_err(|e| ModelError::Config(e.join("; ")))?;
    if labeled.is_empty() {
        return Err(ModelError::Config("no labeled training instances".into()));
    }
    if validation.is_empty() {
        return Err(ModelError::Config("no validation instances".into()));
    }
    let train_ex = model.encode_gold(labeled)?;
    let val_ex = model.encode_gold(validation)?;
    let val_refs: Vec<&Example> = val_ex.iter().collect();
    let train_refs: Vec<&Example> = train_ex.iter().collect();

    let dim = model.space.dim();
    let n_out = model.outputs.len();
    let len = model.weights.len();
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, Vec<f64>)> = None;

    for &lr in &config.learning_rates {
        // Weights are `scale * v`; the L2 shrinkage of every step is folded
        // into `scale` so that a step only costs the batch's active features.
        let mut v = vec![0.0; len];
        let mut scale = 1.0f64;
        let mut grad = SparseGrad::new(len);
        let mut best_weights = v.clone();
        let mut stopper = EarlyStopping::new(config.patience);
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut order: Vec<usize> = (0..train_ex.len()).collect();
        let decay = 1.0 - lr * config.l2;

        for epoch in 1..=config.max_epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size) {
                let params = Params {
                    task: model.task,
                    dim,
                    outputs: n_out,
                    weights: &v,
                    scale,
                };
                let coef = 1.0 / batch.len() as f64;
                for &i in batch {
                    example_loglik(params, &train_ex[i], Some(&mut grad as &mut dyn GradSink), coef);
                }
                scale *= decay;
                let step = lr / scale;
                for &i in &grad.touched {
                    v[i] += step * grad.values[i];
                    grad.values[i] = 0.0;
                }
                grad.touched.clear();
                if scale < 1e-6 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    scale = 1.0;
                }
            }
            let params = Params {
                task: model.task,
                dim,
                outputs: n_out,
                weights: &v,
                scale,
            };
            let counts = evaluate_examples(params, &model.outputs, &val_refs)?;
            let score = counts.values()[model.task.primary_metric()];
            let train_objective = trace.then(|| objective_encoded(params, &train_refs, config.l2, false).0);
            history.push(Progress {
                learning_rate: lr,
                epoch,
                validation_score: score,
                train_objective,
            });
            match stopper.observe(epoch, score) {
                StopDecision::Improved => {
                    for (b, w) in best_weights.iter_mut().zip(&v) {
                        *b = scale * w;
                    }
                }
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            }
        }
        log::debug!(
            "lr {lr}: best validation {:.4} at epoch {}",
            stopper.best(),
            stopper.best_epoch()
        );
        let better = best.as_ref().is_none_or(|(score, ..)| stopper.best() > *score);
        if better {
            best = Some((stopper.best(), lr, stopper.best_epoch(), best_weights));
        }
    }

    let (validation_score, learning_rate, best_epoch, weights) = best.expect("at least one learning rate");
    let mut trained = model.clone();
    trained.weights = weights;
    trained.fitted = true;
    Ok(TrainOutcome {
        model: trained,
        validation_score,
        learning_rate,
        best_epoch,
        history,
    })
}
