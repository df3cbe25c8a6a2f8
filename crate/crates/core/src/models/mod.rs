//! Log-linear task models over the shared hashed feature space.
//!
//! - classification: multinomial logistic regression over text features
//! - sequence tagging: independent per-token softmax over tags
//! - dependency parsing: arc-factored head softmax `P(h | d)` plus a label
//!   softmax `P(l | h → d)`, decoded with Chu-Liu/Edmonds
//!
//! Weights live in one dense vector. Classification and tagging use
//! `outputs × dim` rows; parsing uses one `dim` row for arc scores followed
//! by `labels × dim` rows for the label classifier.

mod checkpoint;
mod encode;
mod objective;
mod predict;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Instance;
use crate::features::FeatureSpace;
use crate::graph::GraphError;
use crate::tasks::{EvalError, TaskKind};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use encode::Example;
pub use predict::{ArcProbas, Parse};
pub use train::{train, train_traced, EarlyStopping, Progress, StopDecision, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has not been trained")]
    Untrained,
    #[error("model is for {found} but {expected} was requested")]
    WrongTask { expected: TaskKind, found: TaskKind },
    #[error("payload does not match a {0} model")]
    WrongPayload(TaskKind),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("label {0:?} is not in the model's label set")]
    UnknownLabel(String),
    #[error("instance {0} has no gold annotation")]
    MissingAnnotation(crate::corpus::InstanceId),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

fn default_learning_rates() -> Vec<f64> {
    vec![1.0, 4.0, 16.0]
}

/// Optimisation settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Searched in order; the best validation score wins, ties go to the earlier rate.
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rates: default_learning_rates(),
            batch_size: 32,
            max_epochs: 75,
            patience: 25,
            l2: 1e-4,
            rng_seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.learning_rates.is_empty() {
            errs.push("training.learning_rates must not be empty".to_string());
        }
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            errs.push("training.learning_rates must be positive and finite".to_string());
        }
        if self.batch_size == 0 {
            errs.push("training.batch_size must be positive".to_string());
        }
        if self.max_epochs == 0 {
            errs.push("training.max_epochs must be positive".to_string());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            errs.push(format!(
                "training.patience must be in 1..=max_epochs ({}), got {}",
                self.max_epochs, self.patience
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            errs.push("training.l2 must be non-negative".to_string());
        } else if let Some(lr) = self.learning_rates.iter().find(|&&lr| lr * self.l2 >= 1.0) {
            errs.push(format!("training.l2 × learning rate must be below 1 (rate {lr})"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// A probabilistic predictor for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskModel {
    task: TaskKind,
    space: FeatureSpace,
    outputs: Vec<String>,
    weights: Vec<f64>,
    fitted: bool,
}

impl TaskModel {
    /// Untrained model with zero weights. `outputs` are the classes, tags,
    /// or dependency labels, depending on the task.
    pub fn new(task: TaskKind, space: FeatureSpace, outputs: Vec<String>) -> Result<Self> {
        space.validate().map_err(|e| ModelError::Config(e.to_string()))?;
        if outputs.is_empty() {
            return Err(ModelError::Config(format!("empty label vocabulary for {task}")));
        }
        let len = weight_len(task, &space, outputs.len());
        Ok(TaskModel {
            task,
            space,
            outputs,
            weights: vec![0.0; len],
            fitted: false,
        })
    }

    /// Model with explicit weights, usable for prediction immediately.
    pub fn with_weights(task: TaskKind, space: FeatureSpace, outputs: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(task, space, outputs)?;
        if weights.len() != m.weights.len() {
            return Err(ModelError::Config(format!(
                "expected {} weights, got {}",
                m.weights.len(),
                weights.len()
            )));
        }
        m.weights = weights;
        m.fitted = true;
        Ok(m)
    }

    /// Output inventory gathered from annotated instances, sorted.
    pub fn label_inventory<'a>(task: TaskKind, instances: impl IntoIterator<Item = &'a Instance>) -> Vec<String> {
        use crate::corpus::Payload;
        let mut set = std::collections::BTreeSet::new();
        for inst in instances {
            match (&inst.payload, task) {
                (Payload::Classification(c), TaskKind::Classification) => set.extend(c.label.iter().cloned()),
                (Payload::Tagged(s), TaskKind::SequenceTagging) => set.extend(s.tags.iter().flatten().cloned()),
                (Payload::Tree(t), TaskKind::DependencyParsing) => set.extend(t.labels.iter().flatten().cloned()),
                _ => {}
            }
        }
        set.into_iter().collect()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn feature_space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Zero weights and mark the model untrained.
    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        self.fitted = false;
    }

    fn require(&self, task: TaskKind) -> Result<()> {
        if self.task != task {
            return Err(ModelError::WrongTask {
                expected: task,
                found: self.task,
            });
        }
        if !self.fitted {
            return Err(ModelError::Untrained);
        }
        Ok(())
    }
}

pub(crate) fn weight_len(task: TaskKind, space: &FeatureSpace, outputs: usize) -> usize {
    match task {
        TaskKind::Classification | TaskKind::SequenceTagging => outputs * space.dim(),
        TaskKind::DependencyParsing => (outputs + 1) * space.dim(),
    }
}

/// Numerically stable in-place softmax; returns the log normaliser.
pub(crate) fn softmax_in_place(scores: &mut [f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
    max + sum.ln()
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
