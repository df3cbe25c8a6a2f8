//! Log-likelihoods and their gradients.
//!
//! The training objective over `N` annotated instances is
//! `(1/N) Σ_i log p(y_i | x_i) − (l2/2) ‖w‖²`. For parsing, `log p` of a tree
//! is `Σ_d log P(h_d | d) + log P(l_d | h_d → d)`.

use crate::corpus::Instance;
use crate::features::{dot, SparseVec};
use crate::tasks::TaskKind;

use super::encode::{encode, Example};
use super::{softmax_in_place, ModelError, Result, TaskModel};

/// Read-only view of a weight vector with its layout.
#[derive(Clone, Copy)]
pub(crate) struct Params<'a> {
    pub task: TaskKind,
    pub dim: usize,
    pub outputs: usize,
    pub weights: &'a [f64],
    /// Effective weights are `scale * weights`; lets training apply L2 decay lazily.
    pub scale: f64,
}

impl<'a> Params<'a> {
    pub fn of(model: &'a TaskModel) -> Self {
        Params {
            task: model.task,
            dim: model.space.dim(),
            outputs: model.outputs.len(),
            weights: &model.weights,
            scale: 1.0,
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.dim..(r + 1) * self.dim]
    }

    /// Scores of every output row for features `x`, starting at row `first`.
    pub fn output_scores(&self, x: &SparseVec, first: usize) -> Vec<f64> {
        (0..self.outputs).map(|k| self.scale * dot(self.row(first + k), x)).collect()
    }

    pub fn arc_score(&self, x: &SparseVec) -> f64 {
        self.scale * dot(self.row(0), x)
    }

    /// Head scores `s(h, d)` for `h ∈ 0..=n`; the self-loop entry is `-∞`.
    pub fn head_scores(&self, ex: &Example, n: usize, d: usize) -> Vec<f64> {
        (0..=n)
            .map(|h| if h == d { f64::NEG_INFINITY } else { self.arc_score(ex.arc(h, d)) })
            .collect()
    }
}

/// Destination for gradient contributions.
pub(crate) trait GradSink {
    fn add(&mut self, i: usize, v: f64);
}

impl GradSink for [f64] {
    fn add(&mut self, i: usize, v: f64) {
        self[i] += v;
    }
}

impl GradSink for Vec<f64> {
    fn add(&mut self, i: usize, v: f64) {
        self[i] += v;
    }
}

/// Dense buffer that remembers which entries were written, so a mini-batch
/// update only touches the active features.
pub(crate) struct SparseGrad {
    pub values: Vec<f64>,
    pub touched: Vec<usize>,
}

impl SparseGrad {
    pub fn new(len: usize) -> Self {
        SparseGrad {
            values: vec![0.0; len],
            touched: Vec::new(),
        }
    }
}

impl GradSink for SparseGrad {
    fn add(&mut self, i: usize, v: f64) {
        // An entry that returns to exactly zero may be listed twice; draining
        // resets it on the first visit, so the duplicate is harmless.
        if self.values[i] == 0.0 {
            self.touched.push(i);
        }
        self.values[i] += v;
    }
}

fn add_scaled(grad: &mut dyn GradSink, offset: usize, x: &SparseVec, scale: f64) {
    for &(i, v) in x {
        grad.add(offset + i as usize, scale * v);
    }
}

/// Adds `coef · (onehot(y) − p) ⊗ x` to the output rows starting at `first`.
fn softmax_grad(grad: &mut dyn GradSink, dim: usize, first: usize, probs: &[f64], gold: usize, x: &SparseVec, coef: f64) {
    for (k, &p) in probs.iter().enumerate() {
        let target = if k == gold { 1.0 } else { 0.0 };
        let c = coef * (target - p);
        if c != 0.0 {
            add_scaled(grad, (first + k) * dim, x, c);
        }
    }
}

/// Log-likelihood of one annotated example; when `grad` is given, adds
/// `coef · ∇ log p` to it.
pub(crate) fn example_loglik(params: Params<'_>, ex: &Example, mut grad: Option<&mut dyn GradSink>, coef: f64) -> f64 {
    let dim = params.dim;
    match ex {
        Example::Text { x, label } => {
            let y = label.expect("annotated example");
            let mut p = params.output_scores(x, 0);
            let sy = p[y];
            let lz = softmax_in_place(&mut p);
            if let Some(g) = grad.as_deref_mut() {
                softmax_grad(g, dim, 0, &p, y, x, coef);
            }
            sy - lz
        }
        Example::Tokens { xs, tags } => {
            let tags = tags.as_ref().expect("annotated example");
            let mut ll = 0.0;
            for (x, &y) in xs.iter().zip(tags) {
                let mut p = params.output_scores(x, 0);
                let sy = p[y];
                let lz = softmax_in_place(&mut p);
                if let Some(g) = grad.as_deref_mut() {
                    softmax_grad(g, dim, 0, &p, y, x, coef);
                }
                ll += sy - lz;
            }
            ll
        }
        Example::Tree { n, heads, labels, .. } => {
            let n = *n;
            let heads = heads.as_ref().expect("annotated example");
            let labels = labels.as_ref().expect("annotated example");
            let mut ll = 0.0;
            for d in 1..=n {
                let gold_head = heads[d - 1];
                let mut p = params.head_scores(ex, n, d);
                let sy = p[gold_head];
                let lz = softmax_in_place(&mut p);
                ll += sy - lz;
                if let Some(g) = grad.as_deref_mut() {
                    add_scaled(g, 0, ex.arc(gold_head, d), coef);
                    for (h, &ph) in p.iter().enumerate() {
                        if h != d && ph != 0.0 {
                            add_scaled(g, 0, ex.arc(h, d), -coef * ph);
                        }
                    }
                }

                let x = ex.arc(gold_head, d);
                let y = labels[d - 1];
                let mut q = params.output_scores(x, 1);
                let sy = q[y];
                let lz = softmax_in_place(&mut q);
                ll += sy - lz;
                if let Some(g) = grad.as_deref_mut() {
                    softmax_grad(g, dim, 1, &q, y, x, coef);
                }
            }
            ll
        }
    }
}

/// Mean log-likelihood minus the L2 penalty, and optionally its gradient.
pub(crate) fn objective_encoded(params: Params<'_>, examples: &[&Example], l2: f64, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let n = examples.len().max(1) as f64;
    let mut grad = want_grad.then(|| vec![0.0; params.weights.len()]);
    let mut ll = 0.0;
    for ex in examples {
        ll += example_loglik(params, ex, grad.as_mut().map(|g| g as &mut dyn GradSink), 1.0 / n);
    }
    let sq: f64 = params.weights.iter().map(|w| (params.scale * w).powi(2)).sum();
    if let Some(g) = grad.as_mut() {
        for (gi, wi) in g.iter_mut().zip(params.weights) {
            *gi -= l2 * params.scale * wi;
        }
    }
    (ll / n - 0.5 * l2 * sq, grad)
}

impl TaskModel {
    /// Training objective on annotated `instances` and its gradient with
    /// respect to [`TaskModel::weights`]. Works on untrained models.
    pub fn objective(&self, instances: &[&Instance], l2: f64) -> Result<(f64, Vec<f64>)> {
        let examples = self.encode_gold(instances)?;
        let refs: Vec<&Example> = examples.iter().collect();
        let (value, grad) = objective_encoded(Params::of(self), &refs, l2, true);
        Ok((value, grad.expect("gradient requested")))
    }

    /// Objective value only.
    pub fn objective_value(&self, instances: &[&Instance], l2: f64) -> Result<f64> {
        let examples = self.encode_gold(instances)?;
        let refs: Vec<&Example> = examples.iter().collect();
        Ok(objective_encoded(Params::of(self), &refs, l2, false).0)
    }

    pub(crate) fn encode_gold(&self, instances: &[&Instance]) -> Result<Vec<Example>> {
        instances
            .iter()
            .map(|inst| encode(self.task, &self.space, &self.outputs, inst, true))
            .collect::<Result<Vec<_>, ModelError>>()
    }
}
