//! Trainers and loss evaluators for the model classes contributions are
//! measured on.

mod linear;
mod logistic;
mod mlp;

pub use linear::{fit_ols, LinearModel};
pub use logistic::{fit_logistic, training_gradient_norm, training_objective, LogisticModel, NewtonOptions};
pub use mlp::{fit_mlp, MlpModel, MlpOptions};

pub(crate) use logistic::{sigmoid, softplus};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LinearPopulation, Task};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_FLOOR, 1 − PROB_FLOOR]` in cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    #[serde(default)]
    pub fit_intercept: bool,
    #[serde(default = "yes")]
    pub ridge_fallback: bool,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { fit_intercept: false, ridge_fallback: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "yes")]
    pub fit_intercept: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2: default_l2(), fit_intercept: true, tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_mlp_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Weight-initialization seed.
    #[serde(default)]
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            width: default_width(),
            weight_decay: default_weight_decay(),
            lr: default_mlp_lr(),
            epochs: default_epochs(),
            seed: 0,
        }
    }
}

fn yes() -> bool {
    true
}
fn default_l2() -> f64 {
    1e-4
}
fn default_tol() -> f64 {
    1e-7
}
fn default_max_iter() -> usize {
    100
}
fn default_width() -> usize {
    32
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_mlp_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    200
}

/// Which learner to run and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    LinearRegression(LinearParams),
    LogisticRegression(LogisticParams),
    Mlp(MlpParams),
    /// Ignores its training data and always emits `output` (class
    /// probabilities, or a single regression value). Used as a control.
    Constant { output: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp,
    Constant,
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::LinearRegression(_) => ModelKind::LinearRegression,
            ModelSpec::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
            ModelSpec::Constant { .. } => ModelKind::Constant,
        }
    }

    pub fn logistic() -> Self {
        ModelSpec::LogisticRegression(LogisticParams::default())
    }

    pub fn ols() -> Self {
        ModelSpec::LinearRegression(LinearParams::default())
    }

    /// Copy with the weight-init seed replaced (only meaningful for `Mlp`).
    pub fn with_init_seed(&self, seed: u64) -> Self {
        match self {
            ModelSpec::Mlp(p) => ModelSpec::Mlp(MlpParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }

    /// Whether a solution for `D` is a valid starting point for `D ∪ {z}`.
    pub fn supports_warm_start(&self) -> bool {
        matches!(self, ModelSpec::LogisticRegression(_))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match self {
            ModelSpec::LinearRegression(_) => Ok(()),
            ModelSpec::LogisticRegression(p) => {
                if !(p.l2 >= 0.0) || !(p.tol > 0.0) || p.max_iter == 0 {
                    return bad("logistic regression needs l2 >= 0, tol > 0, max_iter >= 1");
                }
                Ok(())
            }
            ModelSpec::Mlp(p) => {
                if p.width == 0 || !(p.lr > 0.0) || !(p.weight_decay >= 0.0) {
                    return bad("mlp needs width >= 1, lr > 0, weight_decay >= 0");
                }
                Ok(())
            }
            ModelSpec::Constant { output } => {
                if output.is_empty() {
                    return bad("constant model needs a non-empty output");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Linear(LinearModel),
    Logistic(LogisticModel),
    Mlp(MlpModel),
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: Params,
    pub task: Task,
    pub d: usize,
    pub training_size: usize,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            Params::Linear(_) => ModelKind::LinearRegression,
            Params::Logistic(_) => ModelKind::LogisticRegression,
            Params::Mlp(_) => ModelKind::Mlp,
            Params::Constant(_) => ModelKind::Constant,
        }
    }

    /// Class probabilities; `out.len()` must equal the number of classes.
    pub fn predict_proba(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.params {
            Params::Logistic(m) => m.predict_proba(x, out),
            Params::Mlp(m) if m.task.is_classification() => m.predict_proba(x, out),
            Params::Constant(p) if p.len() == out.len() => out.copy_from_slice(p),
            _ => return Err(Error::TaskMismatch("model does not produce class probabilities".into())),
        }
        Ok(())
    }

    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        match &self.params {
            Params::Linear(m) => Ok(m.predict(x)),
            Params::Mlp(m) if !m.task.is_classification() => Ok(m.predict_value(x)),
            Params::Constant(p) if p.len() == 1 => Ok(p[0]),
            _ => Err(Error::TaskMismatch("model does not produce regression values".into())),
        }
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match &self.params {
            Params::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match &self.params {
            Params::Linear(m) => Some(m),
            _ => None,
        }
    }
}

pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel> {
    train_warm(spec, data, None)
}

/// Like [`train`], but convex learners may start from `init`'s parameters.
/// The returned optimum does not depend on the start beyond the solver
/// tolerance.
pub fn train_warm(spec: &ModelSpec, data: &Dataset, init: Option<&TrainedModel>) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::Insufficient("cannot train on an empty dataset".into()));
    }
    let task = data.task();
    let params = match spec {
        ModelSpec::LinearRegression(p) => {
            if task.is_classification() {
                return Err(Error::TaskMismatch("linear regression needs a regression task".into()));
            }
            Params::Linear(fit_ols(data, p.fit_intercept, p.ridge_fallback)?)
        }
        ModelSpec::LogisticRegression(p) => {
            let Task::Classification { num_classes } = task else {
                return Err(Error::TaskMismatch("logistic regression needs a classification task".into()));
            };
            let opts = NewtonOptions { l2: p.l2, fit_intercept: p.fit_intercept, tol: p.tol, max_iter: p.max_iter };
            let start = init.and_then(TrainedModel::as_logistic).map(|m| m.params.as_slice());
            Params::Logistic(fit_logistic(data, num_classes, &opts, start)?)
        }
        ModelSpec::Mlp(p) => Params::Mlp(fit_mlp(
            data,
            &MlpOptions { width: p.width, weight_decay: p.weight_decay, lr: p.lr, epochs: p.epochs, seed: p.seed },
        )?),
        ModelSpec::Constant { output } => {
            let expected = task.num_classes().unwrap_or(1);
            if output.len() != expected {
                return Err(Error::DimensionMismatch { expected, got: output.len() });
            }
            Params::Constant(output.clone())
        }
    };
    Ok(TrainedModel { params, task, d: data.dim(), training_size: data.len() })
}

fn check_compatible(model: &TrainedModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Insufficient("evaluation set is empty".into()));
    }
    if data.dim() != model.d {
        return Err(Error::DimensionMismatch { expected: model.d, got: data.dim() });
    }
    if data.task() != model.task {
        return Err(Error::TaskMismatch(format!("model task {:?}, data task {:?}", model.task, data.task())));
    }
    Ok(())
}

/// Mean cross-entropy (classification) or mean squared error (regression).
pub fn eval_loss(model: &TrainedModel, test: &Dataset) -> Result<f64> {
    check_compatible(model, test)?;
    let n = test.len();
    let mut total = 0.0;
    match test.task() {
        Task::Classification { num_classes } => {
            let mut probs = vec![0.0; num_classes];
            for i in 0..n {
                model.predict_proba(test.row(i), &mut probs)?;
                let p = probs[test.target(i) as usize].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                total -= p.ln();
            }
        }
        Task::Regression => {
            for i in 0..n {
                let r = model.predict_value(test.row(i))? - test.target(i);
                total += r * r;
            }
        }
    }
    Ok(total / n as f64)
}

/// Fraction of argmax predictions matching the label; ties go to the lower
/// class index.
pub fn eval_accuracy(model: &TrainedModel, test: &Dataset) -> Result<f64> {
    check_compatible(model, test)?;
    let Task::Classification { num_classes } = test.task() else {
        return Err(Error::TaskMismatch("accuracy needs a classification task".into()));
    };
    let mut probs = vec![0.0; num_classes];
    let mut correct = 0usize;
    for i in 0..test.len() {
        model.predict_proba(test.row(i), &mut probs)?;
        let mut best = 0;
        for c in 1..num_classes {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        if best == test.target(i) as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Signed distance `(wᵀx + b) / ‖w‖₂` to a binary logistic model's boundary.
pub fn decision_boundary_distance(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    let (w, b) = model
        .as_logistic()
        .and_then(LogisticModel::binary_weights)
        .ok_or_else(|| Error::TaskMismatch("boundary distance needs a binary logistic model".into()))?;
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: x.len() });
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Singular("weight vector has zero norm".into()));
    }
    Ok((w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b) / norm)
}

/// The loss `Δ` is measured with.
#[derive(Debug, Clone, Copy)]
pub enum Evaluator<'a> {
    /// Empirical loss on a held-out set.
    TestSet(&'a Dataset),
    /// Closed-form population MSE of a linear model under the generative
    /// distribution (`x` has mean zero, so an intercept adds `b²`).
    LinearPopulation(&'a LinearPopulation),
}

impl Evaluator<'_> {
    pub fn loss(&self, model: &TrainedModel) -> Result<f64> {
        match self {
            Evaluator::TestSet(test) => eval_loss(model, test),
            Evaluator::LinearPopulation(pop) => {
                let m = model
                    .as_linear()
                    .ok_or_else(|| Error::TaskMismatch("population loss needs a linear regression model".into()))?;
                if m.coef.len() != pop.dim() {
                    return Err(Error::DimensionMismatch { expected: pop.dim(), got: m.coef.len() });
                }
                Ok(pop.population_mse(&m.coef) + m.intercept * m.intercept)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Evaluator::TestSet(t) => format!("test_set(n={})", t.len()),
            Evaluator::LinearPopulation(_) => "linear_population".into(),
        }
    }
}
