//! Block coordinate descent over model parameters and latent labels.
//!
//! Each mini-batch: evaluate the dual losses, rank the training scores,
//! assign labels under the cardinality constraint, then take one Adam step
//! on the joint loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::backbones::{BatchGraph, DualLoss};
use crate::data::ContaminatedDataset;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Blind,
    Refine,
    LoeHard,
    LoeSoft,
    #[serde(rename = "gtruth")]
    GTruth,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Blind,
        Strategy::Refine,
        Strategy::LoeHard,
        Strategy::LoeSoft,
        Strategy::GTruth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Blind => "blind",
            Strategy::Refine => "refine",
            Strategy::LoeHard => "loe_hard",
            Strategy::LoeSoft => "loe_soft",
            Strategy::GTruth => "gtruth",
        }
    }

    /// Strategies that start with blind warm-up epochs.
    pub fn uses_warmup(self) -> bool {
        matches!(self, Strategy::Refine | Strategy::LoeHard | Strategy::LoeSoft)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub strategy: Strategy,
    /// Assumed contamination ratio.
    pub alpha: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            strategy: Strategy::LoeHard,
            alpha: 0.1,
            epochs: 200,
            warmup_epochs: 2,
            batch_size: 25,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be smaller than epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.adam().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Hard,
    Soft,
}

impl LabelMode {
    /// Label given to a flagged sample.
    pub fn flagged_value(self) -> f64 {
        match self {
            LabelMode::Hard => 1.0,
            LabelMode::Soft => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelAssignment {
    pub y: Vec<f64>,
    pub mode: LabelMode,
}

impl LabelAssignment {
    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.y.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i)
    }
}

/// `round(alpha * m)`, the number of samples flagged in a batch of `m`.
pub fn anomaly_budget(alpha: f64, m: usize) -> usize {
    ((alpha * m as f64).round() as usize).min(m)
}

/// `S_train = L_n - L_a`, elementwise.
pub fn training_scores(normal: &[f64], anomaly: &[f64]) -> Vec<f64> {
    assert_eq!(normal.len(), anomaly.len(), "loss vectors differ in length");
    normal.iter().zip(anomaly).map(|(n, a)| n - a).collect()
}

/// Flags the `round(alpha * M)` largest scores; among equal scores the lower
/// index is flagged first.
pub fn assign_labels(scores: &[f64], alpha: f64, mode: LabelMode) -> LabelAssignment {
    let k = anomaly_budget(alpha, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut y = vec![0.0; scores.len()];
    for &i in &order[..k] {
        y[i] = mode.flagged_value();
    }
    LabelAssignment { y, mode }
}

/// `sum_i (1 - y_i) L_n(x_i) + y_i L_a(x_i)`.
pub fn joint_loss(normal: &[f64], anomaly: &[f64], y: &[f64]) -> f64 {
    assert!(normal.len() == anomaly.len() && normal.len() == y.len(), "lengths differ");
    normal
        .iter()
        .zip(anomaly)
        .zip(y)
        .map(|((n, a), y)| per_sample_joint(*n, *a, *y))
        .sum()
}

/// One sample's term of the joint loss. A soft label of 0.5 yields exactly
/// `0.5 * (L_n + L_a)`.
pub fn per_sample_joint(normal: f64, anomaly: f64, y: f64) -> f64 {
    if y == 0.0 {
        normal
    } else if y == 1.0 {
        anomaly
    } else if y == 0.5 {
        0.5 * (normal + anomaly)
    } else {
        (1.0 - y) * normal + y * anomaly
    }
}

/// Loss weights for one batch: sample `i` contributes
/// `normal[i] * L_n + anomaly[i] * L_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    /// Label recorded for each sample (refine marks removed samples with 1).
    pub labels: Vec<f64>,
    pub normal: Vec<f64>,
    pub anomaly: Vec<f64>,
}

impl BatchPlan {
    pub fn objective(&self, ln: &[f64], la: &[f64]) -> f64 {
        (0..ln.len())
            .map(|i| self.normal[i] * ln[i] + self.anomaly[i] * la[i])
            .sum()
    }
}

/// Label step of one iteration. `truth` is required for [`Strategy::GTruth`].
pub fn plan_batch(
    strategy: Strategy,
    alpha: f64,
    normal: &[f64],
    anomaly: &[f64],
    truth: Option<&[u8]>,
) -> Result<BatchPlan> {
    let m = normal.len();
    let from_labels = |labels: Vec<f64>| BatchPlan {
        normal: labels.iter().map(|y| 1.0 - y).collect(),
        anomaly: labels.clone(),
        labels,
    };
    let plan = match strategy {
        Strategy::Blind => from_labels(vec![0.0; m]),
        Strategy::LoeHard | Strategy::LoeSoft => {
            let mode = if strategy == Strategy::LoeHard {
                LabelMode::Hard
            } else {
                LabelMode::Soft
            };
            let y = assign_labels(&training_scores(normal, anomaly), alpha, mode).y;
            from_labels(y)
        }
        Strategy::Refine => {
            let y = assign_labels(&training_scores(normal, anomaly), alpha, LabelMode::Hard).y;
            BatchPlan {
                normal: y.iter().map(|y| 1.0 - y).collect(),
                anomaly: vec![0.0; m],
                labels: y,
            }
        }
        Strategy::GTruth => {
            let truth = truth.ok_or_else(|| Error::Config("gtruth needs a labeled training set".into()))?;
            from_labels(truth.iter().map(|&l| l as f64).collect())
        }
    };
    Ok(plan)
}

/// Result of one block-coordinate iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Joint objective of the batch before the parameter update.
    pub objective: f64,
    pub labels: Vec<f64>,
    pub normal: Vec<f64>,
    pub anomaly: Vec<f64>,
}

/// Label step followed by one Adam step on the batch objective. Only terms
/// with nonzero weight enter the graph; a batch without any term leaves the
/// parameters untouched.
pub fn train_step<M: DualLoss + ?Sized, R: AsRef<[f64]>>(
    model: &mut M,
    adam: &mut AdamState,
    rows: &[R],
    truth: Option<&[u8]>,
    strategy: Strategy,
    alpha: f64,
) -> Result<StepReport> {
    let mut bg = BatchGraph::build(model, rows)?;
    let (normal, anomaly) = bg.losses();
    if let Some(i) = (0..normal.len()).find(|&i| !normal[i].is_finite() || !anomaly[i].is_finite()) {
        return Err(Error::NonFinite(format!("loss of batch sample {i}")));
    }
    let plan = plan_batch(strategy, alpha, &normal, &anomaly, truth)?;
    let mut terms = Vec::with_capacity(2 * normal.len());
    for i in 0..normal.len() {
        if plan.normal[i] != 0.0 {
            terms.push((bg.normal[i], plan.normal[i]));
        }
        if plan.anomaly[i] != 0.0 {
            terms.push((bg.anomaly[i], plan.anomaly[i]));
        }
    }
    let objective = plan.objective(&normal, &anomaly);
    if !terms.is_empty() {
        let out = bg.graph.weighted_sum(&terms);
        bg.graph.set_output(out);
        bg.graph.forward();
        let grads = bg.graph.backward()?.into_vecs();
        adam.step(model.params_mut(), &grads)?;
    }
    Ok(StepReport {
        objective,
        labels: plan.labels,
        normal,
        anomaly,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_joint_loss: f64,
    /// Samples whose label differs from the previous epoch (warm-up counts
    /// as all-normal).
    pub flip_count: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// CSV with columns `epoch,mean_joint_loss,flip_count,seconds`. Without
    /// `timing` the seconds column is written as 0 so reruns are identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("epoch,mean_joint_loss,flip_count,seconds\n");
        for r in &self.epochs {
            let secs = if timing { r.seconds } else { 0.0 };
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.mean_joint_loss, r.flip_count, secs));
        }
        out
    }
}

/// Called after every parameter update with `(epoch, batch, params)`.
pub type StepObserver<'a> = dyn FnMut(usize, usize, &ParamSet) + 'a;

pub fn train<M: DualLoss + ?Sized>(
    model: &mut M,
    data: &ContaminatedDataset,
    cfg: &TrainerConfig,
) -> Result<TrainingHistory> {
    train_observed(model, data, cfg, &mut |_, _, _| {})
}

/// [`train`] with a hook that sees the parameters after every step.
pub fn train_observed<M: DualLoss + ?Sized>(
    model: &mut M,
    data: &ContaminatedDataset,
    cfg: &TrainerConfig,
    observer: &mut StepObserver<'_>,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let truth = match cfg.strategy {
        Strategy::GTruth => Some(
            data.labels
                .as_deref()
                .ok_or_else(|| Error::Config("gtruth needs a labeled training set".into()))?,
        ),
        _ => None,
    };
    let warmup = if cfg.strategy.uses_warmup() { cfg.warmup_epochs } else { 0 };

    let mut adam = AdamState::new(model.params(), cfg.adam());
    let mut rng = rng::seeded(cfg.seed);
    let mut history = TrainingHistory::default();
    let mut previous = vec![0.0; data.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let strategy = if epoch < warmup { Strategy::Blind } else { cfg.strategy };
        order.shuffle(&mut rng);
        let mut current = vec![0.0; data.len()];
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| data.features[i].as_slice()).collect();
            let batch_truth: Option<Vec<u8>> = truth.map(|t| idx.iter().map(|&i| t[i]).collect());
            let report = train_step(model, &mut adam, &rows, batch_truth.as_deref(), strategy, cfg.alpha)
                .map_err(|e| match e {
                    Error::NonFinite(reason) => Error::Divergence {
                        epoch,
                        batch,
                        reason,
                        history: Box::new(history.clone()),
                    },
                    other => other,
                })?;
            total += report.objective;
            for (&i, &y) in idx.iter().zip(&report.labels) {
                current[i] = y;
            }
            observer(epoch, batch, model.params());
        }
        let flip_count = current.iter().zip(&previous).filter(|(a, b)| a != b).count();
        previous = current;
        history.epochs.push(EpochRecord {
            epoch,
            mean_joint_loss: total / data.len() as f64,
            flip_count,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

/// `S_test = L_n` per sample.
pub fn test_scores<M: DualLoss + ?Sized, R: AsRef<[f64]>>(model: &M, rows: &[R]) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let mut scores = Vec::with_capacity(rows.len());
    for (c, chunk) in rows.chunks(CHUNK).enumerate() {
        let bg = BatchGraph::build(model, chunk).map_err(|e| match e {
            Error::Sample { index, source } => Error::Sample {
                index: index + c * CHUNK,
                source,
            },
            other => other,
        })?;
        scores.extend(bg.losses().0);
    }
    Ok(scores)
}
