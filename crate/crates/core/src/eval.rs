//! Metrics, multi-seed experiments and the contamination sensitivity grid.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbones::{Backbone, BackboneSpec};
use crate::data::{self, ContaminatedDataset, TabularSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::trainer::{self, TrainerConfig, TrainingHistory};

fn check_metric_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Input(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Probability that a random anomaly outscores a random normal, ties
/// counting one half. Computed from tie-group ranks in exact half-integer
/// arithmetic, so it agrees bit-for-bit with pairwise counting.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_metric_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // twice the number of (anomaly, normal) pairs won, ties counting 1.
    let mut twice_wins: u128 = 0;
    let mut normals_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group = &order[start..end];
        let p = group.iter().filter(|&&i| labels[i] == 1).count() as u128;
        let n = group.len() as u128 - p;
        twice_wins += p * (2 * normals_below + n);
        normals_below += n;
        start = end;
    }
    Ok(twice_wins as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Pairwise definition of [`auc`], quadratic in the sample count.
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_metric_inputs(scores, labels)?;
    let mut twice_wins: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == 1 {
                continue;
            }
            twice_wins += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    Ok(twice_wins as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// F1 when the `k` highest scores are predicted anomalous and `k` is the
/// number of true anomalies. Precision and recall coincide, so this is the
/// fraction of true anomalies among the top `k`. Equal scores are ranked by
/// lower index first. Returns `(f1, threshold)` where the threshold is the
/// `k`-th highest score.
pub fn f1_top_k_with_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (k, _) = check_metric_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let tp = order[..k].iter().filter(|&&i| labels[i] == 1).count();
    Ok((tp as f64 / k as f64, scores[order[k - 1]]))
}

pub fn f1_top_k(scores: &[f64], labels: &[u8]) -> Result<f64> {
    f1_top_k_with_threshold(scores, labels).map(|(f, _)| f)
}

/// Population mean and standard deviation (divisor `n`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Where training and test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Toy mixture: the training set has 90 normals plus enough anomalies for
    /// `alpha0`; the test set is drawn independently.
    Toy {
        #[serde(default = "default_toy_alpha0")]
        alpha0: f64,
        #[serde(default = "default_toy_test_normals")]
        test_normals: usize,
        #[serde(default = "default_toy_test_anomalies")]
        test_anomalies: usize,
    },
    SyntheticTabular(TabularSpec),
    /// Labeled CSV: normals are split into train and test, all anomalies go
    /// to the test set, and the training set is contaminated with noisy
    /// copies of them.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        alpha0: f64,
    },
}

fn default_toy_alpha0() -> f64 {
    0.1
}
fn default_toy_test_normals() -> usize {
    450
}
fn default_toy_test_anomalies() -> usize {
    50
}
fn default_test_fraction() -> f64 {
    0.5
}

impl DatasetSpec {
    pub fn toy() -> Self {
        DatasetSpec::Toy {
            alpha0: default_toy_alpha0(),
            test_normals: default_toy_test_normals(),
            test_anomalies: default_toy_test_anomalies(),
        }
    }

    pub fn alpha0(&self) -> f64 {
        match self {
            DatasetSpec::Toy { alpha0, .. } | DatasetSpec::Csv { alpha0, .. } => *alpha0,
            DatasetSpec::SyntheticTabular(t) => t.alpha0,
        }
    }

    pub fn with_alpha0(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            DatasetSpec::Toy { alpha0, .. } | DatasetSpec::Csv { alpha0, .. } => *alpha0 = value,
            DatasetSpec::SyntheticTabular(t) => t.alpha0 = value,
        }
        out
    }

    /// `(train, test)` for one experiment seed.
    pub fn materialize(&self, seed: u64) -> Result<(ContaminatedDataset, ContaminatedDataset)> {
        let alpha0 = self.alpha0();
        if !(0.0..1.0).contains(&alpha0) {
            return Err(Error::Config(format!("alpha0 must be in [0, 1), got {alpha0}")));
        }
        match self {
            DatasetSpec::Toy {
                test_normals,
                test_anomalies,
                ..
            } => {
                let n_anom = data::contamination_count(data::TOY_NORMALS, alpha0);
                let train = data::gen_toy_with(rng::derive_seed(seed, 10), data::TOY_NORMALS, n_anom);
                let test = data::gen_toy_with(rng::derive_seed(seed, 11), *test_normals, *test_anomalies);
                Ok((train, test))
            }
            DatasetSpec::SyntheticTabular(spec) => spec.generate(rng::derive_seed(seed, 10)),
            DatasetSpec::Csv {
                path,
                label_column,
                test_fraction,
                ..
            } => {
                let full = data::load_csv(path, Some(label_column))?;
                data::contaminated_split(&full, *test_fraction, alpha0, rng::derive_seed(seed, 10))
            }
        }
    }
}

/// Model initialization seed for an experiment seed.
pub fn model_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, 20)
}

/// Trainer settings for an experiment seed (the shuffle stream).
pub fn trainer_for_seed(cfg: &TrainerConfig, seed: u64) -> TrainerConfig {
    TrainerConfig {
        seed: rng::derive_seed(seed, 30),
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub threshold: Option<f64>,
    pub n_test: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub strategy: String,
    pub alpha: f64,
    pub alpha0: f64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
    /// Mean and population standard deviation over the successful seeds.
    pub auc_mean: f64,
    pub auc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl MetricReport {
    pub fn from_results(strategy: &str, alpha: f64, alpha0: f64, per_seed: Vec<SeedResult>) -> Self {
        let aucs: Vec<f64> = per_seed.iter().filter_map(|r| r.auc).collect();
        let f1s: Vec<f64> = per_seed.iter().filter_map(|r| r.f1).collect();
        let (auc_mean, auc_std) = mean_std(&aucs);
        let (f1_mean, f1_std) = mean_std(&f1s);
        Self {
            strategy: strategy.to_string(),
            alpha,
            alpha0,
            seeds: per_seed.iter().map(|r| r.seed).collect(),
            per_seed,
            auc_mean,
            auc_std,
            f1_mean,
            f1_std,
        }
    }

    pub fn failures(&self) -> usize {
        self.per_seed.iter().filter(|r| r.error.is_some()).count()
    }

    pub const CSV_HEADER: &'static str = "strategy,alpha,alpha0,seed,auc,f1,threshold,n_test,error";

    /// One line per seed, without header.
    pub fn csv_rows(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::new();
        for r in &self.per_seed {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n', ','], " ");
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.strategy,
                self.alpha,
                self.alpha0,
                r.seed,
                opt(r.auc),
                opt(r.f1),
                opt(r.threshold),
                r.n_test,
                err
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }
}

/// Outcome of one seed, with everything needed to write artifacts.
pub struct SeedRun {
    pub spec: BackboneSpec,
    pub model: Backbone,
    pub history: TrainingHistory,
    pub test: ContaminatedDataset,
    pub scores: Vec<f64>,
}

/// Trains and scores one seed.
pub fn run_seed(
    dataset: &DatasetSpec,
    backbone: &BackboneSpec,
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (train, test) = dataset.materialize(seed)?;
    let mut model = Backbone::init(backbone, train.dim(), model_seed(seed))?;
    let history = trainer::train(&mut model, &train, &trainer_for_seed(cfg, seed))?;
    let scores = trainer::test_scores(&model, &test.features)?;
    Ok(SeedRun {
        spec: backbone.clone(),
        model,
        history,
        test,
        scores,
    })
}

fn score_seed(dataset: &DatasetSpec, backbone: &BackboneSpec, cfg: &TrainerConfig, seed: u64) -> SeedResult {
    let outcome = run_seed(dataset, backbone, cfg, seed).and_then(|run| {
        let labels = run.test.require_labels()?;
        let auc = auc(&run.scores, labels)?;
        let (f1, threshold) = f1_top_k_with_threshold(&run.scores, labels)?;
        Ok((auc, f1, threshold, run.test.len()))
    });
    match outcome {
        Ok((auc, f1, threshold, n_test)) => SeedResult {
            seed,
            auc: Some(auc),
            f1: Some(f1),
            threshold: Some(threshold),
            n_test,
            error: None,
        },
        Err(e) => {
            log::warn!("seed {seed} failed: {e}");
            SeedResult {
                seed,
                auc: None,
                f1: None,
                threshold: None,
                n_test: 0,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Trains once per seed and aggregates test metrics. A failing seed is
/// recorded in its row and does not stop the others.
pub fn run_experiment(
    dataset: &DatasetSpec,
    backbone: &BackboneSpec,
    cfg: &TrainerConfig,
    seeds: &[u64],
) -> Result<MetricReport> {
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    cfg.validate()?;
    let per_seed = seeds
        .iter()
        .map(|&s| score_seed(dataset, backbone, cfg, s))
        .collect();
    Ok(MetricReport::from_results(
        cfg.strategy.name(),
        cfg.alpha,
        dataset.alpha0(),
        per_seed,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub alphas: Vec<f64>,
    pub alpha0s: Vec<f64>,
    /// `cells[r][c]` holds `alpha0s[r]` and `alphas[c]`.
    pub cells: Vec<Vec<MetricReport>>,
}

/// Position of a cell in row-major order.
pub fn cell_index(row: usize, col: usize, n_cols: usize) -> usize {
    row * n_cols + col
}

/// Runs one experiment per `(alpha0, alpha)` pair. Every cell uses the same
/// seed list, so cells in a row see the same data and initializations and
/// differ only in `alpha`. `done` supplies cells that are already finished;
/// `on_cell` sees each newly computed cell. Cells run on the current rayon
/// pool.
pub fn sensitivity_grid_with(
    alphas: &[f64],
    alpha0s: &[f64],
    dataset: &DatasetSpec,
    backbone: &BackboneSpec,
    cfg: &TrainerConfig,
    seeds: &[u64],
    done: &(dyn Fn(usize, usize) -> Option<MetricReport> + Sync),
    on_cell: &(dyn Fn(usize, usize, &MetricReport) + Sync),
) -> Result<SensitivityGrid> {
    if alphas.is_empty() || alpha0s.is_empty() {
        return Err(Error::Config("grid axes must be nonempty".into()));
    }
    for &a in alphas {
        TrainerConfig { alpha: a, ..cfg.clone() }.validate()?;
    }
    let cols = alphas.len();
    let cells: Vec<Result<MetricReport>> = (0..alpha0s.len() * cols)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            if let Some(report) = done(r, c) {
                return Ok(report);
            }
            let cell_cfg = TrainerConfig {
                alpha: alphas[c],
                ..cfg.clone()
            };
            let report = run_experiment(&dataset.with_alpha0(alpha0s[r]), backbone, &cell_cfg, seeds)?;
            on_cell(r, c, &report);
            Ok(report)
        })
        .collect();
    let mut flat = cells.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let cells = (0..alpha0s.len())
        .map(|_| flat.by_ref().take(cols).collect())
        .collect();
    Ok(SensitivityGrid {
        alphas: alphas.to_vec(),
        alpha0s: alpha0s.to_vec(),
        cells,
    })
}

pub fn sensitivity_grid(
    alphas: &[f64],
    alpha0s: &[f64],
    dataset: &DatasetSpec,
    backbone: &BackboneSpec,
    cfg: &TrainerConfig,
    seeds: &[u64],
) -> Result<SensitivityGrid> {
    sensitivity_grid_with(alphas, alpha0s, dataset, backbone, cfg, seeds, &|_, _| None, &|_, _, _| {})
}

impl SensitivityGrid {
    pub fn failures(&self) -> usize {
        self.cells.iter().flatten().map(MetricReport::failures).sum()
    }

    /// Mean AUC matrix: rows are `alpha0`, columns are `alpha`.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("alpha0\\alpha");
        for a in &self.alphas {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
        for (a0, row) in self.alpha0s.iter().zip(&self.cells) {
            out.push_str(&a0.to_string());
            for cell in row {
                out.push_str(&format!(",{}", cell.auc_mean));
            }
            out.push('\n');
        }
        out
    }

    /// Every seed of every cell, one line each.
    pub fn flat_csv(&self) -> String {
        let mut out = format!("{}\n", MetricReport::CSV_HEADER);
        for cell in self.cells.iter().flatten() {
            out.push_str(&cell.csv_rows());
        }
        out
    }
}

/// Quantile with the midpoint convention: for `q * n` integral the mean of
/// order statistics `q n` and `q n + 1` (1-based), otherwise order
/// statistic `ceil(q n)`.
pub fn quantile_midpoint(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile must be in [0, 1], got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let h = q * n as f64;
    let r = h.round();
    if (h - r).abs() < 1e-9 {
        let r = r as usize;
        if r == 0 {
            return Ok(sorted[0]);
        }
        if r >= n {
            return Ok(sorted[n - 1]);
        }
        Ok(0.5 * (sorted[r - 1] + sorted[r]))
    } else {
        Ok(sorted[(h.ceil() as usize).clamp(1, n) - 1])
    }
}
