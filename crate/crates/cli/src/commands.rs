use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::Result;
use loe_core::backbones::{Checkpoint, DualLoss};
use loe_core::data::{self, ContaminatedDataset, DatasetManifest, TabularSpec};
use loe_core::eval::{self, DatasetSpec, MetricReport, SeedResult};
use loe_core::trainer;
use loe_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridSection, Metric};
use crate::{ContourArgs, EvalArgs, GenArgs, GridArgs, Overrides, TrainArgs};

/// A grid that completed with failing seeds in some cells.
#[derive(Debug)]
pub struct GridFailed(pub usize);

impl fmt::Display for GridFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} seed run(s) failed; see the per-cell reports", self.0)
    }
}

impl std::error::Error for GridFailed {}

const DEFAULT_OUT: &str = "out";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> loe_core::Result<()> {
    fs::write(path, contents).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> loe_core::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn create_dir(dir: &Path) -> loe_core::Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.display().to_string(),
        source,
    })
}

/// Run manifest listing what a command wrote.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    seed: Option<u64>,
    dataset: Option<DatasetManifest>,
    files: Vec<String>,
}

fn write_run_manifest(dir: &Path, command: &str, seed: Option<u64>, dataset: Option<DatasetManifest>, files: &[&str]) -> loe_core::Result<()> {
    let manifest = RunManifest {
        command: command.into(),
        seed,
        dataset,
        files: files.iter().map(|f| f.to_string()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Loads the config and applies command-line overrides.
fn resolve(o: &Overrides) -> loe_core::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load_or_default(o.config.as_deref())?;
    let t = &mut cfg.trainer;
    if let Some(v) = o.strategy {
        t.strategy = v;
    }
    if let Some(v) = o.alpha {
        t.alpha = v;
    }
    if let Some(v) = o.epochs {
        t.epochs = v;
    }
    if let Some(v) = o.warmup_epochs {
        t.warmup_epochs = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.lr {
        t.lr = v;
    }
    if let Some(v) = &o.seeds {
        cfg.eval.seeds = v.clone();
    }
    if o.timing {
        cfg.output.timing = true;
    }
    if let Some(dir) = &o.out {
        cfg.output.dir = Some(dir.clone());
    }
    cfg.validate()?;
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    create_dir(&dir)?;
    Ok((cfg, dir))
}

fn load_labeled(path: &Path, label_column: Option<&str>) -> loe_core::Result<ContaminatedDataset> {
    data::load_csv(path, label_column)
}

pub fn print_config() -> Result<()> {
    print!("{}", ExperimentConfig::default().to_json());
    Ok(())
}

pub fn gen(a: GenArgs) -> Result<()> {
    create_dir(&a.out)?;
    if let Some(input) = &a.csv {
        let alpha0 = a.contaminate.expect("clap enforces --contaminate with --csv");
        let source = load_labeled(input, a.label_column.as_deref())?;
        let (normals, mut pool) = match &source.labels {
            Some(_) => source.partition()?,
            None => (source.features.clone(), Vec::new()),
        };
        if let Some(p) = &a.pool {
            pool = load_labeled(p, None)?.features;
        }
        let mut out = data::contaminate(&normals, &pool, alpha0, a.seed)?;
        out.feature_names = source.feature_names.clone();
        out.label_name = a.label_column.clone().unwrap_or_else(|| "label".into());
        data::save_csv(&out, a.out.join("train.csv"))?;
        write_json(&a.out.join("manifest.json"), &out.manifest(Some(a.seed)))?;
        return Ok(());
    }

    let spec = if a.toy {
        DatasetSpec::toy()
    } else if a.tabular {
        DatasetSpec::SyntheticTabular(TabularSpec::default())
    } else if let Some(path) = &a.config {
        ExperimentConfig::load(path)?.dataset
    } else {
        return Err(Error::Config("gen needs one of --toy, --tabular, --csv or --config".into()).into());
    };
    let (train, test) = spec.materialize(a.seed)?;
    data::save_csv(&train, a.out.join("train.csv"))?;
    data::save_csv(&test, a.out.join("test.csv"))?;
    write_json(&a.out.join("manifest.json"), &train.manifest(Some(a.seed)))?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (cfg, dir) = resolve(&a.overrides)?;
    let seed = cfg.eval.seeds[0];
    let train_set = match &a.data {
        Some(path) => load_labeled(path, a.label_column.as_deref())?,
        None => cfg.dataset.materialize(seed)?.0,
    };
    write_file(&dir.join("config.json"), cfg.to_json())?;

    let mut model = loe_core::backbones::Backbone::init(&cfg.backbone, train_set.dim(), eval::model_seed(seed))?;
    let result = trainer::train(&mut model, &train_set, &eval::trainer_for_seed(&cfg.trainer, seed));
    let history_path = dir.join("history.csv");
    let history = match result {
        Ok(h) => h,
        Err(e @ Error::Divergence { .. }) => {
            if let Error::Divergence { history, .. } = &e {
                write_file(&history_path, history.to_csv(cfg.output.timing))?;
            }
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&history_path, history.to_csv(cfg.output.timing))?;
    Checkpoint::capture(&cfg.backbone, &model).save(dir.join("checkpoint.json"))?;
    write_run_manifest(
        &dir,
        "train",
        Some(seed),
        Some(train_set.manifest(Some(seed))),
        &["config.json", "checkpoint.json", "history.csv", "manifest.json"],
    )?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (cfg, dir) = resolve(&a.overrides)?;
    let seed = cfg.eval.seeds[0];
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let model = checkpoint.restore()?;
    let test = match &a.data {
        Some(path) => load_labeled(path, a.label_column.as_deref())?,
        None => cfg.dataset.materialize(seed)?.1,
    };
    if test.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "checkpoint {} expects {} features but the evaluation data has {}",
            a.checkpoint.display(),
            model.input_dim(),
            test.dim()
        ))
        .into());
    }
    write_file(&dir.join("config.json"), cfg.to_json())?;

    let scores = trainer::test_scores(&model, &test.features)?;
    let mut csv = String::from("index,score,label\n");
    for (i, s) in scores.iter().enumerate() {
        let label = test.labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
        csv.push_str(&format!("{i},{s},{label}\n"));
    }
    write_file(&dir.join("scores.csv"), csv)?;

    let mut files = vec!["config.json", "scores.csv"];
    if !cfg.eval.metrics.is_empty() {
        let labels = test.require_labels()?;
        let mut result = SeedResult {
            seed,
            auc: None,
            f1: None,
            threshold: None,
            n_test: test.len(),
            error: None,
        };
        if cfg.eval.metrics.contains(&Metric::Auc) {
            result.auc = Some(eval::auc(&scores, labels)?);
        }
        if cfg.eval.metrics.contains(&Metric::F1) {
            let (f1, t) = eval::f1_top_k_with_threshold(&scores, labels)?;
            result.f1 = Some(f1);
            result.threshold = Some(t);
        }
        let report = MetricReport::from_results(
            cfg.trainer.strategy.name(),
            cfg.trainer.alpha,
            match a.data {
                Some(_) => test.alpha0.unwrap_or(f64::NAN),
                None => cfg.dataset.alpha0(),
            },
            vec![result],
        );
        write_json(&dir.join("report.json"), &report)?;
        write_file(&dir.join("report.csv"), report.to_csv())?;
        files.extend(["report.json", "report.csv"]);
    }
    files.push("manifest.json");
    write_run_manifest(&dir, "eval", Some(seed), Some(test.manifest(Some(seed))), &files)?;
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Serialize)]
struct ContourLevel {
    quantile: f64,
    level: f64,
    n_train: usize,
}

pub fn contour(a: ContourArgs) -> Result<()> {
    let model = Checkpoint::load(&a.checkpoint)?.restore()?;
    if model.input_dim() != 2 {
        return Err(Error::Shape(format!(
            "contour needs a 2-D model, checkpoint has input dimension {}",
            model.input_dim()
        ))
        .into());
    }
    if a.x_range.len() != 2 || a.y_range.len() != 2 {
        return Err(Error::Config("--x-range and --y-range take two values, lo,hi".into()).into());
    }
    if a.resolution == 0 {
        return Err(Error::Config("resolution must be positive".into()).into());
    }
    create_dir(&a.out)?;
    let xs = linspace(a.x_range[0], a.x_range[1], a.resolution);
    let ys = linspace(a.y_range[0], a.y_range[1], a.resolution);
    let points: Vec<Vec<f64>> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| vec![x, y])).collect();
    let scores = trainer::test_scores(&model, &points)?;
    let mut csv = String::from("x,y,score\n");
    for (p, s) in points.iter().zip(&scores) {
        csv.push_str(&format!("{},{},{}\n", p[0], p[1], s));
    }
    write_file(&a.out.join("contour.csv"), csv)?;
    let mut files = vec!["contour.csv"];

    if let Some(path) = &a.data {
        let train = load_labeled(path, a.label_column.as_deref())?;
        let train_scores = trainer::test_scores(&model, &train.features)?;
        let level = ContourLevel {
            quantile: a.quantile,
            level: eval::quantile_midpoint(&train_scores, a.quantile)?,
            n_train: train_scores.len(),
        };
        write_json(&a.out.join("level.json"), &level)?;
        files.push("level.json");
    }
    files.push("manifest.json");
    write_run_manifest(&a.out, "contour", None, None, &files)?;
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct GridProgress {
    command: String,
    rows: usize,
    cols: usize,
    completed: BTreeSet<(usize, usize)>,
}

fn cell_path(dir: &Path, r: usize, c: usize) -> PathBuf {
    dir.join("cells").join(format!("r{r}_c{c}.json"))
}

pub fn grid(a: GridArgs) -> Result<()> {
    let (mut cfg, dir) = resolve(&a.overrides)?;
    let mut axes = cfg.grid.clone().unwrap_or(GridSection {
        alphas: vec![cfg.trainer.alpha],
        alpha0s: vec![cfg.dataset.alpha0()],
    });
    if let Some(v) = &a.alphas {
        axes.alphas = v.clone();
    }
    if let Some(v) = &a.alpha0s {
        axes.alpha0s = v.clone();
    }
    cfg.grid = Some(axes.clone());
    cfg.validate()?;
    if a.workers == 0 {
        return Err(Error::Config("--workers must be positive".into()).into());
    }

    // A previous run with the same config can be resumed.
    let echo = cfg.to_json();
    let config_path = dir.join("config.json");
    let manifest_path = dir.join("manifest.json");
    let mut progress = GridProgress {
        command: "grid".into(),
        rows: axes.alpha0s.len(),
        cols: axes.alphas.len(),
        completed: BTreeSet::new(),
    };
    if fs::read_to_string(&config_path).ok().as_deref() == Some(echo.as_str()) {
        if let Some(prev) = fs::read_to_string(&manifest_path)
            .ok()
            .and_then(|t| serde_json::from_str::<GridProgress>(&t).ok())
        {
            progress.completed = prev.completed;
            log::info!("resuming grid with {} completed cell(s)", progress.completed.len());
        }
    }
    write_file(&config_path, &echo)?;
    create_dir(&dir.join("cells"))?;
    write_json(&manifest_path, &progress)?;

    let done = |r: usize, c: usize| -> Option<MetricReport> {
        if !progress.completed.contains(&(r, c)) {
            return None;
        }
        let text = fs::read_to_string(cell_path(&dir, r, c)).ok()?;
        serde_json::from_str(&text).ok()
    };
    let completed = Mutex::new(progress.completed.clone());
    let write_errors = Mutex::new(Vec::new());
    let on_cell = |r: usize, c: usize, report: &MetricReport| {
        let mut completed = completed.lock().expect("progress lock");
        let saved = write_json(&cell_path(&dir, r, c), report).and_then(|_| {
            completed.insert((r, c));
            write_json(
                &manifest_path,
                &GridProgress {
                    command: "grid".into(),
                    rows: axes.alpha0s.len(),
                    cols: axes.alphas.len(),
                    completed: completed.clone(),
                },
            )
        });
        if let Err(e) = saved {
            write_errors.lock().expect("error lock").push(e);
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let grid = pool.install(|| {
        eval::sensitivity_grid_with(
            &axes.alphas,
            &axes.alpha0s,
            &cfg.dataset,
            &cfg.backbone,
            &cfg.trainer,
            &cfg.eval.seeds,
            &done,
            &on_cell,
        )
    })?;
    if let Some(e) = write_errors.into_inner().expect("error lock").into_iter().next() {
        return Err(e.into());
    }
    for (r, row) in grid.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            write_json(&cell_path(&dir, r, c), cell)?;
        }
    }
    write_file(&dir.join("grid.csv"), grid.matrix_csv())?;
    write_file(&dir.join("report.csv"), grid.flat_csv())?;
    write_json(&dir.join("report.json"), &grid)?;
    progress.completed = (0..axes.alpha0s.len())
        .flat_map(|r| (0..axes.alphas.len()).map(move |c| (r, c)))
        .collect();
    write_json(&manifest_path, &progress)?;

    match grid.failures() {
        0 => Ok(()),
        n => Err(GridFailed(n).into()),
    }
}
