//! End-to-end acceptance checks. Runs without the libtest harness and
//! prints one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use loe_core::autodiff::{grad_check, Graph};
use loe_core::backbones::{Backbone, BackboneSpec, DualLoss, IclConfig, NtlConfig};
use loe_core::data::{self, Role, TabularSpec};
use loe_core::eval::{self, DatasetSpec, MetricReport};
use loe_core::rng::{self, Rng};
use loe_core::theory;
use loe_core::trainer::{self, LabelMode, Strategy, TrainerConfig};
use rand::Rng as _;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn seeds() -> Vec<u64> {
    (0..5).collect()
}

fn experiment(ds: &DatasetSpec, bb: &BackboneSpec, cfg: &TrainerConfig) -> Result<MetricReport, String> {
    let report = eval::run_experiment(ds, bb, cfg, &seeds()).map_err(|e| e.to_string())?;
    ensure(report.failures() == 0, || format!("{} had failing seeds", report.strategy))?;
    Ok(report)
}

fn toy_ordering() -> Outcome {
    let ds = DatasetSpec::toy();
    let bb = BackboneSpec::dsvdd_toy();
    let order = [
        Strategy::GTruth,
        Strategy::LoeHard,
        Strategy::LoeSoft,
        Strategy::Refine,
        Strategy::Blind,
    ];
    let reports = order
        .par_iter()
        .map(|&s| {
            let cfg = TrainerConfig {
                strategy: s,
                ..TrainerConfig::default()
            };
            experiment(&ds, &bb, &cfg).map(|r| r.auc_mean)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let [g, h, s, r, b] = reports[..] else { unreachable!() };
    let slack = 0.02;
    let summary = format!("gtruth {g:.3} loe_h {h:.3} loe_s {s:.3} refine {r:.3} blind {b:.3}");
    let chain = g >= h - slack && g >= s - slack && h >= r - slack && s >= r - slack && r >= b - slack;
    ensure(chain, || summary.clone())?;
    Ok(summary)
}

fn snapshot(model: &Backbone) -> Vec<Vec<f64>> {
    model.params().iter().map(|p| p.values.clone()).collect()
}

fn trajectory(strategy: Strategy, seed: u64) -> Result<Vec<Vec<Vec<f64>>>, String> {
    let (train, _) = DatasetSpec::toy().materialize(seed).map_err(|e| e.to_string())?;
    let mut model = Backbone::init(&BackboneSpec::dsvdd_toy(), 2, eval::model_seed(seed)).map_err(|e| e.to_string())?;
    let cfg = eval::trainer_for_seed(
        &TrainerConfig {
            strategy,
            alpha: 0.0,
            epochs: 10,
            ..TrainerConfig::default()
        },
        seed,
    );
    let mut steps = vec![snapshot(&model)];
    trainer::train_observed(&mut model, &train, &cfg, &mut |_, _, p| {
        steps.push(p.iter().map(|q| q.values.clone()).collect());
    })
    .map_err(|e| e.to_string())?;
    Ok(steps)
}

fn alpha_zero_reduction() -> Outcome {
    let mut steps = 0;
    for seed in 0..3 {
        let blind = trajectory(Strategy::Blind, seed)?;
        for s in [Strategy::LoeHard, Strategy::LoeSoft, Strategy::Refine] {
            let other = trajectory(s, seed)?;
            let same = blind.len() == other.len()
                && blind.iter().flatten().flatten().zip(other.iter().flatten().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("{} diverges from blind at seed {seed}", s.name()))?;
        }
        steps += blind.len() - 1;
    }
    Ok(format!("{steps} steps x 3 strategies bit-identical"))
}

fn brute_force_min(ln: &[f64], la: &[f64], k: usize) -> f64 {
    let m = ln.len();
    (0u32..1 << m)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| {
            let y: Vec<f64> = (0..m).map(|i| ((mask >> i) & 1) as f64).collect();
            trainer::joint_loss(ln, la, &y)
        })
        .fold(f64::INFINITY, f64::min)
}

fn losses(rng: &mut Rng, m: usize) -> (Vec<f64>, Vec<f64>) {
    (0..m).map(|_| (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0))).unzip()
}

fn assignment_optimality() -> Outcome {
    let mut rng = rng::seeded(3);
    for case in 0..500 {
        let m = rng.random_range(1..=12);
        let alpha = rng.random_range(0.0..0.95);
        let (ln, la) = losses(&mut rng, m);
        let y = trainer::assign_labels(&trainer::training_scores(&ln, &la), alpha, LabelMode::Hard).y;
        let got = trainer::joint_loss(&ln, &la, &y);
        let best = brute_force_min(&ln, &la, trainer::anomaly_budget(alpha, m));
        ensure(got <= best, || format!("case {case}: {got} > brute force {best}"))?;
    }
    Ok("500 instances optimal".into())
}

fn cardinality() -> Outcome {
    let mut rng = rng::seeded(4);
    for batch in 0..1000 {
        let m = rng.random_range(1..=64);
        let scores: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        for alpha in [0.0, 0.05, 0.1, 0.2, 0.5] {
            let k = (alpha * m as f64).round() as usize;
            let hard = trainer::assign_labels(&scores, alpha, LabelMode::Hard).y;
            let soft = trainer::assign_labels(&scores, alpha, LabelMode::Soft).y;
            let ok = hard.iter().filter(|&&v| v == 1.0).count() == k
                && hard.iter().all(|&v| v == 0.0 || v == 1.0)
                && soft.iter().filter(|&&v| v == 0.5).count() == k
                && soft.iter().all(|&v| v == 0.0 || v == 0.5);
            ensure(ok, || format!("batch {batch}, M={m}, alpha={alpha}"))?;
        }
    }
    Ok("1000 batches x 5 alphas".into())
}

fn soft_identity() -> Outcome {
    let mut rng = rng::seeded(5);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let n = rng.random_range(-10.0..10.0);
        let a = rng.random_range(-10.0..10.0);
        worst = worst.max((trainer::per_sample_joint(n, a, 0.5) - 0.5 * (n + a)).abs());
    }
    ensure(worst <= 1e-14, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e}"))
}

fn check_backbone(spec: &BackboneSpec, dim: usize, rng: &mut Rng) -> Result<f64, String> {
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let model = Backbone::init(spec, dim, rng.random()).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..dim).map(|_| rng::standard_normal(rng)).collect();
        for weights in [(1.0, 0.0), (0.0, 1.0)] {
            let mut g = Graph::new();
            let leaves = model.params().attach(&mut g);
            let (n, a) = model.dual_loss_nodes(&mut g, &leaves, &x);
            let out = g.weighted_sum(&[(n, weights.0), (a, weights.1)]);
            g.set_output(out);
            worst = worst.max(grad_check(&mut g, 1e-5).map_err(|e| e.to_string())?);
        }
    }
    Ok(worst)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng::seeded(6);
    let ntl = BackboneSpec::Ntl(NtlConfig {
        num_transforms: 3,
        ..NtlConfig::default()
    });
    let cases = [
        ("dsvdd", BackboneSpec::dsvdd_toy(), 2),
        ("ntl", ntl, 5),
        ("icl", BackboneSpec::Icl(IclConfig::default()), 6),
    ];
    let mut parts = Vec::new();
    for (name, spec, dim) in cases {
        let worst = check_backbone(&spec, dim, &mut rng)?;
        ensure(worst < 1e-4, || format!("{name} grad_check {worst:e}"))?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(parts.join(", "))
}

fn auc_oracle() -> Outcome {
    let hand = eval::auc(&[1.0, 2.0, 3.0, 4.0], &[0, 1, 0, 1]).map_err(|e| e.to_string())?;
    ensure(hand == 0.75, || format!("hand case gave {hand}"))?;
    let mut rng = rng::seeded(7);
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..=1000);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        let fast = eval::auc(&scores, &labels).map_err(|e| e.to_string())?;
        let slow = eval::auc_pairwise(&scores, &labels).map_err(|e| e.to_string())?;
        ensure(fast == slow, || format!("n={n}: rank {fast} vs pairwise {slow}"))?;
        done += 1;
    }
    Ok("200 instances exact, hand case 0.75".into())
}

fn sandwich() -> Outcome {
    let mut rng = rng::seeded(8);
    for beta in [1.0, 10.0, 1e2, 1e4, 1e8] {
        for _ in 0..1000 {
            let n = rng.random_range(-50.0..50.0);
            let a = rng.random_range(-50.0..50.0);
            let gap = theory::smooth_neg_min(n, a, beta) - (-f64::min(n, a));
            let bound = std::f64::consts::LN_2 / beta;
            ensure((0.0..=bound).contains(&gap), || format!("beta {beta}, ({n}, {a}): gap {gap:e} outside [0, {bound:e}]"))?;
        }
    }
    Ok("5 betas x 1000 pairs".into())
}

fn posterior_limit() -> Outcome {
    let mut rng = rng::seeded(9);
    let (mut limit, mut norm) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let n = rng.random_range(-5.0..5.0);
        let a = rng.random_range(-5.0..5.0);
        let p0 = theory::posterior_normal(n, a, 0.5, 1e4);
        let p1 = theory::posterior_anomaly(n, a, 0.5, 1e4);
        norm = norm.max((p0 + p1 - 1.0).abs());
        if (n - a).abs() >= 0.1 {
            let hard = 1.0 - theory::hard_classifier(n, a, 0.0) as f64;
            limit = limit.max((p0 - hard).abs());
        }
        let alpha = rng.random_range(0.01..0.99);
        let split = (
            theory::posterior_normal(n, a, alpha, 0.0),
            theory::posterior_anomaly(n, a, alpha, 0.0),
        );
        let prior_ok = (split.0 - alpha).abs() <= 1e-12 && (split.1 - (1.0 - alpha)).abs() <= 1e-12;
        ensure(prior_ok, || format!("beta 0 gave {split:?} for alpha {alpha}"))?;
    }
    ensure(limit <= 1e-9, || format!("limit deviation {limit:e}"))?;
    ensure(norm <= 1e-14, || format!("normalization deviation {norm:e}"))?;
    Ok(format!("limit {limit:.1e}, normalization {norm:.1e}"))
}

fn contamination_protocol() -> Outcome {
    let mut rng = rng::seeded(10);
    let pool = data::toy_mixture().restricted(Role::Anomaly).sample(500, &mut rng);
    let target = data::feature_variance(&pool);
    let draws = data::inject_anomalies(&pool, 10_000, &mut rng);
    let noise: Vec<Vec<f64>> = draws
        .iter()
        .map(|(i, row)| row.iter().zip(&pool[*i]).map(|(r, p)| r - p).collect())
        .collect();
    let got = data::feature_variance(&noise);
    for (g, t) in got.iter().zip(&target) {
        ensure((g - t).abs() <= 0.05 * t, || format!("noise variance {g} vs pool {t}"))?;
    }
    for (normals, alpha0) in [(90, 0.1), (2000, 0.1), (500, 0.05), (90, 0.2)] {
        let k = data::contamination_count(normals, alpha0);
        let best = (0..=normals)
            .min_by(|&a, &b| {
                let f = |k: usize| (k as f64 / (k + normals) as f64 - alpha0).abs();
                f(a).total_cmp(&f(b))
            })
            .unwrap();
        ensure(k == best, || format!("{normals} normals at {alpha0}: k={k}, closest {best}"))?;
    }
    let k = data::contamination_count(90, 0.1);
    ensure(k == 10, || format!("90 normals at 0.1 gave k={k}"))?;
    Ok(format!("variance ratio {:.3}/{:.3}, k(90, 0.1) = 10", got[0] / target[0], got[1] / target[1]))
}

fn tabular_setup() -> (DatasetSpec, BackboneSpec, TrainerConfig) {
    let cfg = TrainerConfig {
        epochs: 20,
        batch_size: 64,
        lr: 1e-3,
        ..TrainerConfig::default()
    };
    (
        DatasetSpec::SyntheticTabular(TabularSpec::default()),
        BackboneSpec::Ntl(NtlConfig::default()),
        cfg,
    )
}

fn tabular_improvement() -> Outcome {
    let start = Instant::now();
    let (ds, bb, base) = tabular_setup();
    let aucs = [Strategy::Blind, Strategy::LoeSoft]
        .par_iter()
        .map(|&s| experiment(&ds, &bb, &TrainerConfig { strategy: s, ..base.clone() }).map(|r| r.auc_mean))
        .collect::<Result<Vec<_>, _>>()?;
    let (blind, soft) = (aucs[0], aucs[1]);
    let summary = format!("blind {blind:.3} loe_s {soft:.3}");
    ensure(soft - blind >= 0.02, || summary.clone())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("{summary}, took {secs:.0}s"))?;
    Ok(summary)
}

fn sensitivity_robustness() -> Outcome {
    let start = Instant::now();
    let (ds, bb, base) = tabular_setup();
    let blind = TrainerConfig {
        strategy: Strategy::Blind,
        ..base.clone()
    };
    let hard = TrainerConfig {
        strategy: Strategy::LoeHard,
        ..base
    };
    let (grid, blind) = rayon::join(
        || eval::sensitivity_grid(&[0.05, 0.1, 0.15], &[0.1], &ds, &bb, &hard, &seeds()),
        || experiment(&ds, &bb, &blind),
    );
    let grid = grid.map_err(|e| e.to_string())?;
    ensure(grid.failures() == 0, || "grid had failing seeds".into())?;
    let blind = blind?.auc_mean;
    let row: Vec<f64> = grid.cells[0].iter().map(|c| c.auc_mean).collect();
    let summary = format!(
        "alpha 0.05/0.10/0.15: {:.3}/{:.3}/{:.3}, blind {blind:.3}",
        row[0], row[1], row[2]
    );
    for &v in [row[0], row[2]].iter() {
        ensure(row[1] - v <= 0.05 && v >= blind, || summary.clone())?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 900.0, || format!("{summary}, took {secs:.0}s"))?;
    Ok(summary)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("1 toy ordering", toy_ordering),
        ("2 alpha=0 reduction", alpha_zero_reduction),
        ("3 assignment optimality", assignment_optimality),
        ("4 cardinality", cardinality),
        ("5 soft-loss identity", soft_identity),
        ("6 gradient correctness", gradient_correctness),
        ("7 auc oracle", auc_oracle),
        ("8 smooth-min sandwich", sandwich),
        ("9 posterior limit", posterior_limit),
        ("10 contamination protocol", contamination_protocol),
        ("11 tabular improvement", tabular_improvement),
        ("12 sensitivity robustness", sensitivity_robustness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
