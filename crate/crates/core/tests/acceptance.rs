//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gated criterion fails.
//!
//! `GPNILM_ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.
//! `GPNILM_REDD_MANIFEST=/path/manifest.txt` enables the optional REDD check.

mod common;

use common::*;
use gpnilm::data::{self, Home};
use gpnilm::experiment::{self, run_experiment, DataSource, ExperimentConfig, ModelVariant};
use gpnilm::features::statistical_features;
use gpnilm::kernels::{softplus_inverse, KernelParams, KernelSpec};
use gpnilm::metrics;
use gpnilm::sparse_gp::{self, Grid, PredictiveDistribution, TrainConfig, NOISE_FLOOR};
use gpnilm::{synth, SynthConfig, WindowConfig};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::Path;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn default_homes() -> Vec<Home> {
    synth::generate(&SynthConfig::default())
        .unwrap()
        .iter()
        .map(|h| data::prepare_home(h).unwrap())
        .collect()
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let (x, y) = synthetic_regression(2024, 50, 3);
    let xs = normal_matrix(&mut ChaCha8Rng::seed_from_u64(2025), 25, 3);
    let spec = KernelSpec::matern52_ard(3);
    let mut worst: f64 = 0.0;
    for (sig, ls, noise) in [(1.0, 1.0, 0.1), (2.0, 0.5, 0.01), (0.7, 3.0, 0.3), (1.3, 1.7, 0.05)] {
        let params = KernelParams::from_constrained(&[sig, ls, ls * 1.5, ls * 0.7]).unwrap();
        let mut model = model_with(spec.clone(), params.clone(), softplus_inverse(noise - NOISE_FLOOR), x.clone());
        let s = model.noise_variance();
        let bound = sparse_gp::condition(&x, &y, &mut model).unwrap();
        worst = worst.max(rel_err(bound, exact_log_marginal(&x, &y, &spec, &params, s)));
        for test in [&xs, &x] {
            let pred = sparse_gp::predict(&model, test).unwrap();
            let (mean, var) = exact_predict(&x, &y, test, &spec, &params, s);
            for i in 0..test.nrows() {
                worst = worst.max(rel_err(pred.mean[i], mean[i]));
                worst = worst.max(rel_err(pred.variance[i], var[i]));
            }
        }
    }
    let t = start.elapsed();
    outcome(worst < 1e-6 && within(t, 5.0), format!("max relative error {worst:.2e} (< 1e-6), {t:.2?} (< 5 s)"))
}

fn lower_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = f64::INFINITY;
    for case in 0..100 {
        let n = rng.random_range(2..=100);
        let d = rng.random_range(1..=5);
        let m = rng.random_range(1..=n);
        let (x, y) = synthetic_regression(1000 + case, n, d);
        let spec = if d > 1 && rng.random_bool(0.5) {
            KernelSpec::matern52_ard_plus_linear(d, rng.random_range(0..d))
        } else {
            KernelSpec::matern52_ard(d)
        };
        let params = spec.init_params(&mut rng);
        let noise_raw: f64 = rng.sample(StandardNormal);
        let rows = index::sample(&mut rng, n, m).into_vec();
        let z = DMatrix::from_fn(m, d, |i, j| x[(rows[i], j)]);
        let model = model_with(spec.clone(), params.clone(), noise_raw, z);
        let bound = sparse_gp::elbo(&x, &y, &model).unwrap();
        let exact = exact_log_marginal(&x, &y, &spec, &params, model.noise_variance());
        worst = worst.min(exact - bound);
    }
    let t = start.elapsed();
    outcome(worst >= -1e-8 && within(t, 30.0), format!("min(exact - bound) {worst:.3e} (>= -1e-8), {t:.2?} (< 30 s)"))
}

const FD_STEP: f64 = 1e-3;
const FD_FLOOR: f64 = 1e-6;

fn gradients(homes: &[Home]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut dims = Vec::new();
    for (v, variant) in ModelVariant::ALL.into_iter().enumerate() {
        let (f, target) = experiment::home_design(&homes[0], variant, 49, "refrigerator", 0.0).unwrap();
        // 30 rows spread over the home so the ON and OFF regimes both appear
        let stride = f.nrows() / 30;
        let rows: Vec<usize> = (0..30).map(|i| i * stride).collect();
        let x_raw = f.rows.select_rows(rows.iter());
        let y_raw: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        let spec = variant.kernel(49);
        dims.push(spec.input_dim());
        let cfg = TrainConfig {
            num_inducing: 5,
            learning_rate: 0.1,
            epochs: 1,
            seed: 31 + v as u64,
        };
        let (model, x, y) = sparse_gp::init_model(&x_raw, &y_raw, &spec, &cfg).unwrap();
        worst = worst.max(max_gradient_error(&x, &y, &model, FD_STEP, FD_FLOOR));
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && within(t, 60.0),
        format!(
            "dims {dims:?}, max relative error {worst:.2e} (< 1e-4; scale max(|g|, {FD_FLOOR:e})), {t:.2?} (< 60 s)"
        ),
    )
}

fn dist(mean: Vec<f64>, variance: Vec<f64>) -> PredictiveDistribution {
    let timestamps = (0..mean.len() as i64).collect();
    PredictiveDistribution {
        mean,
        variance,
        timestamps,
    }
}

fn metric_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    let mae = metrics::mae(&dist(vec![1.0, 2.0], vec![1.0, 1.0]), &[2.0, 4.0]).unwrap();
    worst = worst.max((mae - 1.5).abs());
    let msll = metrics::msll(&dist(vec![0.0], vec![1.0]), &[0.0]).unwrap();
    worst = worst.max((msll - 0.918_938_533_204_672_7).abs());
    let e2 = 1f64.exp().powi(2);
    let msll = metrics::msll(&dist(vec![0.0], vec![e2]), &[0.0]).unwrap();
    worst = worst.max((msll - 1.918_938_533_204_672_7).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-500.0..500.0)).collect();
    let variance: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..400.0)).collect();
    let truth: Vec<f64> = mean
        .iter()
        .zip(&variance)
        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let pred = dist(mean, variance);
    let ce = metrics::coverage_error(&pred, &truth, 0.95).unwrap();
    let ece = metrics::ece(&pred, &truth).unwrap();
    outcome(
        worst < 1e-9 && ce < 0.01 && ece < 0.02,
        format!("analytic max error {worst:.1e} (< 1e-9), CE95 {ce:.4} (< 0.01), ECE {ece:.4} (< 0.02)"),
    )
}

/// Fixed training budget for the synthetic reproduction runs.
fn acceptance_grid() -> Grid {
    Grid {
        num_inducing: vec![64],
        learning_rate: vec![0.1],
        epochs: vec![300],
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn reproduction() -> (Outcome, Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        source: DataSource::Synth(SynthConfig::default()),
        variants: ModelVariant::ALL.to_vec(),
        bias_watts: vec![0.0, 100.0],
        grid: acceptance_grid(),
        seed: 0,
        output_dir: dir.path().to_path_buf(),
        workers: workers(),
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let run = run_experiment(&cfg).unwrap();
    let t = start.elapsed();
    println!("{}", run.table);
    let mae = |v, b| run.mean_for(v, b).unwrap().mae;
    use ModelVariant::*;
    let (fl, f, p, s) = (mae(FeaturesLinear, 0.0), mae(Features, 0.0), mae(Point, 0.0), mae(Seq2point, 0.0));
    let ordering = fl <= f && f < p && s < p;
    let fifth = outcome(
        ordering && within(t, 900.0),
        format!(
            "MAE features_linear {fl:.2} <= features {f:.2} < point {p:.2}: {}; seq2point {s:.2} < point: {}; {t:.0?} (< 15 min)",
            fl <= f && f < p,
            s < p
        ),
    );

    let factor = |v| mae(v, 100.0) / mae(v, 0.0);
    let degrade = ModelVariant::ALL.iter().all(|&v| mae(v, 100.0) > mae(v, 0.0));
    let (ffl, ff, fs) = (factor(FeaturesLinear), factor(Features), factor(Seq2point));
    let sixth = outcome(
        degrade && ffl <= ff && ffl <= fs,
        format!(
            "all variants degrade: {degrade}; factor features_linear {ffl:.2} vs features {ff:.2}, seq2point {fs:.2}"
        ),
    );
    (fifth, sixth)
}

fn shift_invariance(homes: &[Home]) -> Outcome {
    let mut same = true;
    let mut shifted = true;
    for home in homes {
        let mains = home.mains().unwrap();
        let a = statistical_features(mains, WindowConfig::default()).unwrap();
        let b = statistical_features(&data::inject_bias(mains, 100.0), WindowConfig::default()).unwrap();
        for c in 0..a.ncols() {
            let identical = a.rows.column(c).iter().zip(b.rows.column(c).iter()).all(|(p, q)| p.to_bits() == q.to_bits());
            match a.feature_names[c].as_str() {
                "range" | "difference" | "kurtosis" => same &= identical,
                "mean" | "max" | "min" => shifted &= !identical,
                _ => {}
            }
        }
    }
    outcome(same, format!("range/difference/kurtosis bitwise identical: {same}; mean/max/min shifted: {shifted}"))
}

fn read_tree(root: &Path, sub: &str) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(root.join(sub))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let synth = SynthConfig {
        minutes_per_home: 1500,
        ..SynthConfig::default()
    };
    let run = |workers| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            source: DataSource::Synth(synth.clone()),
            variants: ModelVariant::ALL.to_vec(),
            bias_watts: vec![0.0, 100.0],
            grid: Grid {
                num_inducing: vec![16, 24],
                learning_rate: vec![0.1],
                epochs: vec![20],
            },
            seed: 5,
            output_dir: dir.path().to_path_buf(),
            workers,
            ..ExperimentConfig::default()
        };
        run_experiment(&cfg).unwrap();
        (read_tree(dir.path(), "metrics"), read_tree(dir.path(), "predictions"))
    };
    let (m1, p1) = run(1);
    let (m2, p2) = run(workers().max(2));
    let pass = !m1.is_empty() && m1 == m2;
    outcome(
        pass,
        format!("{} metrics files byte-identical: {}; predictions identical: {}", m1.len(), m1 == m2, p1 == p2),
    )
}

fn redd() -> Option<Outcome> {
    let manifest = std::env::var("GPNILM_REDD_MANIFEST").ok()?;
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        source: DataSource::Manifest(manifest.into()),
        variants: vec![ModelVariant::FeaturesLinear],
        output_dir: dir.path().to_path_buf(),
        workers: workers(),
        ..ExperimentConfig::default()
    };
    let run = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return Some(outcome(false, format!("run failed: {e}"))),
    };
    let mae = run.mean_for(ModelVariant::FeaturesLinear, 0.0).unwrap().mae;
    Some(outcome((3.0..=25.0).contains(&mae), format!("features_linear MAE {mae:.2} W (in [3, 25])")))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("GPNILM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut failed = Vec::new();
    let mut report = |k: u32, name: &str, o: Outcome| {
        println!("[{}] {k}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(k);
        }
    };

    let homes = default_homes();
    if wanted(1) {
        report(1, "exactness at Z = X", exactness());
    }
    if wanted(2) {
        report(2, "lower bound", lower_bound());
    }
    if wanted(3) {
        report(3, "gradient vs finite differences", gradients(&homes));
    }
    if wanted(4) {
        report(4, "metric oracles", metric_oracles());
    }
    if wanted(5) || wanted(6) {
        let (fifth, sixth) = reproduction();
        report(5, "variant ordering", fifth);
        report(6, "bias degradation", sixth);
    }
    if wanted(7) {
        report(7, "shift invariance", shift_invariance(&homes));
    }
    if wanted(8) {
        report(8, "determinism", determinism());
    }
    if wanted(9) {
        match redd() {
            Some(o) => println!("[{}] 9. REDD envelope (not gated): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail),
            None => println!("[SKIP] 9. REDD envelope (not gated): GPNILM_REDD_MANIFEST not set"),
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
