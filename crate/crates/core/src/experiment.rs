//! Leave-one-home-out experiment protocol: per fold, build the variant's
//! features, grid-search and fit on the training homes, then score the
//! held-out home with and without an added mains load.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Home, PowerSeries, REFRIGERATOR};
use crate::error::{NilmError, Result};
use crate::features::{self, FeatureMatrix, WindowConfig, RANGE_COLUMN};
use crate::kernels::KernelSpec;
use crate::metrics::{self, MetricsReport};
use crate::sparse_gp::{self, Grid, GridResult, PredictiveDistribution, SparseGPModel, TrainConfig};
use crate::synth::{self, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Point,
    Seq2point,
    Seq2pointLinear,
    Features,
    FeaturesLinear,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 5] = [
        ModelVariant::Point,
        ModelVariant::Seq2point,
        ModelVariant::Seq2pointLinear,
        ModelVariant::Features,
        ModelVariant::FeaturesLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Point => "point",
            ModelVariant::Seq2point => "seq2point",
            ModelVariant::Seq2pointLinear => "seq2point_linear",
            ModelVariant::Features => "features",
            ModelVariant::FeaturesLinear => "features_linear",
        }
    }

    pub fn uses_window(self) -> bool {
        self != ModelVariant::Point
    }

    /// Inputs for this variant from a mains series.
    pub fn features(self, mains: &PowerSeries, window_k: usize) -> Result<FeatureMatrix> {
        let cfg = WindowConfig::new(window_k);
        match self {
            ModelVariant::Point => features::point_features(mains),
            ModelVariant::Seq2point => features::window_features(mains, cfg),
            ModelVariant::Seq2pointLinear => features::window_features_with_range(mains, cfg),
            ModelVariant::Features | ModelVariant::FeaturesLinear => {
                features::statistical_features(mains, cfg)
            }
        }
    }

    pub fn kernel(self, window_k: usize) -> KernelSpec {
        let w = 2 * window_k + 1;
        match self {
            ModelVariant::Point => KernelSpec::matern52(),
            ModelVariant::Seq2point => KernelSpec::matern52_ard(w),
            ModelVariant::Seq2pointLinear => KernelSpec::matern52_ard_plus_linear(w + 1, w),
            ModelVariant::Features => KernelSpec::matern52_ard(features::STAT_FEATURES.len()),
            ModelVariant::FeaturesLinear => {
                KernelSpec::matern52_ard_plus_linear(features::STAT_FEATURES.len(), RANGE_COLUMN)
            }
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = NilmError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| NilmError::Config(format!("unknown model variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synth(SynthConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub variants: Vec<ModelVariant>,
    pub window_k: usize,
    /// Constant loads added to the test mains; one evaluation per entry.
    pub bias_watts: Vec<f64>,
    pub grid: Grid,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Appliance being disaggregated.
    pub target: String,
    pub workers: usize,
    pub clamp_negative: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DataSource::Synth(SynthConfig::default()),
            variants: vec![ModelVariant::Point],
            window_k: WindowConfig::default().half_width_k,
            bias_watts: vec![0.0],
            grid: Grid::default(),
            seed: 0,
            output_dir: PathBuf::from("results"),
            target: REFRIGERATOR.into(),
            workers: 1,
            clamp_negative: false,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| NilmError::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| NilmError::Config(format!("{key}: cannot parse {value:?}")))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    fn synth_mut(&mut self) -> &mut SynthConfig {
        if let DataSource::Manifest(_) = self.source {
            self.source = DataSource::Synth(SynthConfig::default());
        }
        match &mut self.source {
            DataSource::Synth(s) => s,
            DataSource::Manifest(_) => unreachable!(),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "manifest" => self.source = DataSource::Manifest(PathBuf::from(value.trim())),
            "synth_homes" => self.synth_mut().n_homes = parse_one(key, value)?,
            "synth_minutes" => self.synth_mut().minutes_per_home = parse_one(key, value)?,
            "synth_seed" => self.synth_mut().seed = parse_one(key, value)?,
            "synth_noise_watts" => self.synth_mut().noise_watts = parse_one(key, value)?,
            "variant" => self.variants = parse_list(key, value)?,
            "window_k" => self.window_k = parse_one(key, value)?,
            "bias_watts" => self.bias_watts = parse_list(key, value)?,
            "grid_inducing" => self.grid.num_inducing = parse_list(key, value)?,
            "grid_learning_rate" => self.grid.learning_rate = parse_list(key, value)?,
            "grid_epochs" => self.grid.epochs = parse_list(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "target" => self.target = value.trim().to_string(),
            "workers" => self.workers = parse_one(key, value)?,
            "clamp_negative" => self.clamp_negative = parse_one(key, value)?,
            other => return Err(NilmError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                NilmError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| e.context(format!("config line {}", i + 1)))?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        match &self.source {
            DataSource::Manifest(p) => {
                let _ = writeln!(out, "manifest = {}", p.display());
            }
            DataSource::Synth(s) => {
                let _ = writeln!(out, "synth_homes = {}", s.n_homes);
                let _ = writeln!(out, "synth_minutes = {}", s.minutes_per_home);
                let _ = writeln!(out, "synth_seed = {}", s.seed);
                let _ = writeln!(out, "synth_noise_watts = {}", s.noise_watts);
            }
        }
        let names: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        let _ = writeln!(out, "variant = {}", names.join(","));
        let _ = writeln!(out, "window_k = {}", self.window_k);
        let _ = writeln!(out, "bias_watts = {}", join(&self.bias_watts));
        let _ = writeln!(out, "grid_inducing = {}", join(&self.grid.num_inducing));
        let _ = writeln!(out, "grid_learning_rate = {}", join(&self.grid.learning_rate));
        let _ = writeln!(out, "grid_epochs = {}", join(&self.grid.epochs));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "out = {}", self.output_dir.display());
        let _ = writeln!(out, "target = {}", self.target);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "clamp_negative = {}", self.clamp_negative);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(NilmError::Config("no model variant selected".into()));
        }
        if self.bias_watts.is_empty() || self.bias_watts.iter().any(|b| !b.is_finite()) {
            return Err(NilmError::Config("bias_watts must list finite values".into()));
        }
        if self.variants.iter().any(|v| v.uses_window()) && self.window_k == 0 {
            return Err(NilmError::Config("window variants need window_k >= 1".into()));
        }
        if self.workers == 0 {
            return Err(NilmError::Config("workers must be at least 1".into()));
        }
        self.grid.validate()?;
        if let DataSource::Synth(s) = &self.source {
            s.validate()?;
        }
        Ok(())
    }
}

/// Loads (or generates) homes and rebuilds mains as the artificial aggregate.
pub fn load_homes(source: &DataSource) -> Result<Vec<Home>> {
    let raw = match source {
        DataSource::Manifest(p) => data::load_manifest(p)?,
        DataSource::Synth(s) => synth::generate(s)?,
    };
    raw.iter()
        .map(|h| data::prepare_home(h).map_err(|e| e.context(format!("home {}", h.home_id))))
        .collect()
}

/// A fitted model plus what is needed to rebuild its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: ModelVariant,
    pub window_k: usize,
    pub target: String,
    pub train_home_ids: Vec<String>,
    pub train_config: TrainConfig,
    pub model: SparseGPModel,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| NilmError::Data(format!("serializing model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NilmError::Data(format!("reading model: {e}")))
    }
}

/// Aligned inputs and targets for one home.
pub fn home_design(
    home: &Home,
    variant: ModelVariant,
    window_k: usize,
    target: &str,
    bias_watts: f64,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let mains = data::inject_bias(home.mains()?, bias_watts);
    let f = variant.features(&mains, window_k)?;
    f.align(home.appliance(target)?)
}

fn stack(parts: &[(FeatureMatrix, Vec<f64>)]) -> (DMatrix<f64>, Vec<f64>) {
    let n: usize = parts.iter().map(|p| p.0.nrows()).sum();
    let d = parts[0].0.ncols();
    let mut x = DMatrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    let mut row = 0;
    for (f, t) in parts {
        x.rows_mut(row, f.nrows()).copy_from(&f.rows);
        row += f.nrows();
        y.extend_from_slice(t);
    }
    (x, y)
}

/// Grid search then a final fit on all rows of the training homes.
pub fn train_on_homes(
    homes: &[&Home],
    variant: ModelVariant,
    window_k: usize,
    target: &str,
    grid: &Grid,
    seed: u64,
) -> Result<(TrainedModel, GridResult)> {
    if homes.is_empty() {
        return Err(NilmError::Config("no training homes".into()));
    }
    let parts = homes
        .iter()
        .map(|h| home_design(h, variant, window_k, target, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let (x, y) = stack(&parts);
    let spec = variant.kernel(window_k);
    let search = sparse_gp::grid_search(&x, &y, &spec, grid, seed)?;
    let model = sparse_gp::fit(&x, &y, &spec, &search.best)?;
    Ok((
        TrainedModel {
            variant,
            window_k,
            target: target.to_string(),
            train_home_ids: homes.iter().map(|h| h.home_id.clone()).collect(),
            train_config: search.best.clone(),
            model,
        },
        search,
    ))
}

/// Predicts the target appliance for a home whose mains carries `bias_watts`
/// of extra load. Returns the prediction and the untouched appliance truth.
pub fn predict_home(
    trained: &TrainedModel,
    home: &Home,
    bias_watts: f64,
) -> Result<(PredictiveDistribution, Vec<f64>)> {
    let (f, truth) = home_design(home, trained.variant, trained.window_k, &trained.target, bias_watts)?;
    Ok((sparse_gp::predict_features(&trained.model, &f)?, truth))
}

pub fn predictions_csv(pred: &PredictiveDistribution, truth: &[f64]) -> String {
    let mut out = String::from("timestamp,mean_watts,variance_watts2,truth_watts\n");
    for i in 0..pred.len() {
        let ts = pred.timestamps.get(i).copied().unwrap_or(i as i64);
        let _ = writeln!(out, "{ts},{},{},{}", pred.mean[i], pred.variance[i], truth[i]);
    }
    out
}

pub fn parse_predictions_csv(text: &str, path: &Path) -> Result<(PredictiveDistribution, Vec<f64>)> {
    let mut pred = PredictiveDistribution {
        mean: Vec::new(),
        variance: Vec::new(),
        timestamps: Vec::new(),
    };
    let mut truth = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("timestamp") || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| NilmError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err("expected 4 columns"));
        }
        pred.timestamps.push(f[0].parse().map_err(|_| err("bad timestamp"))?);
        pred.mean.push(f[1].parse().map_err(|_| err("bad mean"))?);
        pred.variance.push(f[2].parse().map_err(|_| err("bad variance"))?);
        truth.push(f[3].parse().map_err(|_| err("bad truth"))?);
    }
    Ok((pred, truth))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<(PredictiveDistribution, Vec<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NilmError::io(path, e))?;
    parse_predictions_csv(&text, path)
}

/// A metrics report labelled with where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub report: MetricsReport,
    pub variant: String,
    pub bias_watts: f64,
    /// Test home id, or `mean` for the average over folds.
    pub fold: String,
}

pub const MEAN_FOLD: &str = "mean";

impl MetricsRecord {
    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        let r = &self.report;
        format!(
            "mae={}\nmsll={}\nce95={}\nece={}\nn_points={}\nvariant={}\nbias_watts={}\nfold={}\n",
            r.mae, r.msll, r.ce95, r.ece, r.n_points, self.variant, self.bias_watts, self.fold
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NilmError::Data(format!("metrics line {line:?} lacks '='")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| NilmError::Data(format!("metrics file lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| NilmError::Data(format!("metrics key {k} is not a number")))
        };
        Ok(MetricsRecord {
            report: MetricsReport {
                mae: num("mae")?,
                msll: num("msll")?,
                ce95: num("ce95")?,
                ece: num("ece")?,
                n_points: get("n_points")?
                    .parse()
                    .map_err(|_| NilmError::Data("n_points is not an integer".into()))?,
            },
            variant: get("variant")?,
            bias_watts: num("bias_watts")?,
            fold: get("fold")?,
        })
    }
}

/// Unweighted mean of per-fold reports.
pub fn average(records: &[&MetricsRecord]) -> Result<MetricsRecord> {
    let first = records
        .first()
        .ok_or_else(|| NilmError::Data("nothing to average".into()))?;
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| records.iter().map(|r| f(&r.report)).sum::<f64>() / n;
    Ok(MetricsRecord {
        report: MetricsReport {
            mae: mean(|r| r.mae),
            msll: mean(|r| r.msll),
            ce95: mean(|r| r.ce95),
            ece: mean(|r| r.ece),
            n_points: records.iter().map(|r| r.report.n_points).sum(),
        },
        variant: first.variant.clone(),
        bias_watts: first.bias_watts,
        fold: MEAN_FOLD.into(),
    })
}

/// Text table with one row per variant and an `MAE MSLL CE(95%) ECE` block
/// per bias condition. Only fold-mean records are used when any are present.
pub fn emit_table(records: &[MetricsRecord]) -> String {
    let use_mean = records.iter().any(|r| r.fold == MEAN_FOLD);
    let rows: Vec<&MetricsRecord> = records
        .iter()
        .filter(|r| !use_mean || r.fold == MEAN_FOLD)
        .collect();
    let mut variants: Vec<&str> = Vec::new();
    let mut biases: Vec<f64> = Vec::new();
    for r in &rows {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
        if !biases.contains(&r.bias_watts) {
            biases.push(r.bias_watts);
        }
    }
    biases.sort_by(f64::total_cmp);
    let name_w = variants.iter().map(|v| v.len()).max().unwrap_or(5).max(5);
    let block_w = 36;
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Model");
    for b in &biases {
        let label = if *b == 0.0 {
            "Artificial mains".to_string()
        } else {
            format!("Artificial mains {b:+} W")
        };
        let _ = write!(out, " | {label:<block_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}", "");
    for _ in &biases {
        let _ = write!(out, " | {:>8} {:>8} {:>8} {:>8}", "MAE", "MSLL", "CE(95%)", "ECE");
    }
    out.push('\n');
    for v in &variants {
        let _ = write!(out, "{v:<name_w$}");
        for b in &biases {
            match rows.iter().find(|r| r.variant == *v && r.bias_watts == *b) {
                Some(r) => {
                    let m = &r.report;
                    let _ = write!(out, " | {:>8.2} {:>8.2} {:>8.3} {:>8.3}", m.mae, m.msll, m.ce95, m.ece);
                }
                None => {
                    let _ = write!(out, " | {:>8} {:>8} {:>8} {:>8}", "-", "-", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn bias_label(b: f64) -> String {
    format!("{b}").replace('-', "m")
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub fold_records: Vec<MetricsRecord>,
    pub mean_records: Vec<MetricsRecord>,
    pub models: Vec<TrainedModel>,
    pub files: Vec<PathBuf>,
    pub table: String,
}

impl ExperimentOutcome {
    pub fn mean_for(&self, variant: ModelVariant, bias_watts: f64) -> Option<&MetricsReport> {
        self.mean_records
            .iter()
            .find(|r| r.variant == variant.name() && r.bias_watts == bias_watts)
            .map(|r| &r.report)
    }
}

struct FoldResult {
    model: TrainedModel,
    per_bias: Vec<(f64, PredictiveDistribution, Vec<f64>, MetricsReport)>,
}

fn run_fold(
    cfg: &ExperimentConfig,
    homes: &[Home],
    test_id: &str,
    variant: ModelVariant,
) -> Result<FoldResult> {
    let train: Vec<&Home> = homes.iter().filter(|h| h.home_id != test_id).collect();
    let test = homes
        .iter()
        .find(|h| h.home_id == test_id)
        .ok_or_else(|| NilmError::Data(format!("unknown test home {test_id}")))?;
    let (model, _) = train_on_homes(&train, variant, cfg.window_k, &cfg.target, &cfg.grid, cfg.seed)?;
    let mut per_bias = Vec::new();
    for &b in &cfg.bias_watts {
        let (mut pred, truth) = predict_home(&model, test, b)?;
        if cfg.clamp_negative {
            pred = pred.clamped_at_zero();
        }
        let report = metrics::evaluate(&pred, &truth)?;
        per_bias.push((b, pred, truth, report));
    }
    Ok(FoldResult { model, per_bias })
}

/// Runs the full protocol and writes predictions, per-fold and mean metrics,
/// reliability curves, trained models and a summary table under
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let homes = load_homes(&cfg.source)?;
    let ids: Vec<String> = homes.iter().map(|h| h.home_id.clone()).collect();
    let plan = data::make_folds(&ids)?;

    let jobs: Vec<(ModelVariant, String)> = cfg
        .variants
        .iter()
        .flat_map(|v| plan.folds.iter().map(move |f| (*v, f.test_home_id.clone())))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| NilmError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<FoldResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|(v, test)| {
                run_fold(cfg, &homes, test, *v)
                    .map_err(|e| e.context(format!("variant {v}, test home {test}")))
            })
            .collect()
    });

    let out = &cfg.output_dir;
    let mut files = Vec::new();
    let mut write = |rel: String, body: &[u8]| -> Result<()> {
        let path = out.join(rel);
        data::write_atomic(&path, body)?;
        files.push(path);
        Ok(())
    };
    write("config.txt".into(), cfg.to_kv().as_bytes())?;

    let mut fold_records = Vec::new();
    let mut models = Vec::new();
    for ((variant, test), res) in jobs.iter().zip(results) {
        let res = res?;
        write(format!("models/{variant}_fold-{test}.json"), res.model.to_json()?.as_bytes())?;
        for (b, pred, truth, report) in res.per_bias {
            let stem = format!("{variant}_bias-{}_fold-{test}", bias_label(b));
            write(format!("predictions/{stem}.csv"), predictions_csv(&pred, &truth).as_bytes())?;
            let curve = metrics::reliability_curve(&pred, &truth, &metrics::ece_levels())?;
            write(format!("reliability/{stem}.csv"), curve.to_csv().as_bytes())?;
            let rec = MetricsRecord {
                report,
                variant: variant.name().into(),
                bias_watts: b,
                fold: test.clone(),
            };
            write(format!("metrics/{stem}.txt"), rec.to_kv().as_bytes())?;
            fold_records.push(rec);
        }
        models.push(res.model);
    }

    let mut mean_records = Vec::new();
    for v in &cfg.variants {
        for &b in &cfg.bias_watts {
            let group: Vec<&MetricsRecord> = fold_records
                .iter()
                .filter(|r| r.variant == v.name() && r.bias_watts == b)
                .collect();
            let mean = average(&group)?;
            write(
                format!("metrics/{v}_bias-{}_{MEAN_FOLD}.txt", bias_label(b)),
                mean.to_kv().as_bytes(),
            )?;
            mean_records.push(mean);
        }
    }
    let table = emit_table(&mean_records);
    write("summary.txt".into(), table.as_bytes())?;
    Ok(ExperimentOutcome {
        fold_records,
        mean_records,
        models,
        files,
        table,
    })
}
