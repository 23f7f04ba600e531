use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gpnilm::data::{self, write_atomic};
use gpnilm::experiment::{self, MetricsRecord};
use gpnilm::metrics;
use gpnilm::{synth, DataSource, ExperimentConfig, Home, ModelVariant, SynthConfig, TrainedModel};

#[derive(Parser)]
#[command(name = "gpnilm", version, about = "Gaussian-process energy disaggregation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (one directory per home plus a manifest).
    Synth(SynthArgs),
    /// Resample homes to one-minute readings with an artificial-aggregate mains.
    Prepare(PrepareArgs),
    /// Grid-search and fit one model on a set of homes.
    Train(TrainArgs),
    /// Predict the target appliance of one home with a trained model.
    Predict(PredictArgs),
    /// Compute MAE, MSLL, CE(95%) and ECE from a predictions CSV.
    Evaluate(EvaluateArgs),
    /// Full leave-one-home-out protocol for every configured variant and bias.
    Experiment(ExperimentArgs),
    /// Reliability curve (nominal vs empirical coverage) from a predictions CSV.
    Calibration(CalibrationArgs),
}

/// Settings shared by the commands that read an experiment config.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest (one home directory per line).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Model variant(s), comma separated.
    #[arg(long)]
    variant: Option<String>,
    /// Half window width k (windows hold 2k+1 minutes).
    #[arg(long)]
    window_k: Option<usize>,
    /// Constant load added to test mains, watts (comma separated for several).
    #[arg(long, allow_hyphen_values = true)]
    bias_watts: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Appliance to disaggregate.
    #[arg(long)]
    target: Option<String>,
    /// Grid of inducing-point counts, comma separated.
    #[arg(long)]
    grid_inducing: Option<String>,
    /// Grid of learning rates, comma separated.
    #[arg(long)]
    grid_learning_rate: Option<String>,
    /// Grid of epoch counts, comma separated.
    #[arg(long)]
    grid_epochs: Option<String>,
    /// Report negative predicted watts as zero.
    #[arg(long)]
    clamp_negative: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_kv(&text)
                .with_context(|| format!("in config {}", path.display()))?;
            // manifest paths in a config file are relative to the file
            if let DataSource::Manifest(m) = &cfg.source {
                if m.is_relative() {
                    let base = path.parent().unwrap_or(Path::new("."));
                    cfg.source = DataSource::Manifest(base.join(m));
                }
            }
        }
        let overrides = [
            ("variant", self.variant.clone()),
            ("window_k", self.window_k.map(|v| v.to_string())),
            ("bias_watts", self.bias_watts.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("target", self.target.clone()),
            ("grid_inducing", self.grid_inducing.clone()),
            ("grid_learning_rate", self.grid_learning_rate.clone()),
            ("grid_epochs", self.grid_epochs.clone()),
            ("manifest", self.manifest.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.clamp_negative {
            cfg.clamp_negative = true;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().n_homes)]
    homes: usize,
    #[arg(long, default_value_t = SynthConfig::default().minutes_per_home)]
    minutes: usize,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
    /// Standard deviation of Gaussian noise added to each appliance, watts.
    #[arg(long, default_value_t = 0.0)]
    noise_watts: f64,
}

#[derive(Args)]
struct PrepareArgs {
    /// Manifest of raw homes.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the prepared dataset.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training home ids, comma separated (default: every home except --exclude).
    #[arg(long)]
    homes: Option<String>,
    /// Home id left out of training.
    #[arg(long)]
    exclude: Option<String>,
    /// Where to write the model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Home id to predict.
    #[arg(long)]
    home: String,
    /// Where to write the predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Variant label stored in the metrics file.
    #[arg(long, default_value = "unknown")]
    variant: String,
    /// Bias label stored in the metrics file.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias_watts: f64,
    /// Fold label stored in the metrics file.
    #[arg(long, default_value = "unknown")]
    fold: String,
    /// Metrics file to write; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of synthetic homes (ignored with a manifest).
    #[arg(long)]
    homes: Option<usize>,
    /// Minutes per synthetic home.
    #[arg(long)]
    minutes: Option<usize>,
    /// Concurrent fold fits.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct CalibrationArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Nominal levels, comma separated (default 0.05, 0.10, ..., 0.95).
    #[arg(long)]
    levels: Option<String>,
    /// CSV to write; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())
            .with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn find_home<'a>(homes: &'a [Home], id: &str) -> Result<&'a Home> {
    homes.iter().find(|h| h.home_id == id).with_context(|| {
        let known: Vec<&str> = homes.iter().map(|h| h.home_id.as_str()).collect();
        format!("no home {id:?}; dataset has {}", known.join(", "))
    })
}

fn single_variant(cfg: &ExperimentConfig) -> Result<ModelVariant> {
    match cfg.variants.as_slice() {
        [v] => Ok(*v),
        _ => bail!("exactly one --variant is needed here"),
    }
}

fn single_bias(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.bias_watts.as_slice() {
        [b] => Ok(*b),
        _ => bail!("exactly one --bias-watts value is needed here"),
    }
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_homes: a.homes,
        minutes_per_home: a.minutes,
        seed: a.seed,
        noise_watts: a.noise_watts,
        ..SynthConfig::default()
    };
    let homes = synth::generate(&cfg)?;
    let manifest = data::write_dataset(&a.out, &homes)?;
    println!("{}", manifest.display());
    Ok(())
}

fn run_prepare(a: PrepareArgs) -> Result<()> {
    let homes = data::load_manifest(&a.manifest)?
        .iter()
        .map(|h| data::prepare_home(h).with_context(|| format!("preparing home {}", h.home_id)))
        .collect::<Result<Vec<_>>>()?;
    let manifest = data::write_dataset(&a.out, &homes)?;
    for h in &homes {
        println!("{}: {} minutes", h.home_id, h.mains()?.len());
    }
    println!("{}", manifest.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let variant = single_variant(&cfg)?;
    cfg.grid.validate()?;
    let homes = experiment::load_homes(&cfg.source)?;
    let train: Vec<&Home> = match &a.homes {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|id| find_home(&homes, id))
            .collect::<Result<_>>()?,
        None => homes
            .iter()
            .filter(|h| Some(&h.home_id) != a.exclude.as_ref())
            .collect(),
    };
    let (trained, search) =
        experiment::train_on_homes(&train, variant, cfg.window_k, &cfg.target, &cfg.grid, cfg.seed)?;
    for (cell, mae) in &search.scores {
        eprintln!(
            "m={} lr={} epochs={}: validation MAE {mae:.3} W",
            cell.num_inducing, cell.learning_rate, cell.epochs
        );
    }
    write_atomic(&a.out, trained.to_json()?.as_bytes())?;
    for (name, value) in trained.model.hyperparameters() {
        println!("{name} = {value}");
    }
    Ok(())
}

fn run_predict(a: PredictArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let bias = single_bias(&cfg)?;
    let text = fs::read_to_string(&a.model)
        .with_context(|| format!("reading {}", a.model.display()))?;
    let trained = TrainedModel::from_json(&text)?;
    let homes = experiment::load_homes(&cfg.source)?;
    let home = find_home(&homes, &a.home)?;
    let (mut pred, truth) = experiment::predict_home(&trained, home, bias)?;
    if cfg.clamp_negative {
        pred = pred.clamped_at_zero();
    }
    write_atomic(&a.out, experiment::predictions_csv(&pred, &truth).as_bytes())?;
    println!("{} predictions, MAE {:.3} W", pred.len(), metrics::mae(&pred, &truth)?);
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let (pred, truth) = experiment::read_predictions(&a.predictions)?;
    let rec = MetricsRecord {
        report: metrics::evaluate(&pred, &truth)?,
        variant: a.variant,
        bias_watts: a.bias_watts,
        fold: a.fold,
    };
    write_or_print(a.out.as_deref(), &rec.to_kv())
}

fn run_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    if let Some(n) = a.homes {
        cfg.set("synth_homes", &n.to_string())?;
    }
    if let Some(m) = a.minutes {
        cfg.set("synth_minutes", &m.to_string())?;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let outcome = experiment::run_experiment(&cfg)?;
    print!("{}", outcome.table);
    eprintln!("{} files under {}", outcome.files.len(), cfg.output_dir.display());
    Ok(())
}

fn run_calibration(a: CalibrationArgs) -> Result<()> {
    let (pred, truth) = experiment::read_predictions(&a.predictions)?;
    let levels = match &a.levels {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad level {v:?}")))
            .collect::<Result<Vec<_>>>()?,
        None => metrics::ece_levels(),
    };
    let curve = metrics::reliability_curve(&pred, &truth, &levels)?;
    write_or_print(a.out.as_deref(), &curve.to_csv())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => run_synth(a),
        Command::Prepare(a) => run_prepare(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Calibration(a) => run_calibration(a),
    }
}
