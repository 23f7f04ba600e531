//! Sparse variational GP regression with the collapsed (optimal-q) bound.
//!
//! With inducing inputs `Z`, `Kmm = k(Z, Z)`, `Kmn = k(Z, X)` and
//! `Qnn = Knm Kmm^-1 Kmn` the training objective is
//!
//! ```text
//! F = log N(y | 0, Qnn + s I) - tr(Knn - Qnn) / (2 s)
//! ```
//!
//! evaluated through `A = L^-1 Kmn / sqrt(s)` and `B = I + A A^T` so that
//! nothing larger than `m x n` is ever formed.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::features::FeatureMatrix;
use crate::kernels::{self, softplus, softplus_grad, KernelParams, KernelSpec};

/// Initial relative jitter added to `Kmm` before factorizing.
pub const JITTER: f64 = 1e-10;
/// Number of times the jitter is raised tenfold before giving up.
pub const JITTER_RETRIES: u32 = 6;
/// Lower bound on the noise variance, in standardized units.
pub const NOISE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_inducing: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_inducing == 0 {
            return Err(NilmError::Config("num_inducing must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(NilmError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NilmError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Factors needed for prediction, fixed at the end of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCache {
    /// Cholesky factor of the jittered `Kmm`.
    pub chol_kmm: DMatrix<f64>,
    /// Cholesky factor of `I + A A^T`.
    pub chol_b: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseGPModel {
    pub spec: KernelSpec,
    pub params: KernelParams,
    /// Raw (pre-softplus) noise variance.
    pub noise_raw: f64,
    /// Inducing inputs in standardized feature units, `m x d`.
    pub inducing_inputs: DMatrix<f64>,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub seed: u64,
    pub cache: Option<PosteriorCache>,
}

impl SparseGPModel {
    pub fn noise_variance(&self) -> f64 {
        softplus(self.noise_raw) + NOISE_FLOOR
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing_inputs.nrows()
    }

    /// Length of the flattened trainable vector: kernel raw params, raw noise, inducing inputs.
    pub fn num_trainable(&self) -> usize {
        self.params.len() + 1 + self.inducing_inputs.len()
    }

    pub fn trainable(&self) -> Vec<f64> {
        let mut v = self.params.raw.clone();
        v.push(self.noise_raw);
        let (m, d) = self.inducing_inputs.shape();
        for i in 0..m {
            for j in 0..d {
                v.push(self.inducing_inputs[(i, j)]);
            }
        }
        v
    }

    pub fn set_trainable(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.num_trainable(), "trainable vector length");
        let np = self.params.len();
        self.params.raw.copy_from_slice(&v[..np]);
        self.noise_raw = v[np];
        let d = self.inducing_inputs.ncols();
        for (k, val) in v[np + 1..].iter().enumerate() {
            self.inducing_inputs[(k / d, k % d)] = *val;
        }
        self.cache = None;
    }

    /// Named constrained hyperparameters, for reporting (e.g. ARD relevance).
    pub fn hyperparameters(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .spec
            .param_names()
            .into_iter()
            .zip(self.params.constrained())
            .collect();
        out.push(("noise_variance".into(), self.noise_variance()));
        out
    }

    pub fn standardize_inputs(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_raw.ncols() != self.x_mean.len() {
            return Err(NilmError::Input(format!(
                "inputs have {} columns, model expects {}",
                x_raw.ncols(),
                self.x_mean.len()
            )));
        }
        Ok(DMatrix::from_fn(x_raw.nrows(), x_raw.ncols(), |i, j| {
            (x_raw[(i, j)] - self.x_mean[j]) / self.x_std[j]
        }))
    }

    pub fn standardize_targets(&self, y_raw: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y_raw.len(), y_raw.iter().map(|y| (y - self.y_mean) / self.y_std))
    }
}

/// Gaussian predictive distribution in watts, one entry per test row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub timestamps: Vec<i64>,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Copy with negative means clamped to zero watts. Variances are untouched.
    pub fn clamped_at_zero(&self) -> Self {
        PredictiveDistribution {
            mean: self.mean.iter().map(|m| m.max(0.0)).collect(),
            ..self.clone()
        }
    }
}

/// Cholesky with relative jitter, raising the jitter tenfold on failure.
/// Returns the factorization and the jitter actually added.
pub fn jittered_cholesky(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let base = JITTER * k.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut jitter = base;
    for _ in 0..=JITTER_RETRIES {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(kj) {
            if ch.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((ch, jitter));
            }
        }
        jitter *= 10.0;
    }
    Err(NilmError::Numerical(format!(
        "Cholesky of a {n}x{n} matrix failed with jitter up to {:e}",
        jitter / 10.0
    )))
}

fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = b.clone();
    l.solve_lower_triangular_mut(&mut out);
    out
}

fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = b.clone();
    l.solve_lower_triangular_mut(&mut out);
    out
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>, spec: &KernelSpec) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(NilmError::Input(format!(
            "{} input rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() != spec.input_dim() {
        return Err(NilmError::Input(format!(
            "inputs have {} columns, kernel expects {}",
            x.ncols(),
            spec.input_dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(NilmError::Input("no training rows".into()));
    }
    Ok(())
}

struct BoundState {
    value: f64,
    cache: PosteriorCache,
    grad: Option<Vec<f64>>,
}

/// Collapsed bound, optionally with its gradient with respect to the
/// flattened trainable vector (see [`SparseGPModel::trainable`]).
fn collapsed_bound(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &SparseGPModel,
    want_grad: bool,
) -> Result<BoundState> {
    check_training(x, y, &model.spec)?;
    let spec = &model.spec;
    let params = &model.params;
    let z = &model.inducing_inputs;
    if z.ncols() != spec.input_dim() || z.nrows() == 0 {
        return Err(NilmError::Input("inducing inputs do not match the kernel".into()));
    }
    let n = x.nrows();
    let m = z.nrows();
    let s = model.noise_variance();
    let sigma = s.sqrt();

    let kmm = kernels::gram(z, z, spec, params)?;
    let (chol, jitter) = jittered_cholesky(&kmm)?;
    let l = chol.l();
    let kmn = kernels::gram(z, x, spec, params)?;
    let knn_diag = kernels::gram_diag(x, spec, params)?;

    let a = solve_lower(&l, &kmn) / sigma;
    let aat = &a * a.transpose();
    let b = DMatrix::identity(m, m) + &aat;
    let chol_b = Cholesky::new(b)
        .ok_or_else(|| NilmError::Numerical("factorizing I + A A^T failed".into()))?;
    let lb = chol_b.l();
    let ay = &a * y;
    let c = solve_lower_vec(&lb, &ay) / sigma;

    let yy = y.dot(y);
    let log_det_b: f64 = 2.0 * lb.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace_knn: f64 = knn_diag.iter().sum();
    let nf = n as f64;
    let value = -0.5 * nf * LN_2PI - 0.5 * log_det_b - 0.5 * nf * s.ln() - 0.5 * yy / s
        + 0.5 * c.dot(&c)
        - 0.5 * trace_knn / s
        + 0.5 * aat.trace();
    if !value.is_finite() {
        return Err(NilmError::Numerical(format!("bound evaluated to {value}")));
    }

    let cache = PosteriorCache {
        chol_kmm: l.clone(),
        chol_b: lb.clone(),
        c: c.clone(),
    };
    if !want_grad {
        return Ok(BoundState {
            value,
            cache,
            grad: None,
        });
    }

    // P = K + U U^T / s = L B L^T, with K the jittered Kmm and U = Kmn.
    let l_inv = solve_lower(&l, &DMatrix::identity(m, m));
    let k_inv = l_inv.transpose() * &l_inv;
    let lb_inv = solve_lower(&lb, &DMatrix::identity(m, m));
    let b_inv = lb_inv.transpose() * &lb_inv;
    let p_inv = l_inv.transpose() * &b_inv * &l_inv;
    let u = &kmn;
    let uut = u * u.transpose();
    let v = u * y;
    let bvec = &p_inv * &v;

    let s2 = s * s;
    let s3 = s2 * s;
    let kinv_uut_kinv = &k_inv * &uut * &k_inv;
    let g_k = (&k_inv - &p_inv) * 0.5 - &bvec * bvec.transpose() * (0.5 / s2) - kinv_uut_kinv * (0.5 / s);
    let g_u = ((&k_inv - &p_inv) / s - &bvec * bvec.transpose() / s3) * u + &bvec * y.transpose() / s2;

    let tr_pinv_uut = p_inv.component_mul(&uut).sum();
    let tr_kinv_uut = k_inv.component_mul(&uut).sum();
    let ut_b = u.transpose() * &bvec;
    let d_s = 0.5 * tr_pinv_uut / s2 - 0.5 * nf / s + 0.5 * yy / s2 - v.dot(&bvec) / s3
        + 0.5 * ut_b.dot(&ut_b) / (s2 * s2)
        + 0.5 * (trace_knn - tr_kinv_uut) / s2;

    let np = params.len();
    let d = spec.input_dim();
    let mut grad = vec![0.0; np + 1 + m * d];

    // Kmm enters through both arguments.
    let g_k_sym = &g_k + g_k.transpose();
    let (pg, zg) = kernels::gram_vjp(z, z, spec, params, &g_k_sym, true)?;
    let mut zgrad = zg.expect("input gradient requested");
    for (g, p) in grad.iter_mut().zip(&pg) {
        *g += 0.5 * p;
    }
    // jitter = JITTER * 10^k * mean(diag Kmm) also depends on the parameters
    let jitter_scale = jitter / kmm.diagonal().mean();
    let w_jit = vec![g_k.trace() * jitter_scale / m as f64; m];
    let (pg, zg) = kernels::gram_diag_vjp(z, spec, params, &w_jit)?;
    for (g, p) in grad.iter_mut().zip(&pg) {
        *g += p;
    }
    zgrad += zg;
    let (pg, zg) = kernels::gram_vjp(z, x, spec, params, &g_u, true)?;
    for (g, p) in grad.iter_mut().zip(&pg) {
        *g += p;
    }
    zgrad += zg.expect("input gradient requested");
    let w_diag = vec![-0.5 / s; n];
    let (pg, _) = kernels::gram_diag_vjp(x, spec, params, &w_diag)?;
    for (g, p) in grad.iter_mut().zip(&pg) {
        *g += p;
    }
    grad[np] = d_s * softplus_grad(model.noise_raw);
    for i in 0..m {
        for j in 0..d {
            grad[np + 1 + i * d + j] = zgrad[(i, j)];
        }
    }
    Ok(BoundState {
        value,
        cache,
        grad: Some(grad),
    })
}

/// Collapsed evidence lower bound on standardized `x`, `y`.
pub fn elbo(x: &DMatrix<f64>, y: &DVector<f64>, model: &SparseGPModel) -> Result<f64> {
    Ok(collapsed_bound(x, y, model, false)?.value)
}

/// Gradient of [`elbo`] with respect to `model.trainable()`.
pub fn elbo_grad(x: &DMatrix<f64>, y: &DVector<f64>, model: &SparseGPModel) -> Result<Vec<f64>> {
    Ok(collapsed_bound(x, y, model, true)?
        .grad
        .expect("gradient requested"))
}

pub fn elbo_and_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &SparseGPModel,
) -> Result<(f64, Vec<f64>)> {
    let st = collapsed_bound(x, y, model, true)?;
    Ok((st.value, st.grad.expect("gradient requested")))
}

/// Recomputes the posterior factors for `model` on standardized training data.
pub fn condition(x: &DMatrix<f64>, y: &DVector<f64>, model: &mut SparseGPModel) -> Result<f64> {
    let st = collapsed_bound(x, y, model, false)?;
    model.cache = Some(st.cache);
    Ok(st.value)
}

fn column_stats(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 });
    }
    (means, stds)
}

/// Seeded random subset of `m` row indices, drawn from rows with distinct
/// values first; repeated rows are used only when there are too few distinct ones.
fn inducing_rows(x: &DMatrix<f64>, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seen = HashSet::new();
    let (mut distinct, mut repeats) = (Vec::new(), Vec::new());
    for i in 0..x.nrows() {
        let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            distinct.push(i);
        } else {
            repeats.push(i);
        }
    }
    let mut rows: Vec<usize> = if distinct.len() >= m {
        index::sample(rng, distinct.len(), m).into_iter().map(|k| distinct[k]).collect()
    } else {
        let extra = index::sample(rng, repeats.len(), m - distinct.len());
        distinct.iter().copied().chain(extra.into_iter().map(|k| repeats[k])).collect()
    };
    rows.sort_unstable();
    rows
}

/// Outcome of training: the model and the bound after every epoch
/// (`trace[0]` is the bound at initialization).
#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: SparseGPModel,
    pub elbo_trace: Vec<f64>,
}

/// Initial, untrained model: standardization from the training data,
/// standard-normal raw hyperparameters and a random subset of rows as
/// inducing inputs, all drawn from `config.seed`.
pub fn init_model(
    x_raw: &DMatrix<f64>,
    y_raw: &[f64],
    spec: &KernelSpec,
    config: &TrainConfig,
) -> Result<(SparseGPModel, DMatrix<f64>, DVector<f64>)> {
    spec.validate()?;
    config.validate()?;
    let n = x_raw.nrows();
    if x_raw.ncols() != spec.input_dim() {
        return Err(NilmError::Input(format!(
            "inputs have {} columns, kernel expects {}",
            x_raw.ncols(),
            spec.input_dim()
        )));
    }
    if y_raw.len() != n {
        return Err(NilmError::Input(format!("{n} input rows but {} targets", y_raw.len())));
    }
    if x_raw.iter().chain(y_raw).any(|v| !v.is_finite()) {
        return Err(NilmError::Input("training data contains non-finite values".into()));
    }
    if n < config.num_inducing {
        return Err(NilmError::Config(format!(
            "{} inducing points requested but only {n} training rows",
            config.num_inducing
        )));
    }
    let (x_mean, x_std) = column_stats(x_raw);
    let yv = DMatrix::from_column_slice(n, 1, y_raw);
    let (y_mean, y_std) = column_stats(&yv);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = spec.init_params(&mut rng);
    let noise_raw: f64 = rng.sample(StandardNormal);
    let rows = inducing_rows(x_raw, config.num_inducing, &mut rng);

    let mut model = SparseGPModel {
        spec: spec.clone(),
        params,
        noise_raw,
        inducing_inputs: DMatrix::zeros(config.num_inducing, spec.input_dim()),
        x_mean,
        x_std,
        y_mean: y_mean[0],
        y_std: y_std[0],
        seed: config.seed,
        cache: None,
    };
    let x = model.standardize_inputs(x_raw)?;
    let y = model.standardize_targets(y_raw);
    for (k, r) in rows.iter().enumerate() {
        model.inducing_inputs.set_row(k, &x.row(*r));
    }
    Ok((model, x, y))
}

/// Trains a sparse GP by full-batch Adam ascent on the collapsed bound.
/// The returned model is the best iterate seen.
pub fn fit_with_report(
    x_raw: &DMatrix<f64>,
    y_raw: &[f64],
    spec: &KernelSpec,
    config: &TrainConfig,
) -> Result<FitReport> {
    let (mut model, x, y) = init_model(x_raw, y_raw, spec, config)?;
    let mut theta = model.trainable();
    let mut first = vec![0.0; theta.len()];
    let mut second = vec![0.0; theta.len()];
    let (beta1, beta2, eps) = (0.9_f64, 0.999_f64, 1e-8);

    let (mut value, mut grad) = elbo_and_grad(&x, &y, &model)?;
    let mut best = (value, theta.clone());
    let mut trace = vec![value];
    for epoch in 1..=config.epochs {
        let b1 = 1.0 - beta1.powi(epoch as i32);
        let b2 = 1.0 - beta2.powi(epoch as i32);
        for k in 0..theta.len() {
            first[k] = beta1 * first[k] + (1.0 - beta1) * grad[k];
            second[k] = beta2 * second[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] += config.learning_rate * (first[k] / b1) / ((second[k] / b2).sqrt() + eps);
        }
        model.set_trainable(&theta);
        match elbo_and_grad(&x, &y, &model) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|g| g.is_finite()) => {
                value = v;
                grad = g;
            }
            // Step left the numerically valid region; keep the best iterate.
            _ => break,
        }
        trace.push(value);
        if value > best.0 {
            best = (value, theta.clone());
        }
    }
    model.set_trainable(&best.1);
    condition(&x, &y, &mut model)?;
    Ok(FitReport {
        model,
        elbo_trace: trace,
    })
}

pub fn fit(
    x_raw: &DMatrix<f64>,
    y_raw: &[f64],
    spec: &KernelSpec,
    config: &TrainConfig,
) -> Result<SparseGPModel> {
    Ok(fit_with_report(x_raw, y_raw, spec, config)?.model)
}

/// Predictive distribution of observations (noise included) in watts.
pub fn predict(model: &SparseGPModel, x_raw: &DMatrix<f64>) -> Result<PredictiveDistribution> {
    let cache = model.cache.as_ref().ok_or_else(|| {
        NilmError::Input("model has no posterior; train it or call `condition` first".into())
    })?;
    let xs = model.standardize_inputs(x_raw)?;
    let kms = kernels::gram(&model.inducing_inputs, &xs, &model.spec, &model.params)?;
    let kss = kernels::gram_diag(&xs, &model.spec, &model.params)?;
    let tmp1 = solve_lower(&cache.chol_kmm, &kms);
    let tmp2 = solve_lower(&cache.chol_b, &tmp1);
    let mean_std = tmp2.transpose() * &cache.c;
    let s = model.noise_variance();
    let y_var = model.y_std * model.y_std;
    let mut mean = Vec::with_capacity(xs.nrows());
    let mut variance = Vec::with_capacity(xs.nrows());
    for i in 0..xs.nrows() {
        let q1 = tmp1.column(i).norm_squared();
        let q2 = tmp2.column(i).norm_squared();
        let latent = (kss[i] - q1 + q2).max(0.0);
        mean.push(model.y_std * mean_std[i] + model.y_mean);
        variance.push(y_var * (latent + s));
    }
    Ok(PredictiveDistribution {
        mean,
        variance,
        timestamps: Vec::new(),
    })
}

/// [`predict`] on a feature matrix, carrying its timestamps through.
pub fn predict_features(model: &SparseGPModel, features: &FeatureMatrix) -> Result<PredictiveDistribution> {
    let mut pred = predict(model, &features.rows)?;
    pred.timestamps = features.timestamps.clone();
    Ok(pred)
}

/// Hyperparameter grid: every combination is trained and scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub num_inducing: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            num_inducing: vec![64, 128, 256],
            learning_rate: vec![1e-2, 1e-1],
            epochs: vec![100, 300],
        }
    }
}

impl Grid {
    pub fn cells(&self, seed: u64) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &num_inducing in &self.num_inducing {
            for &learning_rate in &self.learning_rate {
                for &epochs in &self.epochs {
                    out.push(TrainConfig {
                        num_inducing,
                        learning_rate,
                        epochs,
                        seed,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_inducing.is_empty() || self.learning_rate.is_empty() || self.epochs.is_empty() {
            return Err(NilmError::Config("grid lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// Fraction of the training rows (taken from the tail) used to score grid cells.
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct GridResult {
    pub best: TrainConfig,
    /// Validation MAE in watts for every cell, in grid order.
    pub scores: Vec<(TrainConfig, f64)>,
}

/// Exhaustive grid search scored by validation MAE on the trailing 20 % of
/// the rows. A single-cell grid is returned without fitting.
pub fn grid_search(
    x_raw: &DMatrix<f64>,
    y_raw: &[f64],
    spec: &KernelSpec,
    grid: &Grid,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    let cells = grid.cells(seed);
    if cells.len() == 1 {
        return Ok(GridResult {
            best: cells[0].clone(),
            scores: Vec::new(),
        });
    }
    let n = x_raw.nrows();
    let n_val = ((n as f64) * VALIDATION_FRACTION).round() as usize;
    let n_train = n - n_val;
    if n_val == 0 || n_train == 0 {
        return Err(NilmError::Config(format!(
            "{n} rows are too few for a validation split"
        )));
    }
    let x_train = x_raw.rows(0, n_train).into_owned();
    let x_val = x_raw.rows(n_train, n_val).into_owned();
    let mut scores = Vec::with_capacity(cells.len());
    for cell in cells {
        if cell.num_inducing > n_train {
            continue;
        }
        let model = fit(&x_train, &y_raw[..n_train], spec, &cell)?;
        let pred = predict(&model, &x_val)?;
        let mae = pred
            .mean
            .iter()
            .zip(&y_raw[n_train..])
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / n_val as f64;
        scores.push((cell, mae));
    }
    let best = scores
        .iter()
        .fold(None::<&(TrainConfig, f64)>, |acc, cur| match acc {
            Some(a) if a.1 <= cur.1 => Some(a),
            _ => Some(cur),
        })
        .ok_or_else(|| NilmError::Config("no grid cell fits the training set".into()))?
        .0
        .clone();
    Ok(GridResult { best, scores })
}
