#![allow(dead_code)]

use gpnilm::kernels::{self, KernelParams, KernelSpec};
use gpnilm::SparseGPModel;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Covariance built entry by entry from the pointwise kernel.
pub fn pointwise_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, spec: &KernelSpec, params: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        kernels::eval(&row(a, i), &row(b, j), spec, params).unwrap()
    })
}

/// Exact GP log marginal likelihood via a dense n x n Cholesky.
pub fn exact_log_marginal(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
    noise: f64,
) -> f64 {
    let n = x.nrows();
    let k = pointwise_gram(x, x, spec, params) + DMatrix::identity(n, n) * noise;
    let ch = Cholesky::new(k).expect("exact covariance is positive definite");
    let alpha = ch.solve(y);
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI
}

/// Exact GP predictive mean and observation variance.
pub fn exact_predict(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xs: &DMatrix<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
    noise: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let k = pointwise_gram(x, x, spec, params) + DMatrix::identity(n, n) * noise;
    let ch = Cholesky::new(k).unwrap();
    let ks = pointwise_gram(x, xs, spec, params);
    let mean = ks.transpose() * ch.solve(y);
    let v = ch.solve(&ks);
    let var = (0..xs.nrows())
        .map(|i| {
            let kss = kernels::eval(&row(xs, i), &row(xs, i), spec, params).unwrap();
            kss - ks.column(i).dot(&v.column(i)) + noise
        })
        .collect();
    (mean.iter().copied().collect(), var)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Smooth regression data in standardized-looking units.
pub fn synthetic_regression(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, d);
    let y = DVector::from_fn(n, |i, _| {
        let s: f64 = x.row(i).iter().enumerate().map(|(j, v)| (v * (1.0 + j as f64 * 0.3)).sin()).sum();
        s + 0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    (x, y)
}

/// Model in identity standardization with the given inducing inputs.
pub fn model_with(
    spec: KernelSpec,
    params: KernelParams,
    noise_raw: f64,
    z: DMatrix<f64>,
) -> SparseGPModel {
    let d = spec.input_dim();
    SparseGPModel {
        spec,
        params,
        noise_raw,
        inducing_inputs: z,
        x_mean: vec![0.0; d],
        x_std: vec![1.0; d],
        y_mean: 0.0,
        y_std: 1.0,
        seed: 0,
        cache: None,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Largest coordinate-wise discrepancy between the analytic bound gradient
/// and a five-point central difference, scaled by
/// `max(|analytic|, |numeric|, floor)`.
pub fn max_gradient_error(x: &DMatrix<f64>, y: &DVector<f64>, model: &SparseGPModel, step: f64, floor: f64) -> f64 {
    let analytic = gpnilm::sparse_gp::elbo_grad(x, y, model).unwrap();
    let theta = model.trainable();
    let mut probe = model.clone();
    let mut at = |k: usize, offset: f64| {
        let mut t = theta.clone();
        t[k] += offset;
        probe.set_trainable(&t);
        gpnilm::sparse_gp::elbo(x, y, &probe).unwrap()
    };
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let numeric = (8.0 * (at(k, step) - at(k, -step)) - (at(k, 2.0 * step) - at(k, -2.0 * step))) / (12.0 * step);
        let scale = analytic[k].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}
