//! Covariance functions used by the disaggregation models.
//!
//! Every kernel hyperparameter is stored as an unconstrained raw value and
//! mapped through softplus, so any real vector is a valid parameter vector.
//! The layout of that vector is a pure function of the [`KernelSpec`]:
//!
//! * `Matern52` / `Matern52Ard`: `[signal_variance, lengthscale_0, ...]`
//! * `LinearOnFeature`: `[linear_variance]`
//! * `Sum`: the children's layouts concatenated in order.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// softplus(x) = ln(1 + e^x)
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], i.e. the logistic sigmoid.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inverse needs a positive value, got {y}");
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// Isotropic Matérn 5/2 on a scalar input.
    Matern52 { input_dim: usize },
    /// Matérn 5/2 with one lengthscale per input dimension.
    Matern52Ard { input_dim: usize },
    /// Homogeneous linear kernel reading a single input column.
    LinearOnFeature {
        input_dim: usize,
        feature_index: usize,
    },
    Sum(Vec<KernelSpec>),
}

impl KernelSpec {
    pub fn matern52() -> Self {
        KernelSpec::Matern52 { input_dim: 1 }
    }

    pub fn matern52_ard(input_dim: usize) -> Self {
        KernelSpec::Matern52Ard { input_dim }
    }

    /// Matérn ARD over every column plus a linear term on `feature_index`.
    pub fn matern52_ard_plus_linear(input_dim: usize, feature_index: usize) -> Self {
        KernelSpec::Sum(vec![
            KernelSpec::Matern52Ard { input_dim },
            KernelSpec::LinearOnFeature {
                input_dim,
                feature_index,
            },
        ])
    }

    pub fn input_dim(&self) -> usize {
        match self {
            KernelSpec::Matern52 { input_dim }
            | KernelSpec::Matern52Ard { input_dim }
            | KernelSpec::LinearOnFeature { input_dim, .. } => *input_dim,
            KernelSpec::Sum(children) => children.first().map_or(0, KernelSpec::input_dim),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            KernelSpec::Matern52 { .. } => 2,
            KernelSpec::Matern52Ard { input_dim } => 1 + input_dim,
            KernelSpec::LinearOnFeature { .. } => 1,
            KernelSpec::Sum(children) => children.iter().map(KernelSpec::num_params).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Matern52 { input_dim } if *input_dim != 1 => Err(NilmError::Config(
                format!("isotropic Matern52 takes a scalar input, got input_dim {input_dim}"),
            )),
            KernelSpec::Matern52Ard { input_dim } if *input_dim == 0 => {
                Err(NilmError::Config("input_dim must be at least 1".into()))
            }
            KernelSpec::LinearOnFeature {
                input_dim,
                feature_index,
            } if *input_dim == 0 || feature_index >= input_dim => Err(NilmError::Config(format!(
                "linear feature index {feature_index} out of range for input_dim {input_dim}"
            ))),
            KernelSpec::Sum(children) => {
                if children.len() < 2 {
                    return Err(NilmError::Config(
                        "a sum kernel needs at least two children".into(),
                    ));
                }
                let d = children[0].input_dim();
                for c in children {
                    c.validate()?;
                    if c.input_dim() != d {
                        return Err(NilmError::Config(format!(
                            "sum kernel children disagree on input_dim ({} vs {d})",
                            c.input_dim()
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Human readable name of every raw parameter, in layout order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_params());
        self.push_names("", &mut out);
        out
    }

    fn push_names(&self, prefix: &str, out: &mut Vec<String>) {
        match self {
            KernelSpec::Matern52 { .. } => {
                out.push(format!("{prefix}matern.signal_variance"));
                out.push(format!("{prefix}matern.lengthscale"));
            }
            KernelSpec::Matern52Ard { input_dim } => {
                out.push(format!("{prefix}matern.signal_variance"));
                for j in 0..*input_dim {
                    out.push(format!("{prefix}matern.lengthscale[{j}]"));
                }
            }
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                out.push(format!("{prefix}linear[{feature_index}].variance"));
            }
            KernelSpec::Sum(children) => {
                for (i, c) in children.iter().enumerate() {
                    c.push_names(&format!("{prefix}sum{i}."), out);
                }
            }
        }
    }

    /// Draws raw parameters i.i.d. from a standard normal.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> KernelParams {
        KernelParams {
            raw: (0..self.num_params())
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        }
    }
}

/// Unconstrained kernel hyperparameters; see the module docs for the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub raw: Vec<f64>,
}

impl KernelParams {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        KernelParams { raw }
    }

    /// Builds parameters from positive (constrained) values.
    pub fn from_constrained(values: &[f64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(NilmError::Input(format!(
                "kernel parameters must be finite and positive, got {v}"
            )));
        }
        Ok(KernelParams {
            raw: values.iter().map(|v| softplus_inverse(*v)).collect(),
        })
    }

    pub fn constrained(&self) -> Vec<f64> {
        self.raw.iter().map(|r| softplus(*r)).collect()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    fn check(&self, spec: &KernelSpec) -> Result<()> {
        if self.raw.len() != spec.num_params() {
            return Err(NilmError::Input(format!(
                "kernel expects {} parameters, got {}",
                spec.num_params(),
                self.raw.len()
            )));
        }
        Ok(())
    }
}

/// Matérn 5/2 covariance at scaled distance `r`.
#[inline]
fn matern_profile(signal: f64, r: f64) -> f64 {
    let s = SQRT5 * r;
    signal * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// `-(dk/dr) / r`, finite at r = 0.
#[inline]
fn matern_slope(signal: f64, r: f64) -> f64 {
    let s = SQRT5 * r;
    signal * (5.0 / 3.0) * (1.0 + s) * (-s).exp()
}

/// Lengthscale lookup shared by the isotropic and ARD variants.
#[inline]
fn lengthscale(ls: &[f64], j: usize) -> f64 {
    if ls.len() == 1 {
        ls[0]
    } else {
        ls[j]
    }
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(NilmError::Input(format!(
            "input has dimension {}, kernel expects {d}",
            x.len()
        )));
    }
    Ok(())
}

/// Matérn 5/2 between two points. `params` must belong to a `Matern52` or
/// `Matern52Ard` spec.
pub fn eval_matern52(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    if params.len() < 2 {
        return Err(NilmError::Input(
            "Matern52 needs a signal variance and at least one lengthscale".into(),
        ));
    }
    let c = params.constrained();
    let ls = &c[1..];
    if x.len() != x2.len() || (ls.len() != 1 && ls.len() != x.len()) {
        return Err(NilmError::Input(format!(
            "dimension mismatch: {} vs {} with {} lengthscales",
            x.len(),
            x2.len(),
            ls.len()
        )));
    }
    let r2: f64 = x
        .iter()
        .zip(x2)
        .enumerate()
        .map(|(j, (a, b))| {
            let t = (a - b) / lengthscale(ls, j);
            t * t
        })
        .sum();
    Ok(matern_profile(c[0], r2.sqrt()))
}

/// Linear kernel `variance * x[i] * x2[i]`; `params` holds the single raw variance.
pub fn eval_linear(x: &[f64], x2: &[f64], params: &KernelParams, feature_index: usize) -> Result<f64> {
    if feature_index >= x.len() || feature_index >= x2.len() {
        return Err(NilmError::Input(format!(
            "feature index {feature_index} out of range for inputs of dimension {}",
            x.len().min(x2.len())
        )));
    }
    if params.len() != 1 {
        return Err(NilmError::Input("linear kernel takes one parameter".into()));
    }
    Ok(softplus(params.raw[0]) * x[feature_index] * x2[feature_index])
}

/// Rows of `x` stored contiguously: point `i` is `pts[i*d..(i+1)*d]`.
struct Points {
    data: Vec<f64>,
    d: usize,
    n: usize,
}

impl Points {
    fn from_rows(x: &DMatrix<f64>) -> Self {
        let (n, d) = x.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(x.row(i).iter());
        }
        Points { data, d, n }
    }

    #[inline]
    fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Copy with column `j` divided by `ls[j]`.
    fn scaled(&self, ls: &[f64]) -> Self {
        let mut data = self.data.clone();
        for chunk in data.chunks_mut(self.d) {
            for (j, v) in chunk.iter_mut().enumerate() {
                *v /= lengthscale(ls, j);
            }
        }
        Points {
            data,
            d: self.d,
            n: self.n,
        }
    }
}

/// Squared distance with four partial sums so the loop vectorizes.
/// Symmetric in its arguments bit for bit.
#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (u, v) in ca.zip(cb) {
        for l in 0..4 {
            let t = u[l] - v[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_cols(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != spec.input_dim() {
        return Err(NilmError::Input(format!(
            "input matrix has {} columns, kernel expects {}",
            x.ncols(),
            spec.input_dim()
        )));
    }
    Ok(())
}

/// Flattens a spec into its leaves, each with its parameter offset.
fn leaves<'a>(spec: &'a KernelSpec, offset: usize, out: &mut Vec<(&'a KernelSpec, usize)>) {
    match spec {
        KernelSpec::Sum(children) => {
            let mut off = offset;
            for c in children {
                leaves(c, off, out);
                off += c.num_params();
            }
        }
        leaf => out.push((leaf, offset)),
    }
}

fn leaf_list(spec: &KernelSpec) -> Vec<(&KernelSpec, usize)> {
    let mut out = Vec::new();
    leaves(spec, 0, &mut out);
    out
}

/// Covariance matrix between the rows of `x` and the rows of `x2`.
pub fn gram(
    x: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    params.check(spec)?;
    check_cols(spec, x)?;
    check_cols(spec, x2)?;
    let c = params.constrained();
    let mut k = DMatrix::zeros(x.nrows(), x2.nrows());
    let p1 = Points::from_rows(x);
    let p2 = Points::from_rows(x2);
    for (leaf, off) in leaf_list(spec) {
        match leaf {
            KernelSpec::Matern52 { .. } | KernelSpec::Matern52Ard { .. } => {
                let signal = c[off];
                let ls = &c[off + 1..off + leaf.num_params()];
                let s1 = p1.scaled(ls);
                let s2 = p2.scaled(ls);
                for j in 0..s2.n {
                    let b = s2.get(j);
                    for i in 0..s1.n {
                        k[(i, j)] += matern_profile(signal, sq_dist(s1.get(i), b).sqrt());
                    }
                }
            }
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                let v = c[off];
                let f = *feature_index;
                for j in 0..x2.nrows() {
                    let b = x2[(j, f)];
                    for i in 0..x.nrows() {
                        k[(i, j)] += v * (x[(i, f)] * b);
                    }
                }
            }
            KernelSpec::Sum(_) => unreachable!("leaves are never sums"),
        }
    }
    Ok(k)
}

/// Diagonal of `gram(x, x)` without forming the full matrix.
pub fn gram_diag(x: &DMatrix<f64>, spec: &KernelSpec, params: &KernelParams) -> Result<Vec<f64>> {
    spec.validate()?;
    params.check(spec)?;
    check_cols(spec, x)?;
    let c = params.constrained();
    let mut diag = vec![0.0; x.nrows()];
    for (leaf, off) in leaf_list(spec) {
        match leaf {
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                for (i, v) in diag.iter_mut().enumerate() {
                    let xi = x[(i, *feature_index)];
                    *v += c[off] * xi * xi;
                }
            }
            _ => diag.iter_mut().for_each(|v| *v += c[off]),
        }
    }
    Ok(diag)
}

/// Derivative of `gram(x, x2)` with respect to raw parameter `param_index`,
/// chain rule through softplus included.
pub fn gram_grad(
    x: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
    param_index: usize,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    params.check(spec)?;
    check_cols(spec, x)?;
    check_cols(spec, x2)?;
    if param_index >= spec.num_params() {
        return Err(NilmError::Input(format!(
            "parameter index {param_index} out of range ({} parameters)",
            spec.num_params()
        )));
    }
    let c = params.constrained();
    let chain = softplus_grad(params.raw[param_index]);
    let mut g = DMatrix::zeros(x.nrows(), x2.nrows());
    let (leaf, off) = leaf_list(spec)
        .into_iter()
        .rfind(|(_, off)| *off <= param_index)
        .expect("parameter index maps to a leaf");
    let local = param_index - off;
    match leaf {
        KernelSpec::Matern52 { .. } | KernelSpec::Matern52Ard { .. } => {
            let signal = c[off];
            let ls = &c[off + 1..off + leaf.num_params()];
            let s1 = Points::from_rows(x).scaled(ls);
            let s2 = Points::from_rows(x2).scaled(ls);
            for j in 0..s2.n {
                let b = s2.get(j);
                for i in 0..s1.n {
                    let a = s1.get(i);
                    let r = sq_dist(a, b).sqrt();
                    g[(i, j)] = if local == 0 {
                        matern_profile(1.0, r)
                    } else {
                        // dk/dl_j = slope(r) * (scaled diff_j)^2 / l_j, summed over
                        // every dimension sharing the lengthscale.
                        let l = ls[local - 1];
                        let acc: f64 = if ls.len() == 1 {
                            sq_dist(a, b)
                        } else {
                            let t = a[local - 1] - b[local - 1];
                            t * t
                        };
                        matern_slope(signal, r) * acc / l
                    } * chain;
                }
            }
        }
        KernelSpec::LinearOnFeature { feature_index, .. } => {
            let f = *feature_index;
            for j in 0..x2.nrows() {
                for i in 0..x.nrows() {
                    g[(i, j)] = x[(i, f)] * x2[(j, f)] * chain;
                }
            }
        }
        KernelSpec::Sum(_) => unreachable!(),
    }
    Ok(g)
}

/// Contraction of the kernel Jacobian with a weight matrix.
///
/// Returns `sum_ij w_ij dK_ij/d raw_p` for every parameter `p`, and, when
/// `with_input_grad` is set, the `n1 x d` matrix `sum_j w_ij dK_ij/dx1_i`.
/// This is what the ELBO gradient needs and avoids materializing one
/// `n1 x n2` matrix per lengthscale.
pub fn gram_vjp(
    x: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
    weights: &DMatrix<f64>,
    with_input_grad: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    spec.validate()?;
    params.check(spec)?;
    check_cols(spec, x)?;
    check_cols(spec, x2)?;
    if weights.shape() != (x.nrows(), x2.nrows()) {
        return Err(NilmError::Input(format!(
            "weight matrix is {:?}, expected {:?}",
            weights.shape(),
            (x.nrows(), x2.nrows())
        )));
    }
    let d = spec.input_dim();
    let c = params.constrained();
    let mut grads = vec![0.0; spec.num_params()];
    let mut xgrad = with_input_grad.then(|| vec![0.0; x.nrows() * d]);
    let p1 = Points::from_rows(x);
    let p2 = Points::from_rows(x2);
    for (leaf, off) in leaf_list(spec) {
        match leaf {
            KernelSpec::Matern52 { .. } | KernelSpec::Matern52Ard { .. } => {
                let signal = c[off];
                let np = leaf.num_params();
                let ls = &c[off + 1..off + np];
                let s1 = p1.scaled(ls);
                let s2 = p2.scaled(ls);
                // ws_ij = w_ij * (-dk/dr / r); every remaining sum is linear in ws.
                let mut ws = DMatrix::zeros(s1.n, s2.n);
                let mut g_signal = 0.0;
                for j in 0..s2.n {
                    let b = s2.get(j);
                    for i in 0..s1.n {
                        let w = weights[(i, j)];
                        if w == 0.0 {
                            continue;
                        }
                        let s = SQRT5 * sq_dist(s1.get(i), b).sqrt();
                        let e = (-s).exp();
                        g_signal += w * (1.0 + s + s * s / 3.0) * e;
                        ws[(i, j)] = w * signal * (5.0 / 3.0) * (1.0 + s) * e;
                    }
                }
                // Centering before expanding the squares limits cancellation.
                let center: Vec<f64> = (0..d)
                    .map(|k| (0..s2.n).map(|j| s2.get(j)[k]).sum::<f64>() / s2.n.max(1) as f64)
                    .collect();
                let a = DMatrix::from_fn(s1.n, d, |i, k| s1.get(i)[k] - center[k]);
                let b = DMatrix::from_fn(s2.n, d, |j, k| s2.get(j)[k] - center[k]);
                let wb = &ws * &b;
                let row_sums: Vec<f64> = ws.row_iter().map(|r| r.sum()).collect();
                let col_sums: Vec<f64> = ws.column_iter().map(|c| c.sum()).collect();
                // g_dim_k = sum_ij ws_ij (a_ik - b_jk)^2
                let mut g_dim = vec![0.0; d];
                for (k, g) in g_dim.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..s1.n {
                        let aik = a[(i, k)];
                        acc += aik * (row_sums[i] * aik - 2.0 * wb[(i, k)]);
                    }
                    for j in 0..s2.n {
                        acc += col_sums[j] * b[(j, k)] * b[(j, k)];
                    }
                    *g = acc;
                }
                if let Some(xg) = xgrad.as_mut() {
                    // sum_j ws_ij (a_ik - b_jk), with the sign of dk/dx1
                    for i in 0..s1.n {
                        for k in 0..d {
                            xg[i * d + k] -= (row_sums[i] * a[(i, k)] - wb[(i, k)]) / lengthscale(ls, k);
                        }
                    }
                }
                grads[off] += g_signal * softplus_grad(params.raw[off]);
                if ls.len() == 1 {
                    let total: f64 = g_dim.iter().sum();
                    grads[off + 1] += total / ls[0] * softplus_grad(params.raw[off + 1]);
                } else {
                    for k in 0..d {
                        grads[off + 1 + k] +=
                            g_dim[k] / ls[k] * softplus_grad(params.raw[off + 1 + k]);
                    }
                }
            }
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                let f = *feature_index;
                let v = c[off];
                let mut g = 0.0;
                for i in 0..x.nrows() {
                    let mut row = 0.0;
                    for j in 0..x2.nrows() {
                        row += weights[(i, j)] * x2[(j, f)];
                    }
                    g += row * x[(i, f)];
                    if let Some(xg) = xgrad.as_mut() {
                        xg[i * d + f] += v * row;
                    }
                }
                grads[off] += g * softplus_grad(params.raw[off]);
            }
            KernelSpec::Sum(_) => unreachable!(),
        }
    }
    let xgrad = xgrad.map(|v| DMatrix::from_row_slice(x.nrows(), d, &v));
    Ok((grads, xgrad))
}

/// Same contraction for the diagonal: `sum_i w_i d diag_i / d raw_p` and the
/// gradient with respect to the rows of `x`.
pub fn gram_diag_vjp(
    x: &DMatrix<f64>,
    spec: &KernelSpec,
    params: &KernelParams,
    weights: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    spec.validate()?;
    params.check(spec)?;
    check_cols(spec, x)?;
    if weights.len() != x.nrows() {
        return Err(NilmError::Input("diagonal weight length mismatch".into()));
    }
    let c = params.constrained();
    let mut grads = vec![0.0; spec.num_params()];
    let mut xgrad = DMatrix::zeros(x.nrows(), x.ncols());
    for (leaf, off) in leaf_list(spec) {
        match leaf {
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                let f = *feature_index;
                let mut g = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    let xi = x[(i, f)];
                    g += w * xi * xi;
                    xgrad[(i, f)] += 2.0 * w * c[off] * xi;
                }
                grads[off] += g * softplus_grad(params.raw[off]);
            }
            _ => {
                let total: f64 = weights.iter().sum();
                grads[off] += total * softplus_grad(params.raw[off]);
            }
        }
    }
    Ok((grads, xgrad))
}

/// Evaluates a full spec at a pair of points (the pointwise reference for `gram`).
pub fn eval(x: &[f64], x2: &[f64], spec: &KernelSpec, params: &KernelParams) -> Result<f64> {
    spec.validate()?;
    params.check(spec)?;
    let d = spec.input_dim();
    check_point(x, d)?;
    check_point(x2, d)?;
    let mut total = 0.0;
    for (leaf, off) in leaf_list(spec) {
        let sub = KernelParams::from_raw(params.raw[off..off + leaf.num_params()].to_vec());
        total += match leaf {
            KernelSpec::LinearOnFeature { feature_index, .. } => {
                eval_linear(x, x2, &sub, *feature_index)?
            }
            _ => eval_matern52(x, x2, &sub)?,
        };
    }
    Ok(total)
}
