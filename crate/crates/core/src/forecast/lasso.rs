use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Lasso solution in the units of the original design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Column means used for centering.
    pub means: Vec<f64>,
    /// Column scales; 1 for indicator and constant columns.
    pub scales: Vec<f64>,
    pub active: Vec<usize>,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop when no standardized coefficient moves by more than this.
    pub tolerance: f64,
    /// Subgradient slack demanded before accepting convergence.
    pub kkt_tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            kkt_tolerance: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

/// Centered (and, except for 0/1 indicators, unit-variance) columns plus
/// the Gram matrix and correlations the solver runs on.
struct Standardized {
    n: usize,
    xs: Array2<f64>,
    y_mean: f64,
    yc: Array1<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    gram: Array2<f64>,
    corr: Array1<f64>,
}

fn is_indicator(col: ArrayView1<f64>) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn standardize(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Standardized, ForecastError> {
    let (n, p) = x.dim();
    if n == 0 {
        return Err(ForecastError::Config("design matrix has no rows".into()));
    }
    if y.len() != n {
        return Err(ForecastError::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("design matrix or response".into()));
    }
    let nf = n as f64;
    let mut xs = x.to_owned();
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for mut col in xs.axis_iter_mut(Axis(1)) {
        let indicator = is_indicator(col.view());
        let mean = col.sum() / nf;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
        let scale = if indicator || sd == 0.0 { 1.0 } else { sd };
        if scale != 1.0 {
            col.mapv_inplace(|v| v / scale);
        }
        means.push(mean);
        scales.push(scale);
    }
    let y_mean = y.sum() / nf;
    let yc = y.mapv(|v| v - y_mean);
    let gram = xs.t().dot(&xs) / nf;
    let corr = xs.t().dot(&yc) / nf;
    Ok(Standardized {
        n,
        xs,
        y_mean,
        yc,
        means,
        scales,
        gram,
        corr,
    })
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64, ForecastError> {
    let s = standardize(x, y)?;
    Ok(s.corr.iter().fold(0.0f64, |m, c| m.max(c.abs())))
}

/// `size` values from `lambda_max` down to `lambda_max * ratio`, evenly
/// spaced on a log scale.
pub fn lambda_grid(lambda_max: f64, size: usize, ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || size <= 1 {
        return vec![lambda_max.max(0.0)];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..size)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                (hi + (lo - hi) * k as f64 / (size - 1) as f64).exp()
            }
        })
        .collect()
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Exact gradient `X̃ᵀ(y - X̃β)/n` of the smooth part.
fn gradient(s: &Standardized, beta: &Array1<f64>) -> Array1<f64> {
    let r = &s.yc - &s.xs.dot(beta);
    s.xs.t().dot(&r) / s.n as f64
}

fn kkt_violation(grad: &Array1<f64>, beta: &Array1<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn descend(s: &Standardized, lambda: f64, beta: &mut Array1<f64>, opts: &LassoOptions) -> (usize, bool) {
    let p = beta.len();
    let mut grad = gradient(s, beta);
    for sweep in 1..=opts.max_sweeps {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let c = s.gram[[j, j]];
            if c == 0.0 {
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(grad[j] + c * old, lambda) / c;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                grad.scaled_add(-delta, &s.gram.column(j));
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < opts.tolerance {
            grad = gradient(s, beta);
            if kkt_violation(&grad, beta, lambda) <= opts.kkt_tolerance {
                return (sweep, true);
            }
        }
    }
    (opts.max_sweeps, false)
}

fn finish(s: &Standardized, beta: &Array1<f64>, lambda: f64, sweeps: usize, converged: bool) -> LassoFit {
    let coefficients: Vec<f64> = beta.iter().zip(&s.scales).map(|(b, sc)| b / sc).collect();
    let shift: f64 = coefficients.iter().zip(&s.means).map(|(b, m)| b * m).sum();
    LassoFit {
        active: (0..coefficients.len()).filter(|&j| coefficients[j] != 0.0).collect(),
        intercept: s.y_mean - shift,
        coefficients,
        lambda,
        means: s.means.clone(),
        scales: s.scales.clone(),
        sweeps,
        converged,
    }
}

/// Minimizes `(1/2n)‖y − β₀ − X̃β‖² + λ‖β‖₁` by cyclic coordinate descent.
pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<LassoFit, ForecastError> {
    fit_lasso_with(x, y, lambda, &LassoOptions::default())
}

pub fn fit_lasso_with(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoFit, ForecastError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ForecastError::Config(format!("lambda must be a non-negative number, got {lambda}")));
    }
    let s = standardize(x, y)?;
    let mut beta = Array1::zeros(x.ncols());
    let (sweeps, converged) = descend(&s, lambda, &mut beta, opts);
    Ok(finish(&s, &beta, lambda, sweeps, converged))
}

/// Fits along `lambdas` in the given order, warm-starting each from the
/// previous solution.
pub fn fit_path(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<LassoFit>, ForecastError> {
    let s = standardize(x, y)?;
    let mut beta = Array1::zeros(x.ncols());
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ForecastError::Config(format!("lambda must be a non-negative number, got {lambda}")));
        }
        let (sweeps, converged) = descend(&s, lambda, &mut beta, opts);
        out.push(finish(&s, &beta, lambda, sweeps, converged));
    }
    Ok(out)
}

/// Mean validation RMSE of each grid value over `folds` expanding-window
/// splits. Fold `k` trains on the first `k` blocks and validates on
/// block `k + 1`, where the rows are cut into `folds + 1` blocks.
pub fn validation_curve(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<Vec<f64>, ForecastError> {
    if grid.is_empty() {
        return Err(ForecastError::Config("lambda grid is empty".into()));
    }
    let n = x.nrows();
    let block = n / (folds + 1);
    if folds == 0 || block < 2 {
        return Err(ForecastError::InsufficientRows {
            rows: n,
            needed: 2 * (folds.max(1) + 1),
        });
    }
    // Descending order lets each fold warm-start along the path.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| grid[i]).collect();
    let mut total = vec![0.0; grid.len()];
    for k in 1..=folds {
        let train_end = k * block;
        let valid_end = if k == folds { n } else { (k + 1) * block };
        let xt = x.slice(ndarray::s![..train_end, ..]);
        let yt = y.slice(ndarray::s![..train_end]);
        let xv = x.slice(ndarray::s![train_end..valid_end, ..]);
        let yv = y.slice(ndarray::s![train_end..valid_end]);
        let path = fit_path(xt, yt, &sorted, &LassoOptions::default())?;
        for (fit, &slot) in path.iter().zip(&order) {
            let pred = fit.predict(xv);
            let mse = pred.iter().zip(yv).map(|(p, a)| (a - p).powi(2)).sum::<f64>() / yv.len() as f64;
            total[slot] += mse.sqrt();
        }
    }
    Ok(total.into_iter().map(|t| t / folds as f64).collect())
}

/// Grid value with the lowest mean validation RMSE; ties go to the
/// larger penalty.
pub fn select_lambda(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<f64, ForecastError> {
    if let [only] = grid {
        return Ok(*only);
    }
    let curve = validation_curve(x, y, grid, folds)?;
    let mut best = 0;
    for i in 1..grid.len() {
        let better = curve[i] < curve[best] || (curve[i] == curve[best] && grid[i] > grid[best]);
        if better {
            best = i;
        }
    }
    Ok(grid[best])
}
