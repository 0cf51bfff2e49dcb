//! Lasso regression by cyclic coordinate descent.
//!
//! Minimizes `(1 / 2N) ||y - X w - b||² + alpha ||w||₁` on standardized
//! columns, then maps coefficients back to the original column scale.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose standard deviation falls below this carry no signal.
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub alphas: Vec<f64>,
    pub folds: usize,
    pub max_iter: usize,
    /// Convergence when the largest coefficient change in a sweep is below this.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            alphas: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
            folds: 2,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(
                "lasso alpha grid must be non-empty and non-negative".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter("cross-validation needs at least 2 folds".into()));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major design matrix.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Design<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn rows_range(&self, range: std::ops::Range<usize>) -> Design<'a> {
        Design {
            data: &self.data[range.start * self.cols..range.end * self.cols],
            rows: range.len(),
            cols: self.cols,
        }
    }
}

/// Fitted model for one output.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    /// Coefficients on the original (unstandardized) columns.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Standardized Gram system of one design: `G = ZᵀZ / N` over the active
/// (non-degenerate) columns and `Zᵀ(y - ȳ) / N` per output.
struct Standardized {
    mean: Vec<f64>,
    std: Vec<f64>,
    active: Vec<usize>,
    gram: Vec<f64>,
}

impl Standardized {
    fn new(x: Design) -> Self {
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        for r in 0..x.rows {
            mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for r in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        let active: Vec<usize> = (0..x.cols)
            .filter(|&j| std[j] > DEGENERATE_STD * (1.0 + mean[j].abs()))
            .collect();
        let p = active.len();
        let mut gram = vec![0.0; p * p];
        let mut z = vec![0.0; p];
        for r in 0..x.rows {
            let row = x.row(r);
            for (a, &j) in active.iter().enumerate() {
                z[a] = (row[j] - mean[j]) / std[j];
            }
            for a in 0..p {
                let za = z[a];
                let g = &mut gram[a * p..a * p + p];
                for b in a..p {
                    g[b] += za * z[b];
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = gram[a * p + b] / n;
                gram[a * p + b] = v;
                gram[b * p + a] = v;
            }
        }
        Self {
            mean,
            std,
            active,
            gram,
        }
    }

    /// `Zᵀ(y - ȳ) / N` and `ȳ`.
    fn correlation(&self, x: Design, y: &[f64]) -> (Vec<f64>, f64) {
        let n = x.rows as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let mut c = vec![0.0; self.active.len()];
        for r in 0..x.rows {
            let row = x.row(r);
            let yc = y[r] - y_mean;
            for (a, &j) in self.active.iter().enumerate() {
                c[a] += (row[j] - self.mean[j]) / self.std[j] * yc;
            }
        }
        c.iter_mut().for_each(|v| *v /= n);
        (c, y_mean)
    }

    /// Maps standardized coefficients back to the original columns.
    fn unstandardize(&self, w: &[f64], y_mean: f64, cols: usize) -> (Vec<f64>, f64) {
        let mut coef = vec![0.0; cols];
        let mut intercept = y_mean;
        for (a, &j) in self.active.iter().enumerate() {
            coef[j] = w[a] / self.std[j];
            intercept -= coef[j] * self.mean[j];
        }
        (coef, intercept)
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Coordinate descent on the Gram system, warm-started from `w`. Returns
/// `(sweeps, converged)`. `on_sweep` observes the coefficients after each
/// sweep.
pub fn coordinate_descent(
    gram: &[f64],
    corr: &[f64],
    alpha: f64,
    w: &mut [f64],
    max_iter: usize,
    tol: f64,
    mut on_sweep: Option<&mut dyn FnMut(&[f64])>,
) -> (usize, bool) {
    let p = corr.len();
    // r = c - G w
    let mut r: Vec<f64> = (0..p)
        .map(|a| corr[a] - (0..p).map(|b| gram[a * p + b] * w[b]).sum::<f64>())
        .collect();
    for sweep in 1..=max_iter {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[j * p + j];
            if gjj <= 0.0 {
                continue;
            }
            let old = w[j];
            let rho = r[j] + gjj * old;
            let new = soft_threshold(rho, alpha) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                w[j] = new;
                let g = &gram[j * p..j * p + p];
                r.iter_mut().zip(g).for_each(|(ri, gi)| *ri -= gi * delta);
                max_change = max_change.max(delta.abs());
            }
        }
        if let Some(cb) = on_sweep.as_mut() {
            cb(w);
        }
        if max_change < tol {
            return (sweep, true);
        }
    }
    (max_iter, false)
}

/// Fits every output column of `y` (row-major, `outputs` wide) at a fixed
/// `alpha`.
pub fn lasso_fixed(x: Design, y: &[f64], outputs: usize, alpha: f64, config: &LassoConfig) -> Result<Vec<LassoFit>> {
    check_targets(x, y, outputs)?;
    let std = Standardized::new(x);
    warn_degenerate(&std, x.cols);
    (0..outputs)
        .map(|o| {
            let col = column(y, outputs, o);
            Ok(fit_one(x, &std, &col, alpha, config, &mut vec![0.0; std.active.len()]))
        })
        .collect()
}

fn fit_one(x: Design, std: &Standardized, y: &[f64], alpha: f64, config: &LassoConfig, w: &mut [f64]) -> LassoFit {
    let (corr, y_mean) = std.correlation(x, y);
    let (sweeps, converged) = coordinate_descent(&std.gram, &corr, alpha, w, config.max_iter, config.tol, None);
    let (coef, intercept) = std.unstandardize(w, y_mean, x.cols);
    LassoFit {
        coef,
        intercept,
        alpha,
        sweeps,
        converged,
    }
}

fn check_targets(x: Design, y: &[f64], outputs: usize) -> Result<()> {
    if x.rows < 2 {
        return Err(Error::InvalidDimension("regression needs at least 2 rows".into()));
    }
    if outputs == 0 || y.len() != x.rows * outputs {
        return Err(Error::DimensionMismatch {
            expected: x.rows * outputs.max(1),
            found: y.len(),
        });
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input".into()));
    }
    Ok(())
}

fn warn_degenerate(std: &Standardized, cols: usize) {
    if std.active.len() < cols {
        let dropped: Vec<usize> = (0..cols).filter(|j| !std.active.contains(j)).collect();
        warn!("excluding {} zero-variance feature column(s): {dropped:?}", dropped.len());
    }
}

fn column(y: &[f64], outputs: usize, o: usize) -> Vec<f64> {
    y.iter().skip(o).step_by(outputs).copied().collect()
}

/// Cross-validated Lasso. Rows are grouped into `groups` equal contiguous
/// blocks (trajectories); folds are contiguous runs of groups. For each
/// output the alpha with the lowest mean validation MSE is refit on all rows.
pub fn lasso_fit(x: Design, y: &[f64], outputs: usize, groups: usize, config: &LassoConfig) -> Result<Vec<LassoFit>> {
    config.validate()?;
    check_targets(x, y, outputs)?;
    if groups < config.folds || x.rows % groups != 0 {
        return Err(Error::InvalidParameter(format!(
            "{} rows cannot be split into {} folds of whole trajectories ({groups} trajectories)",
            x.rows, config.folds
        )));
    }
    let per_group = x.rows / groups;
    let mut alphas = config.alphas.clone();
    // descending so each fit warm-starts from a sparser solution
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();

    let mut cv_error = vec![vec![0.0; alphas.len()]; outputs];
    for fold in 0..config.folds {
        let lo = fold * groups / config.folds * per_group;
        let hi = (fold + 1) * groups / config.folds * per_group;
        let mut train_rows: Vec<f64> = Vec::with_capacity((x.rows - (hi - lo)) * x.cols);
        train_rows.extend_from_slice(&x.data[..lo * x.cols]);
        train_rows.extend_from_slice(&x.data[hi * x.cols..]);
        let train = Design::new(&train_rows, x.rows - (hi - lo), x.cols)?;
        let valid = x.rows_range(lo..hi);
        let std = Standardized::new(train);
        for (o, errors) in cv_error.iter_mut().enumerate() {
            let y_col = column(y, outputs, o);
            let y_train: Vec<f64> = y_col[..lo].iter().chain(&y_col[hi..]).copied().collect();
            let (corr, y_mean) = std.correlation(train, &y_train);
            let mut w = vec![0.0; std.active.len()];
            for (ai, &alpha) in alphas.iter().enumerate() {
                coordinate_descent(&std.gram, &corr, alpha, &mut w, config.max_iter, config.tol, None);
                let (coef, intercept) = std.unstandardize(&w, y_mean, x.cols);
                let fit = LassoFit {
                    coef,
                    intercept,
                    alpha,
                    sweeps: 0,
                    converged: true,
                };
                let sse: f64 = (0..valid.rows)
                    .map(|r| {
                        let e = fit.predict_row(valid.row(r)) - y_col[lo + r];
                        e * e
                    })
                    .sum();
                errors[ai] += sse / valid.rows as f64 / config.folds as f64;
            }
        }
    }

    let std = Standardized::new(x);
    warn_degenerate(&std, x.cols);
    let mut fits = Vec::with_capacity(outputs);
    for (o, errors) in cv_error.iter().enumerate() {
        // first minimum in descending order: ties go to the larger alpha
        let best = errors
            .iter()
            .enumerate()
            .fold(0, |best, (i, e)| if *e < errors[best] { i } else { best });
        let y_col = column(y, outputs, o);
        let mut w = vec![0.0; std.active.len()];
        // warm path down to the chosen alpha
        let (corr, _) = std.correlation(x, &y_col);
        for &alpha in &alphas[..best] {
            coordinate_descent(&std.gram, &corr, alpha, &mut w, config.max_iter, config.tol, None);
        }
        let fit = fit_one(x, &std, &y_col, alphas[best], config, &mut w);
        if !fit.converged {
            warn!(
                "lasso for output {o} stopped after {} sweeps without converging (alpha {:e})",
                fit.sweeps, fit.alpha
            );
        }
        fits.push(fit);
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(rows: usize, cols: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..rows)
            .map(|r| {
                (0..cols).map(|j| (j as f64 - 3.0) * x[r * cols + j]).sum::<f64>()
                    + 0.5
                    + 0.1 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (x, y)
    }

    /// Least squares with intercept through the normal equations.
    fn normal_equations(x: &[f64], y: &[f64], rows: usize, cols: usize) -> (Vec<f64>, f64) {
        let mut a = DMatrix::from_element(rows, cols + 1, 1.0);
        for r in 0..rows {
            for j in 0..cols {
                a[(r, j)] = x[r * cols + j];
            }
        }
        let b = DVector::from_column_slice(y);
        let ata = a.transpose() * &a;
        let sol = ata.cholesky().unwrap().solve(&(a.transpose() * b));
        (sol.as_slice()[..cols].to_vec(), sol[cols])
    }

    #[test]
    fn vanishing_alpha_matches_least_squares() {
        for seed in 0..5 {
            let (x, y) = random_problem(50, 8, seed);
            let d = Design::new(&x, 50, 8).unwrap();
            let fit = &lasso_fixed(d, &y, 1, 0.0, &LassoConfig::default()).unwrap()[0];
            let (coef, intercept) = normal_equations(&x, &y, 50, 8);
            for (a, b) in fit.coef.iter().zip(&coef) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            assert!((fit.intercept - intercept).abs() < 1e-6);
        }
    }

    #[test]
    fn full_shrinkage_leaves_intercept() {
        let (x, y) = random_problem(40, 4, 9);
        let d = Design::new(&x, 40, 4).unwrap();
        let fit = &lasso_fixed(d, &y, 1, 1e6, &LassoConfig::default()).unwrap()[0];
        assert!(fit.coef.iter().all(|w| *w == 0.0));
        let mean = y.iter().sum::<f64>() / 40.0;
        assert!((fit.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn recovers_sparse_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = 200;
        let x: Vec<f64> = (0..rows * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows)
            .map(|r| 3.0 * x[r * 5] + 1e-4 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = Design::new(&x, rows, 5).unwrap();
        let fit = &lasso_fit(d, &y, 1, 10, &LassoConfig::default()).unwrap()[0];
        assert!((fit.coef[0] - 3.0).abs() < 1e-2);
        // off-support weights are negligible next to the true one
        assert!(fit.coef[1..].iter().all(|w| w.abs() < 1e-3), "{:?}", fit.coef);
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = random_problem(60, 6, 11);
        let d = Design::new(&x, 60, 6).unwrap();
        let std = Standardized::new(d);
        let (corr, y_mean) = std.correlation(d, &y);
        let alpha = 0.05;
        let objective = |w: &[f64]| {
            let (coef, b) = std.unstandardize(w, y_mean, 6);
            let sse: f64 = (0..60)
                .map(|r| {
                    let pred = b + coef.iter().zip(d.row(r)).map(|(c, v)| c * v).sum::<f64>();
                    (y[r] - pred).powi(2)
                })
                .sum();
            sse / 120.0 + alpha * w.iter().map(|v| v.abs()).sum::<f64>()
        };
        let mut values = vec![];
        let mut w = vec![0.0; 6];
        values.push(objective(&w));
        let mut record = |w: &[f64]| values.push(objective(w));
        coordinate_descent(&std.gram, &corr, alpha, &mut w, 1000, 1e-12, Some(&mut record));
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{pair:?}");
        }
    }

    #[test]
    fn constant_column_is_excluded() {
        let (mut x, y) = random_problem(30, 3, 2);
        for r in 0..30 {
            x[r * 3 + 1] = 4.0;
        }
        let d = Design::new(&x, 30, 3).unwrap();
        let fit = &lasso_fit(d, &y, 1, 6, &LassoConfig::default()).unwrap()[0];
        assert_eq!(fit.coef[1], 0.0);
        assert!(fit.coef.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn multi_output_fits_each_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = 80;
        let x: Vec<f64> = (0..rows * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows)
            .flat_map(|r| [2.0 * x[r * 2] + 1.0, -x[r * 2 + 1]])
            .collect();
        let d = Design::new(&x, rows, 2).unwrap();
        let fits = lasso_fit(d, &y, 2, 8, &LassoConfig::default()).unwrap();
        assert!((fits[0].coef[0] - 2.0).abs() < 1e-3 && (fits[0].intercept - 1.0).abs() < 1e-3);
        assert!((fits[1].coef[1] + 1.0).abs() < 1e-3 && fits[1].coef[0].abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_folds() {
        let (x, y) = random_problem(30, 3, 2);
        let d = Design::new(&x, 30, 3).unwrap();
        assert!(lasso_fit(d, &y, 1, 1, &LassoConfig::default()).is_err());
        assert!(lasso_fit(d, &y, 1, 7, &LassoConfig::default()).is_err());
    }
}
