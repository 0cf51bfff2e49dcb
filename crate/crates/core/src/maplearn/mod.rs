//! Learning the map `F: S -> s` from latent states to ground-truth phase
//! space, either by progressive polynomial Lasso regression or by a small
//! MLP, with analytic Jacobians for both.

pub mod lasso;
pub mod mlp;
pub mod poly;

use std::fs;
use std::path::Path;

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::{read_f64s, write_f64s, Manifest};
use crate::metrics::r_squared;

pub use lasso::{lasso_fit, Design, LassoConfig, LassoFit};
pub use mlp::{mlp_fit, Mlp, MlpConfig};
pub use poly::{polynomial_features, PolynomialBasis};

/// Polynomial terms with smaller absolute weight are left out of Jacobians.
pub const JACOBIAN_PRUNE: f64 = 1e-3;

pub const MAP_MAGIC: &str = "HMAP1";
const MAP_MANIFEST: &str = "manifest.txt";
const MAP_PARAMS: &str = "params.f64";

/// Paired regression data: row-major inputs and targets made of `groups`
/// equal-length trajectories.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub inputs: &'a [f64],
    pub input_dim: usize,
    pub targets: &'a [f64],
    pub output_dim: usize,
    pub groups: usize,
}

impl TrainingData<'_> {
    pub fn rows(&self) -> usize {
        self.inputs.len() / self.input_dim.max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidDimension("map dimensions must be positive".into()));
        }
        let rows = self.rows();
        if self.inputs.len() != rows * self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: rows * self.input_dim,
                found: self.inputs.len(),
            });
        }
        if self.targets.len() != rows * self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: rows * self.output_dim,
                found: self.targets.len(),
            });
        }
        if self.groups == 0 || rows % self.groups != 0 {
            return Err(Error::InvalidParameter(format!(
                "{rows} rows do not split into {} equal trajectories",
                self.groups
            )));
        }
        Ok(())
    }
}

/// Sparse polynomial regression on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    basis: PolynomialBasis,
    pub intercept: Vec<f64>,
    /// Per output, the nonzero `(feature, weight)` pairs.
    pub terms: Vec<Vec<(usize, f64)>>,
}

impl PolynomialMap {
    /// Map with explicit coefficients; `terms[o]` lists `(feature, weight)`
    /// pairs over the order-`order` basis of standardized inputs.
    pub fn new(
        input_mean: Vec<f64>,
        input_scale: Vec<f64>,
        order: usize,
        intercept: Vec<f64>,
        terms: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let basis = PolynomialBasis::new(input_mean.len(), order)?;
        if input_scale.len() != input_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: input_mean.len(),
                found: input_scale.len(),
            });
        }
        if input_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("input scales must be positive".into()));
        }
        if terms.len() != intercept.len() || intercept.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: intercept.len(),
                found: terms.len(),
            });
        }
        if let Some(&(f, _)) = terms.iter().flatten().find(|(f, _)| *f >= basis.len()) {
            return Err(Error::InvalidDimension(format!(
                "feature {f} outside a basis of {} monomials",
                basis.len()
            )));
        }
        Ok(Self {
            input_mean,
            input_scale,
            basis,
            intercept,
            terms,
        })
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn predict_into(&self, x: &[f64], feats: &mut [f64], out: &mut [f64]) {
        self.basis.expand_into(&self.standardize(x), feats);
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = self.intercept[o] + self.terms[o].iter().map(|(f, w)| w * feats[*f]).sum::<f64>();
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let z = self.standardize(x);
        let dim = z.len();
        let mut jac = DMatrix::zeros(self.intercept.len(), dim);
        for (o, terms) in self.terms.iter().enumerate() {
            for &(f, w) in terms {
                if w.abs() < JACOBIAN_PRUNE {
                    continue;
                }
                let factors = self.basis.factors(f);
                for (i, &v) in factors.iter().enumerate() {
                    // factors are sorted; visit each variable once
                    if i == 0 || factors[i - 1] != v {
                        jac[(o, v)] += w * self.basis.derivative(f, v, &z) / self.input_scale[v];
                    }
                }
            }
        }
        jac
    }

    /// The same map without the terms its Jacobian ignores.
    pub fn pruned(&self) -> PolynomialMap {
        PolynomialMap {
            terms: self
                .terms
                .iter()
                .map(|t| t.iter().copied().filter(|(_, w)| w.abs() >= JACOBIAN_PRUNE).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Weights of all features (zeros included) for output `o`.
    fn dense_terms(&self, o: usize) -> Vec<f64> {
        let mut dense = vec![0.0; self.basis.len()];
        for &(f, w) in &self.terms[o] {
            dense[f] = w;
        }
        dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnedMap {
    Polynomial(PolynomialMap),
    Mlp(Mlp),
}

impl LearnedMap {
    pub fn input_dim(&self) -> usize {
        match self {
            LearnedMap::Polynomial(p) => p.input_mean.len(),
            LearnedMap::Mlp(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LearnedMap::Polynomial(p) => p.intercept.len(),
            LearnedMap::Mlp(m) => m.output_dim(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(match self {
            LearnedMap::Polynomial(p) => {
                let mut feats = vec![0.0; p.basis.len()];
                let mut out = vec![0.0; p.intercept.len()];
                p.predict_into(x, &mut feats, &mut out);
                out
            }
            LearnedMap::Mlp(m) => m.predict(x),
        })
    }

    /// Predictions for every row of a row-major input block.
    pub fn predict_rows(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if inputs.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: inputs.len() / d * d + d,
                found: inputs.len(),
            });
        }
        let mut out = Vec::with_capacity(inputs.len() / d * self.output_dim());
        match self {
            LearnedMap::Polynomial(p) => {
                let mut feats = vec![0.0; p.basis.len()];
                let mut row_out = vec![0.0; p.intercept.len()];
                for row in inputs.chunks_exact(d) {
                    p.predict_into(row, &mut feats, &mut row_out);
                    out.extend_from_slice(&row_out);
                }
            }
            LearnedMap::Mlp(m) => {
                for row in inputs.chunks_exact(d) {
                    out.extend(m.predict(row));
                }
            }
        }
        Ok(out)
    }

    /// `∂F/∂S` at `x`, shape `output_dim x input_dim`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(match self {
            LearnedMap::Polynomial(p) => p.jacobian(x),
            LearnedMap::Mlp(m) => m.jacobian(x),
        })
    }

    /// Writes the map as an HMAP1 directory: `manifest.txt` plus the
    /// little-endian `params.f64` payload.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!(
            "magic = {MAP_MAGIC}\ninput_dim = {}\noutput_dim = {}\n",
            self.input_dim(),
            self.output_dim()
        );
        let mut params = Vec::new();
        match self {
            LearnedMap::Polynomial(p) => {
                manifest.push_str(&format!("form = polynomial\norder = {}\n", p.order()));
                params.extend(&p.input_mean);
                params.extend(&p.input_scale);
                params.extend(&p.intercept);
                for o in 0..p.intercept.len() {
                    params.extend(p.dense_terms(o));
                }
            }
            LearnedMap::Mlp(m) => {
                manifest.push_str(&format!(
                    "form = mlp\nhidden_layers = {}\nhidden_units = {}\n",
                    m.layers.len() - 1,
                    m.layers[0].outputs
                ));
                params.extend(&m.input_mean);
                params.extend(&m.input_scale);
                params.extend(&m.output_mean);
                params.extend(&m.output_scale);
                for l in &m.layers {
                    params.extend(&l.weights);
                    params.extend(&l.bias);
                }
            }
        }
        let path = dir.join(MAP_MANIFEST);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        write_f64s(&dir.join(MAP_PARAMS), &params)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::read(&dir.join(MAP_MANIFEST))?;
        let (magic, _) = manifest.raw("magic")?;
        if magic != MAP_MAGIC {
            return Err(manifest.error("magic", format!("expected {MAP_MAGIC}, found '{magic}'")));
        }
        let input_dim: usize = manifest.parse("input_dim")?;
        let output_dim: usize = manifest.parse("output_dim")?;
        if input_dim == 0 || output_dim == 0 {
            return Err(manifest.error("input_dim", "map dimensions must be positive"));
        }
        let (form, _) = manifest.raw("form")?;
        let params_path = dir.join(MAP_PARAMS);
        match form {
            "polynomial" => {
                manifest.reject_unknown(&["magic", "input_dim", "output_dim", "form", "order"])?;
                let order: usize = manifest.parse("order")?;
                let basis = PolynomialBasis::new(input_dim, order)?;
                let f = basis.len();
                let params = read_f64s(&params_path, 2 * input_dim + output_dim + output_dim * f)?;
                let (input_mean, rest) = params.split_at(input_dim);
                let (input_scale, rest) = rest.split_at(input_dim);
                let (intercept, rest) = rest.split_at(output_dim);
                let terms = rest
                    .chunks_exact(f)
                    .map(|w| w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
                    .collect();
                Ok(LearnedMap::Polynomial(PolynomialMap {
                    input_mean: input_mean.to_vec(),
                    input_scale: input_scale.to_vec(),
                    basis,
                    intercept: intercept.to_vec(),
                    terms,
                }))
            }
            "mlp" => {
                manifest.reject_unknown(&["magic", "input_dim", "output_dim", "form", "hidden_layers", "hidden_units"])?;
                let config = MlpConfig {
                    hidden_layers: manifest.parse("hidden_layers")?,
                    hidden_units: manifest.parse("hidden_units")?,
                    ..MlpConfig::default()
                };
                config.validate()?;
                let count = 2 * input_dim + 2 * output_dim + config.parameter_count(input_dim, output_dim);
                let params = read_f64s(&params_path, count)?;
                let mut rest = params.as_slice();
                let mut take = |n: usize| {
                    let (head, tail) = rest.split_at(n);
                    rest = tail;
                    head.to_vec()
                };
                let input_mean = take(input_dim);
                let input_scale = take(input_dim);
                let output_mean = take(output_dim);
                let output_scale = take(output_dim);
                let mut sizes = vec![input_dim];
                sizes.extend(std::iter::repeat_n(config.hidden_units, config.hidden_layers));
                sizes.push(output_dim);
                let layers = sizes
                    .windows(2)
                    .map(|w| mlp::Layer {
                        inputs: w[0],
                        outputs: w[1],
                        weights: take(w[0] * w[1]),
                        bias: take(w[1]),
                    })
                    .collect();
                Ok(LearnedMap::Mlp(Mlp {
                    input_mean,
                    input_scale,
                    output_mean,
                    output_scale,
                    layers,
                }))
            }
            other => Err(manifest.error("form", format!("unknown map form '{other}'"))),
        }
    }
}

fn input_stats(inputs: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = (inputs.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in inputs.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut var = vec![0.0; dim];
    for row in inputs.chunks_exact(dim) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .map(|s| {
            let sd = (s / rows).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Cross-validated Lasso on the order-`order` expansion of standardized
/// inputs.
pub fn fit_polynomial(data: TrainingData, order: usize, config: &LassoConfig) -> Result<PolynomialMap> {
    data.validate()?;
    let basis = PolynomialBasis::new(data.input_dim, order)?;
    let (input_mean, input_scale) = input_stats(data.inputs, data.input_dim);
    let rows = data.rows();
    let f = basis.len();
    let mut design = vec![0.0; rows * f];
    for (row, out) in data.inputs.chunks_exact(data.input_dim).zip(design.chunks_exact_mut(f)) {
        let z: Vec<f64> = row
            .iter()
            .zip(&input_mean)
            .zip(&input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        basis.expand_into(&z, out);
    }
    let fits = lasso_fit(Design::new(&design, rows, f)?, data.targets, data.output_dim, data.groups, config)?;
    Ok(PolynomialMap {
        input_mean,
        input_scale,
        basis,
        intercept: fits.iter().map(|fit| fit.intercept).collect(),
        terms: fits
            .iter()
            .map(|fit| fit.coef.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i, *w)).collect())
            .collect(),
    })
}

/// Outcome of a progressive polynomial fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressiveFit {
    pub map: LearnedMap,
    pub order: usize,
    /// R² of the returned map on its training data.
    pub r2: f64,
    /// `(order, training R²)` of every order tried.
    pub history: Vec<(usize, f64)>,
}

/// Fits orders `1, 2, ..., kappa`, stopping at the first whose training R²
/// exceeds `alpha_r2`; otherwise returns the best order seen.
pub fn progressive_polynomial_fit(
    data: TrainingData,
    kappa: usize,
    alpha_r2: f64,
    config: &LassoConfig,
) -> Result<ProgressiveFit> {
    if kappa == 0 {
        return Err(Error::InvalidParameter("kappa must be at least 1".into()));
    }
    let mut best: Option<ProgressiveFit> = None;
    let mut history = Vec::new();
    for order in 1..=kappa {
        let map = LearnedMap::Polynomial(fit_polynomial(data, order, config)?);
        let predicted = map.predict_rows(data.inputs)?;
        let r2 = r_squared(&predicted, data.targets, data.output_dim)?;
        debug!("polynomial order {order}: training R² {r2:.6}");
        history.push((order, r2));
        let stop = r2 > alpha_r2;
        if best.as_ref().is_none_or(|b| r2 > b.r2) {
            best = Some(ProgressiveFit {
                map,
                order,
                r2,
                history: Vec::new(),
            });
        }
        if stop {
            break;
        }
    }
    let mut best = best.expect("kappa >= 1 yields a fit");
    best.history = history;
    Ok(best)
}

/// MLP regression of targets on inputs.
pub fn fit_mlp(data: TrainingData, config: &MlpConfig) -> Result<LearnedMap> {
    data.validate()?;
    Ok(LearnedMap::Mlp(mlp_fit(
        data.inputs,
        data.input_dim,
        data.targets,
        data.output_dim,
        config,
    )?))
}
