//! Monomial feature expansion and its derivatives.

use crate::error::{Error, Result};

/// Largest expansion the regression will build.
pub const MAX_FEATURES: u128 = 1_000_000;

/// Number of monomials of total degree `1..=order` in `dim` variables,
/// `C(dim + order, order) - 1`.
pub fn feature_count(dim: usize, order: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=order as u128 {
        c = c * (dim as u128 + i) / i;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c - 1
}

/// All monomials of total degree `1..=order` in `dim` variables, ordered by
/// degree and then lexicographically by variable index (`x0, x1, x0², x0x1,
/// x1², ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialBasis {
    dim: usize,
    order: usize,
    /// Per feature: the lower-degree feature it extends (None for degree 1)
    /// and the variable it multiplies by.
    recipe: Vec<(Option<usize>, usize)>,
    /// Per feature: sorted variable indices with repetition.
    factors: Vec<Vec<usize>>,
}

impl PolynomialBasis {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("polynomial input dimension is zero".into()));
        }
        if order == 0 {
            return Err(Error::InvalidParameter("polynomial order must be at least 1".into()));
        }
        let count = feature_count(dim, order);
        if count > MAX_FEATURES {
            return Err(Error::ExpansionTooLarge {
                features: count,
                limit: MAX_FEATURES,
            });
        }
        let mut recipe = Vec::with_capacity(count as usize);
        let mut factors: Vec<Vec<usize>> = Vec::with_capacity(count as usize);
        for v in 0..dim {
            recipe.push((None, v));
            factors.push(vec![v]);
        }
        let mut prev = 0..dim;
        for _ in 2..=order {
            let start = factors.len();
            for parent in prev.clone() {
                let last = *factors[parent].last().expect("non-empty monomial");
                for v in last..dim {
                    let mut f = factors[parent].clone();
                    f.push(v);
                    recipe.push((Some(parent), v));
                    factors.push(f);
                }
            }
            prev = start..factors.len();
        }
        Ok(Self {
            dim,
            order,
            recipe,
            factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.recipe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipe.is_empty()
    }

    /// Variable indices of feature `i`, sorted, with repetition.
    pub fn factors(&self, i: usize) -> &[usize] {
        &self.factors[i]
    }

    /// Exponent of each variable in feature `i`.
    pub fn exponents(&self, i: usize) -> Vec<u32> {
        let mut e = vec![0; self.dim];
        for &v in &self.factors[i] {
            e[v] += 1;
        }
        e
    }

    /// Writes the features of `x` into `out` (length [`Self::len`]).
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, &(parent, v)) in self.recipe.iter().enumerate() {
            out[i] = match parent {
                None => x[v],
                Some(p) => out[p] * x[v],
            };
        }
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.expand_into(x, &mut out);
        Ok(out)
    }

    /// Partial derivative of feature `i` with respect to variable `v` at `x`.
    pub fn derivative(&self, i: usize, v: usize, x: &[f64]) -> f64 {
        let f = &self.factors[i];
        let count = f.iter().filter(|&&u| u == v).count();
        if count == 0 {
            return 0.0;
        }
        let mut skipped = false;
        let mut prod = count as f64;
        for &u in f {
            if u == v && !skipped {
                skipped = true;
            } else {
                prod *= x[u];
            }
        }
        prod
    }
}

/// Monomial features of `x` of total degree `1..=order`.
pub fn polynomial_features(x: &[f64], order: usize) -> Result<Vec<f64>> {
    PolynomialBasis::new(x.len(), order)?.expand(x)
}
