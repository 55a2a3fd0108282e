//! Multi-index sets, scaled monomial bases, and compactly supported product
//! kernels for local polynomial regression.
//!
//! The basis attached to a degree-`d` fit in dimension `m` is the family
//! `psi_i(x) = prod_j x_j^{i_j} / i_j!` indexed by all multi-indices `i`
//! with `|i| <= d`, ordered graded-lexicographically with the zero index
//! first so that coefficient 0 of a local fit is always the regression
//! estimate. Kernels are products of one-dimensional densities
//! `w(u) = C_k (1 - u^2)^k` on `[-1, 1]`; the normalizing constant `C_k`
//! is obtained by quadrature once per exponent and cached.

use crate::quad;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("dimension mismatch: multi-index has length {index_len}, point has length {point_len}")]
    DimensionMismatch { index_len: usize, point_len: usize },
}

/// A vector of nonnegative exponents; its order is the sum of the entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(!exponents.is_empty(), "multi-index needs at least one entry");
        Self { exponents }
    }

    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn dimension(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }
}

/// All multi-indices of order at most `degree` in `dimension` variables.
///
/// Deterministic graded order: ascending total order, and within each order
/// lexicographically descending, so the zero index always comes first.
pub fn multi_index_set(degree: u32, dimension: usize) -> Vec<MultiIndex> {
    assert!(dimension >= 1, "dimension must be at least 1");
    let mut out = Vec::with_capacity(basis_size(degree, dimension));
    let mut scratch = vec![0u32; dimension];
    for order in 0..=degree {
        push_order(&mut out, &mut scratch, 0, order);
    }
    out
}

fn push_order(out: &mut Vec<MultiIndex>, scratch: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        scratch[pos] = v;
        push_order(out, scratch, pos + 1, remaining - v);
    }
}

/// `binomial(m + d, d)`, the size of the basis of degree `d` in `m` variables.
pub fn basis_size(degree: u32, dimension: usize) -> usize {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for j in 1..=degree as u128 {
        num *= dimension as u128 + j;
        den *= j;
    }
    (num / den) as usize
}

/// The scaled monomial `psi_i(x) = prod_j x_j^{i_j} / i_j!`.
pub fn psi(index: &MultiIndex, x: &[f64]) -> Result<f64, BasisError> {
    if index.dimension() != x.len() {
        return Err(BasisError::DimensionMismatch {
            index_len: index.dimension(),
            point_len: x.len(),
        });
    }
    let mut value = 1.0;
    for (&e, &xj) in index.exponents.iter().zip(x) {
        value *= xj.powi(e as i32) / factorial(e);
    }
    Ok(value)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// The ordered basis `I(d)` for a degree-`d` local polynomial fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    degree: u32,
    dimension: usize,
    indices: Vec<MultiIndex>,
}

impl BasisSpec {
    pub fn new(degree: u32, dimension: usize) -> Self {
        Self {
            degree,
            dimension,
            indices: multi_index_set(degree, dimension),
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Evaluate every basis function at `u`, writing into `out`.
    ///
    /// `u` must have the spec's dimension and `out` its length.
    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.dimension);
        debug_assert_eq!(out.len(), self.indices.len());
        for (slot, index) in out.iter_mut().zip(&self.indices) {
            let mut value = 1.0;
            for (&e, &uj) in index.exponents.iter().zip(u) {
                value *= uj.powi(e as i32) / factorial(e);
            }
            *slot = value;
        }
    }
}

/// Product of one-dimensional kernels `w_j(u) = C_k (1 - u^2)^k` on `[-1, 1]`.
///
/// `(1 - u^2)^k` is `k - 1` times continuously differentiable at the support
/// boundary, so `exponent = m + 3` meets the smoothness the asymptotics ask
/// of an `m`-dimensional fit; that is the default constructed by
/// [`ProductKernel::default_for_dimension`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    exponent: u32,
    dimension: usize,
    normalizer: f64,
}

impl ProductKernel {
    pub fn new(exponent: u32, dimension: usize) -> Self {
        assert!(exponent >= 1, "kernel exponent must be at least 1");
        assert!(dimension >= 1, "kernel dimension must be at least 1");
        Self {
            exponent,
            dimension,
            normalizer: normalizer_for(exponent),
        }
    }

    /// Kernel with exponent `m + 3`, smooth enough for dimension `m`.
    pub fn default_for_dimension(dimension: usize) -> Self {
        Self::new(dimension as u32 + 3, dimension)
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// One factor `w_j(u)`; zero outside `(-1, 1)`.
    pub fn weight_1d(&self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        self.normalizer * s.powi(self.exponent as i32)
    }

    /// The product weight `w(u) = prod_j w_j(u_j)`.
    pub fn weight(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.dimension, "kernel dimension mismatch");
        u.iter().map(|&uj| self.weight_1d(uj)).product()
    }
}

fn normalizer_for(exponent: u32) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u32, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("kernel normalizer cache poisoned");
    *cache.entry(exponent).or_insert_with(|| {
        let mass = quad::integrate(
            |u| (1.0 - u * u).powi(exponent as i32),
            -1.0,
            1.0,
            1e-13,
        )
        .expect("kernel mass integral converges");
        1.0 / mass
    })
}
