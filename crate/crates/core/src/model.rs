//! Prediction function and its parameter Jacobian.

use std::ops::Index;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scalar::{dot, Scalar};

/// Model parameters: `d` feature weights followed by one bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Wraps raw parameters, rejecting non-finite entries and empty input.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("weight vector must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("weight entry {i} is not finite")));
        }
        Ok(WeightVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        WeightVector(vec![T::zero(); len])
    }

    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        WeightVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of feature weights, i.e. `len() - 1`.
    pub fn feature_dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn squared_norm(&self) -> T {
        dot(&self.0, &self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<usize> for WeightVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// A differentiable scorer `f(w, x)`.
///
/// The risk and curvature code only touches the model through these two
/// methods, so any model with a per-sample parameter gradient can be
/// plugged in.
pub trait Model<T: Scalar>: Sync {
    /// Number of parameters for feature dimension `d`.
    fn num_params(&self, feature_dim: usize) -> usize;

    fn predict(&self, w: &WeightVector<T>, x: &[T]) -> Result<T>;

    /// Gradient of `predict` with respect to `w`.
    fn jacobian_row(&self, w: &WeightVector<T>, x: &[T]) -> Result<Vec<T>>;
}

/// Affine scorer `f(w, x) = <w[..d], x> + w[d]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinearModel;

impl LinearModel {
    fn check<T: Scalar>(w: &WeightVector<T>, x: &[T]) -> Result<()> {
        if w.len() != x.len() + 1 {
            return Err(Error::config(format!(
                "dimension mismatch: {} weights for {} features (expected {})",
                w.len(),
                x.len(),
                x.len() + 1
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Model<T> for LinearModel {
    fn num_params(&self, feature_dim: usize) -> usize {
        feature_dim + 1
    }

    fn predict(&self, w: &WeightVector<T>, x: &[T]) -> Result<T> {
        Self::check(w, x)?;
        let d = x.len();
        Ok(dot(&w.as_slice()[..d], x) + w[d])
    }

    fn jacobian_row(&self, w: &WeightVector<T>, x: &[T]) -> Result<Vec<T>> {
        Self::check(w, x)?;
        let mut row = Vec::with_capacity(x.len() + 1);
        row.extend_from_slice(x);
        row.push(T::one());
        Ok(row)
    }
}

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.01;

/// Draws `d + 1` parameters i.i.d. uniform in `[-0.01, 0.01]`.
pub fn init_weights<T: Scalar>(feature_dim: usize, seed: u64) -> Result<WeightVector<T>> {
    if feature_dim == 0 {
        return Err(Error::config("feature dimension must be at least 1"));
    }
    let mut rng = rng::derive(seed, Stream::Init, &[feature_dim as u64]);
    let values = (0..=feature_dim)
        .map(|_| T::of(rng.random_range(-INIT_SCALE..=INIT_SCALE)))
        .collect();
    Ok(WeightVector(values))
}
