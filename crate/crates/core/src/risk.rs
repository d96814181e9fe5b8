//! Empirical loss distribution, its beta-quantile, the tail average and the
//! hinge surrogate of the tail excess.

use std::ops::Deref;

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{Model, WeightVector};
use crate::scalar::Scalar;

/// Per-sample risks of one client at a fixed `w`, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskVector<T>(Vec<T>);

impl<T: Scalar> RiskVector<T> {
    pub fn new(risks: Vec<T>) -> Result<Self> {
        if let Some(i) = risks.iter().position(|r| !r.is_finite()) {
            return Err(Error::domain(format!("risk {i} is not finite")));
        }
        Ok(RiskVector(risks))
    }

    /// Risks of every record in `data` under `model` at `w`.
    pub fn evaluate<M: Model<T>>(model: &M, w: &WeightVector<T>, data: &LabeledDataset<T>) -> Result<Self> {
        let risks = data
            .iter()
            .map(|r| sample_risk(model, w, &r.features, r.label))
            .collect::<Result<Vec<_>>>()?;
        RiskVector::new(risks)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for RiskVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// The beta-quantile `q` and the samples whose risk strictly exceeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct TailThreshold<T> {
    pub q: T,
    pub beta: T,
    /// Ascending sample indices with `risk > q`.
    pub tail_indices: Vec<usize>,
}

impl<T> TailThreshold<T> {
    pub fn tail_len(&self) -> usize {
        self.tail_indices.len()
    }
}

/// `R = -y * f(w, x)`; negative when the score sign agrees with the label.
pub fn sample_risk<T: Scalar, M: Model<T>>(model: &M, w: &WeightVector<T>, x: &[T], y: Label) -> Result<T> {
    Ok(-(y.sign::<T>()) * model.predict(w, x)?)
}

fn require_nonempty<T>(risks: &[T]) -> Result<()> {
    if risks.is_empty() {
        Err(Error::domain("risk vector is empty"))
    } else {
        Ok(())
    }
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() && beta < T::one() {
        Ok(())
    } else {
        Err(Error::config(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// Fraction of risks `<= alpha`.
pub fn empirical_cdf<T: Scalar>(risks: &[T], alpha: T) -> Result<T> {
    require_nonempty(risks)?;
    let count = risks.iter().filter(|&&r| r <= alpha).count();
    Ok(T::of_count(count) / T::of_count(risks.len()))
}

/// Smallest `k` in `1..=n` with `k / n >= beta`, evaluated in `T` so it
/// agrees with the empirical CDF comparison.
fn order_statistic_rank<T: Scalar>(n: usize, beta: T) -> usize {
    let nt = T::of_count(n);
    let mut k = (beta * nt).ceil().to_usize().unwrap_or(n).clamp(1, n);
    while k > 1 && T::of_count(k - 1) / nt >= beta {
        k -= 1;
    }
    while k < n && T::of_count(k) / nt < beta {
        k += 1;
    }
    k
}

/// `min { alpha | F(alpha) >= beta }`: the `ceil(beta * n)`-th smallest risk.
pub fn beta_quantile<T: Scalar>(risks: &[T], beta: T) -> Result<T> {
    require_nonempty(risks)?;
    check_beta(beta)?;
    let k = order_statistic_rank(risks.len(), beta);
    let mut sorted = risks.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite risks"));
    Ok(*kth)
}

pub fn tail_threshold<T: Scalar>(risks: &[T], beta: T) -> Result<TailThreshold<T>> {
    let q = beta_quantile(risks, beta)?;
    let tail_indices = risks
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > q)
        .map(|(i, _)| i)
        .collect();
    Ok(TailThreshold { q, beta, tail_indices })
}

/// Mean risk over the tail set. An empty tail (all mass at or below `q`)
/// yields `q` itself.
pub fn distortion_risk<T: Scalar>(risks: &[T], beta: T) -> Result<T> {
    let tail = tail_threshold(risks, beta)?;
    if tail.tail_indices.is_empty() {
        return Ok(tail.q);
    }
    let sum: T = tail.tail_indices.iter().map(|&i| risks[i]).sum();
    Ok(sum / T::of_count(tail.tail_len()))
}

/// `(1/n) * sum max(0, R_i - q)`.
pub fn hinge_surrogate<T: Scalar>(risks: &[T], q: T) -> Result<T> {
    require_nonempty(risks)?;
    let excess: T = risks.iter().map(|&r| (r - q).max(T::zero())).sum();
    Ok(excess / T::of_count(risks.len()))
}
