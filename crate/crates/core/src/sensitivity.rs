//! Curvature information for the central update.
//!
//! Each participating client reports the Gram matrix `J^T J` of prediction
//! gradients over its tail-active samples (risk strictly above the
//! client's beta-quantile). The server combines them into
//! `S = sum_k (n_k / n) * (I + (c / n_k) * J_k^T J_k)` and takes the step
//! `w - (S + eps I)^{-1} g`.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::model::{Model, WeightVector};
use crate::objective::{self, LocalEvaluation};
use crate::risk::{self, RiskVector};
use crate::scalar::Scalar;

/// Symmetric positive semidefinite `(d+1) x (d+1)` curvature matrix.
pub type SensitivityMatrix<T> = SquareMatrix<T>;

/// One client's message to the server for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport<T> {
    pub n_k: usize,
    pub gradient: Vec<T>,
    pub gram: SensitivityMatrix<T>,
    pub local_loss: T,
    pub active_count: usize,
}

fn gram_over_tail<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    tail: &[usize],
) -> Result<SensitivityMatrix<T>> {
    let mut gram = SensitivityMatrix::zeros(w.len());
    let records = data.records();
    for &i in tail {
        let row = model.jacobian_row(w, &records[i].features)?;
        gram.add_outer(T::one(), &row);
    }
    Ok(gram)
}

/// `sum_{i in tail} grad f(w, x_i) grad f(w, x_i)^T`; zero when the tail is empty.
pub fn client_gram<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    beta: T,
) -> Result<SensitivityMatrix<T>> {
    data.require_nonempty()?;
    let risks = RiskVector::evaluate(model, w, data)?;
    let tail = risk::tail_threshold(&risks, beta)?;
    gram_over_tail(model, w, data, &tail.tail_indices)
}

/// Gradient, Gram matrix and loss of one client at the broadcast weights.
pub fn client_report<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    beta: T,
    c: T,
) -> Result<ClientReport<T>> {
    data.require_nonempty()?;
    let risks = RiskVector::evaluate(model, w, data)?;
    let tail = risk::tail_threshold(&risks, beta)?;
    let LocalEvaluation {
        loss,
        gradient,
        active_count,
        n_k,
        ..
    } = objective::evaluate_frozen(model, w, data, tail.q, c)?;
    debug_assert_eq!(active_count, tail.tail_len());
    let gram = gram_over_tail(model, w, data, &tail.tail_indices)?;
    Ok(ClientReport {
        n_k,
        gradient,
        gram,
        local_loss: loss,
        active_count,
    })
}

/// `sum_k (n_k / total_n) I + (c / total_n) sum_k G_k` over the reporting clients.
pub fn aggregate_sensitivity<T: Scalar>(
    reports: &[ClientReport<T>],
    c: T,
    total_n: usize,
) -> Result<SensitivityMatrix<T>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Aggregation("no client reports".into()))?;
    let dim = first.gram.dim();
    let seen: usize = reports.iter().map(|r| r.n_k).sum();
    if seen != total_n {
        return Err(Error::Aggregation(format!(
            "sample counts sum to {seen}, expected {total_n}"
        )));
    }
    let total = T::of_count(total_n);
    let mut s = SensitivityMatrix::zeros(dim);
    for r in reports {
        if r.gram.dim() != dim {
            return Err(Error::Aggregation("Gram matrices differ in dimension".into()));
        }
        s.add_scaled(c / total, &r.gram);
    }
    s.add_diagonal(T::one());
    Ok(s)
}

/// `w - (S + eps I)^{-1} g`, solved through a Cholesky factorization.
pub fn central_update<T: Scalar>(
    w: &WeightVector<T>,
    s: &SensitivityMatrix<T>,
    g: &[T],
    epsilon: T,
) -> Result<WeightVector<T>> {
    if s.dim() != w.len() || g.len() != w.len() {
        return Err(Error::config(format!(
            "central update dimensions disagree: w {}, S {}, g {}",
            w.len(),
            s.dim(),
            g.len()
        )));
    }
    if !(epsilon >= T::zero()) {
        return Err(Error::config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut damped = s.clone();
    damped.add_diagonal(epsilon);
    let step = Cholesky::factor(&damped)?.solve(g);
    let next = w.as_slice().iter().zip(&step).map(|(&wi, &di)| wi - di).collect();
    Ok(WeightVector::from_raw(next))
}
