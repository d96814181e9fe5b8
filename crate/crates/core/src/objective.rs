//! Local and global risk-aware objectives and their gradients.
//!
//! The local objective of a client is
//! `L_k(w) = 0.5 * |w|^2 + (c / n_k) * sum_i max(0, R_i(w) - q)`
//! where `q` is the beta-quantile of the client's risks. `q` is evaluated at
//! the current `w` and then held fixed, so the reported loss and gradient
//! describe the same frozen-threshold function.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{Model, WeightVector};
use crate::risk::{self, RiskVector};
use crate::scalar::{axpy, Scalar};
use crate::sensitivity::ClientReport;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEvaluation<T> {
    pub loss: T,
    pub gradient: Vec<T>,
    /// Samples with risk strictly above the threshold.
    pub active_count: usize,
    pub n_k: usize,
    pub threshold_q: T,
}

fn check_c<T: Scalar>(c: T) -> Result<()> {
    if c >= T::zero() && c.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("trade-off constant c must be finite and >= 0, got {c}")))
    }
}

/// Loss and gradient with the threshold `q` supplied by the caller.
pub fn evaluate_frozen<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    q: T,
    c: T,
) -> Result<LocalEvaluation<T>> {
    data.require_nonempty()?;
    check_c(c)?;
    let risks = RiskVector::evaluate(model, w, data)?;
    frozen_from_risks(model, w, data, &risks, q, c)
}

fn frozen_from_risks<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    risks: &[T],
    q: T,
    c: T,
) -> Result<LocalEvaluation<T>> {
    let n = data.len();
    let scale = c / T::of_count(n);
    let mut gradient = w.as_slice().to_vec();
    let mut excess = T::zero();
    let mut active_count = 0;
    for (record, &r) in data.iter().zip(risks) {
        if r > q {
            excess = excess + (r - q);
            active_count += 1;
            let row = model.jacobian_row(w, &record.features)?;
            axpy(-scale * record.label.sign::<T>(), &row, &mut gradient);
        }
    }
    let half = T::of(0.5);
    Ok(LocalEvaluation {
        loss: half * w.squared_norm() + scale * excess,
        gradient,
        active_count,
        n_k: n,
        threshold_q: q,
    })
}

/// Computes risks at `w`, the beta-quantile threshold, then loss and gradient.
pub fn evaluate_local<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    beta: T,
    c: T,
) -> Result<LocalEvaluation<T>> {
    data.require_nonempty()?;
    check_c(c)?;
    let risks = RiskVector::evaluate(model, w, data)?;
    let q = risk::beta_quantile(&risks, beta)?;
    frozen_from_risks(model, w, data, &risks, q, c)
}

pub fn local_loss<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    beta: T,
    c: T,
) -> Result<T> {
    evaluate_local(model, w, data, beta, c).map(|e| e.loss)
}

pub fn local_gradient<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    data: &LabeledDataset<T>,
    beta: T,
    c: T,
) -> Result<Vec<T>> {
    evaluate_local(model, w, data, beta, c).map(|e| e.gradient)
}

/// `sum_k (n_k / total_n) * v_k`, requiring the weights to account for
/// exactly `total_n` samples.
pub fn weighted_average<'a, T: Scalar>(
    parts: impl IntoIterator<Item = (usize, &'a [T])>,
    total_n: usize,
) -> Result<Vec<T>> {
    let mut acc: Option<Vec<T>> = None;
    let mut seen = 0usize;
    let total = T::of_count(total_n);
    for (n_k, v) in parts {
        seen += n_k;
        let acc = acc.get_or_insert_with(|| vec![T::zero(); v.len()]);
        if acc.len() != v.len() {
            return Err(Error::Aggregation(format!(
                "vector length {} does not match {}",
                v.len(),
                acc.len()
            )));
        }
        axpy(T::of_count(n_k) / total, v, acc);
    }
    let acc = acc.ok_or_else(|| Error::Aggregation("nothing to aggregate".into()))?;
    if seen != total_n {
        return Err(Error::Aggregation(format!(
            "sample counts sum to {seen}, expected {total_n}"
        )));
    }
    Ok(acc)
}

/// Sample-weighted mean of client gradients.
pub fn aggregate_gradient<T: Scalar>(reports: &[ClientReport<T>], total_n: usize) -> Result<Vec<T>> {
    weighted_average(reports.iter().map(|r| (r.n_k, r.gradient.as_slice())), total_n)
}

/// `sum_k (n_k / |D|) * L_k(w)` over all client datasets.
pub fn global_loss<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    datasets: &[LabeledDataset<T>],
    beta: T,
    c: T,
) -> Result<T> {
    if datasets.is_empty() {
        return Err(Error::domain("no client datasets"));
    }
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    let total_t = T::of_count(total);
    let mut acc = T::zero();
    for (k, data) in datasets.iter().enumerate() {
        let loss = local_loss(model, w, data, beta, c).map_err(|e| e.in_client(k))?;
        acc = acc + T::of_count(data.len()) / total_t * loss;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Record};
    use crate::model::LinearModel;
    use crate::sensitivity::SensitivityMatrix;

    fn ds(rows: &[(&[f64], i64)]) -> LabeledDataset<f64> {
        let records = rows
            .iter()
            .map(|(x, y)| Record {
                features: x.to_vec(),
                label: Label::from_int(*y).unwrap(),
                sector: 0,
            })
            .collect();
        LabeledDataset::new(rows[0].0.len(), records).unwrap()
    }

    fn w(v: &[f64]) -> WeightVector<f64> {
        WeightVector::new(v.to_vec()).unwrap()
    }

    fn report(n_k: usize, gradient: Vec<f64>) -> ClientReport<f64> {
        let dim = gradient.len();
        ClientReport {
            n_k,
            gradient,
            gram: SensitivityMatrix::zeros(dim),
            local_loss: 0.0,
            active_count: 0,
        }
    }

    #[test]
    fn loss_at_zero_weights_is_zero() {
        let data = ds(&[(&[1.0, 2.0], 1), (&[-3.0, 0.5], -1), (&[0.2, 0.1], 1)]);
        let e = evaluate_local(&LinearModel, &w(&[0.0, 0.0, 0.0]), &data, 0.8, 1.0).unwrap();
        assert_eq!(e.loss, 0.0);
        assert_eq!(e.threshold_q, 0.0);
        assert_eq!(e.active_count, 0);
    }

    #[test]
    fn single_sample_loss() {
        let data = ds(&[(&[1.0, 0.0], 1)]);
        let e = evaluate_local(&LinearModel, &w(&[-1.0, 0.0, 0.0]), &data, 0.5, 1.0).unwrap();
        assert_eq!(e.threshold_q, 1.0);
        assert_eq!(e.loss, 0.5);
    }

    #[test]
    fn two_sample_loss() {
        // w = [1, 1, 0] has |w|^2 = 2; x = [-1, 0], y = +1 gives R = 1 and
        // x = [-3, 0], y = +1 gives R = 3.
        let data = ds(&[(&[-1.0, 0.0], 1), (&[-3.0, 0.0], 1)]);
        let e = evaluate_local(&LinearModel, &w(&[1.0, 1.0, 0.0]), &data, 0.5, 2.0).unwrap();
        assert_eq!(e.threshold_q, 1.0);
        assert_eq!(e.active_count, 1);
        assert_eq!(e.loss, 3.0);
    }

    #[test]
    fn gradient_with_active_sample() {
        // With w = 0 every risk is 0; supply q = -0.5 so the sample is active.
        let data = ds(&[(&[1.0, 0.0], 1)]);
        let e = evaluate_frozen(&LinearModel, &w(&[0.0, 0.0, 0.0]), &data, -0.5, 1.0).unwrap();
        assert_eq!(e.gradient, vec![-1.0, 0.0, -1.0]);
        assert_eq!(e.active_count, 1);
    }

    #[test]
    fn gradient_without_active_samples_is_w() {
        let data = ds(&[(&[1.0, 0.0], 1), (&[0.0, 1.0], -1)]);
        let wv = w(&[0.3, -0.2, 0.1]);
        let e = evaluate_frozen(&LinearModel, &wv, &data, 100.0, 1.0).unwrap();
        assert_eq!(e.gradient, wv.as_slice());
        let g = local_gradient(&LinearModel, &wv, &data, 0.8, 0.0).unwrap();
        assert_eq!(g, wv.as_slice());
    }

    #[test]
    fn empty_dataset_is_domain_error() {
        let data = LabeledDataset::<f64>::empty(2);
        let err = local_loss(&LinearModel, &w(&[0.0, 0.0, 0.0]), &data, 0.8, 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn negative_c_rejected() {
        let data = ds(&[(&[1.0, 0.0], 1)]);
        assert!(local_loss(&LinearModel, &w(&[0.0, 0.0, 0.0]), &data, 0.8, -1.0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let g = vec![1.5, -2.0];
        assert_eq!(aggregate_gradient(&[report(7, g.clone())], 7).unwrap(), g);

        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let agg = aggregate_gradient(&[report(4, g.clone()), report(4, neg)], 8).unwrap();
        assert_eq!(agg, vec![0.0, 0.0]);

        let agg = aggregate_gradient(&[report(1, vec![2.0]), report(3, vec![-2.0])], 4).unwrap();
        assert_eq!(agg, vec![-1.0]);
    }

    #[test]
    fn aggregate_rejects_weight_mismatch() {
        let err = aggregate_gradient(&[report(1, vec![2.0]), report(3, vec![-2.0])], 5).unwrap_err();
        assert!(matches!(err, Error::Aggregation(_)));
        assert!(aggregate_gradient::<f64>(&[], 0).is_err());
    }

    #[test]
    fn global_loss_examples() {
        let data = ds(&[(&[1.0, 2.0], 1), (&[-3.0, 0.5], -1), (&[0.2, 0.1], 1)]);
        let wv = w(&[0.4, -0.7, 0.2]);
        let single = local_loss(&LinearModel, &wv, &data, 0.6, 1.5).unwrap();
        let global = global_loss(&LinearModel, &wv, &[data.clone(), data.clone()], 0.6, 1.5).unwrap();
        assert!((single - global).abs() < 1e-12);

        let zero = w(&[0.0, 0.0, 0.0]);
        assert_eq!(global_loss(&LinearModel, &zero, std::slice::from_ref(&data), 0.6, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn global_loss_is_size_weighted() {
        // w = [1, 1, 0]: regularizer 1. Client A (one sample) has an empty tail,
        // loss 1. Client B risks {0, 0, 6} at beta 0.5 give q = 0 and hinge 2,
        // loss 3. Weighted: 0.25 * 1 + 0.75 * 3 = 2.5.
        let a = ds(&[(&[0.0, 0.0], 1)]);
        let b = ds(&[(&[0.0, 0.0], 1), (&[0.0, 0.0], -1), (&[-6.0, 0.0], 1)]);
        let wv = w(&[1.0, 1.0, 0.0]);
        assert_eq!(local_loss(&LinearModel, &wv, &a, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(local_loss(&LinearModel, &wv, &b, 0.5, 1.0).unwrap(), 3.0);
        let g = global_loss(&LinearModel, &wv, &[a, b], 0.5, 1.0).unwrap();
        assert_eq!(g, 2.5);
    }
}
