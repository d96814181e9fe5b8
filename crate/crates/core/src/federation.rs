//! Round orchestration: participation sampling, dropout, client work,
//! aggregation and the server update, for the second-order algorithm and
//! the FedAvg/FedProx baselines.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, ReportPoint};
use crate::data::{self, LabeledDataset, SyntheticParams};
use crate::error::{Error, Result};
use crate::metrics::{self, RoundRecord};
use crate::model::{self, Model, WeightVector};
use crate::objective;
use crate::partition::{self, PartitionPlan};
use crate::rng::{self, Stream};
use crate::scalar::{axpy, distance, Scalar};
use crate::sensitivity::{self, ClientReport};

/// One client's temporal train/test shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Client<T> {
    pub id: usize,
    pub train: LabeledDataset<T>,
    pub test: LabeledDataset<T>,
}

/// Clients invited to `round`: `max(1, floor(rate * num_clients))` distinct
/// ids drawn uniformly, returned in ascending order.
pub fn sample_participants(num_clients: usize, rate: f64, round: usize, seed: u64) -> Vec<usize> {
    if num_clients == 0 {
        return Vec::new();
    }
    let count = ((rate * num_clients as f64).floor() as usize).clamp(1, num_clients);
    if count == num_clients {
        return (0..num_clients).collect();
    }
    let mut rng = rng::derive(seed, Stream::Participation, &[round as u64]);
    let mut chosen = index::sample(&mut rng, num_clients, count).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Participants that survive dropout; each is dropped independently with
/// probability `rate`, keyed by `(seed, round, client)`.
pub fn apply_dropout(participants: &[usize], rate: f64, round: usize, seed: u64) -> Vec<usize> {
    if rate <= 0.0 {
        return participants.to_vec();
    }
    participants
        .iter()
        .copied()
        .filter(|&client| {
            let mut rng = rng::derive(seed, Stream::Dropout, &[round as u64, client as u64]);
            !rng.random_bool(rate)
        })
        .collect()
}

/// Fixed-size pool for client evaluation. Results are always gathered in
/// client order, so the thread count cannot change them.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Workers { pool: None });
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("cannot start {threads} workers: {e}")))?;
        Ok(Workers { pool: Some(pool) })
    }

    pub fn sequential() -> Self {
        Workers { pool: None }
    }

    fn map<I, O, F>(&self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

/// Scalar hyperparameters of a round, converted to the working precision.
#[derive(Debug, Clone, Copy)]
pub struct RoundParams<T> {
    pub beta: T,
    pub c: T,
    pub epsilon: T,
    pub local_lr: T,
    pub mu: T,
    pub local_epochs: usize,
}

impl<T: Scalar> RoundParams<T> {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        RoundParams {
            beta: T::of(cfg.beta),
            c: T::of(cfg.c),
            epsilon: T::of(cfg.epsilon),
            local_lr: T::of(cfg.local_lr),
            mu: T::of(cfg.mu),
            local_epochs: cfg.local_epochs,
        }
    }
}

/// `epochs` full-batch gradient steps on the local objective from `start`,
/// with an optional proximal pull `mu * (w - anchor)`.
pub fn local_descent<T: Scalar, M: Model<T>>(
    model: &M,
    start: &WeightVector<T>,
    data: &LabeledDataset<T>,
    params: &RoundParams<T>,
    proximal: Option<(T, &WeightVector<T>)>,
) -> Result<WeightVector<T>> {
    let mut w = start.as_slice().to_vec();
    for _ in 0..params.local_epochs {
        let current = WeightVector::from_raw(w);
        let mut grad = objective::evaluate_local(model, &current, data, params.beta, params.c)?.gradient;
        if let Some((mu, anchor)) = proximal {
            let mut drift = current.as_slice().to_vec();
            axpy(-T::one(), anchor.as_slice(), &mut drift);
            axpy(mu, &drift, &mut grad);
        }
        w = current.into_inner();
        axpy(-params.local_lr, &grad, &mut w);
    }
    let w = WeightVector::from_raw(w);
    if !w.is_finite() {
        return Err(Error::domain("local descent diverged to non-finite weights"));
    }
    Ok(w)
}

/// Survivors of participation sampling and dropout for `round`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundCohort {
    pub participants: Vec<usize>,
    pub completed: Vec<usize>,
}

pub fn cohort(cfg: &ExperimentConfig, num_clients: usize, round: usize) -> RoundCohort {
    let participants = sample_participants(num_clients, cfg.participation_rate, round, cfg.seed);
    let completed = apply_dropout(&participants, cfg.dropout_rate, round, cfg.seed);
    RoundCohort {
        participants,
        completed,
    }
}

/// Second-order round: survivors report gradient and tail Gram matrix, the
/// server solves `(S + eps I) d = g` and steps `w - d`.
pub fn fral_step<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    clients: &[Client<T>],
    completed: &[usize],
    params: &RoundParams<T>,
    report_point: ReportPoint,
    workers: &Workers,
) -> Result<WeightVector<T>> {
    if completed.is_empty() {
        return Ok(w.clone());
    }
    let reports = workers.map(completed, |&k| -> Result<ClientReport<T>> {
        let data = &clients[k].train;
        let at = match report_point {
            // local epochs cannot influence a report taken at the broadcast point
            ReportPoint::Broadcast => None,
            ReportPoint::Local if params.local_epochs > 0 => Some(local_descent(model, w, data, params, None)?),
            ReportPoint::Local => None,
        };
        sensitivity::client_report(model, at.as_ref().unwrap_or(w), data, params.beta, params.c)
            .map_err(|e| e.in_client(k))
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let total_n = reports.iter().map(|r| r.n_k).sum();
    let g = objective::aggregate_gradient(&reports, total_n)?;
    let s = sensitivity::aggregate_sensitivity(&reports, params.c, total_n)?;
    sensitivity::central_update(w, &s, &g, params.epsilon)
}

/// FedAvg/FedProx round: survivors run local descent from `w`, the server
/// averages the results by sample count.
pub fn averaging_step<T: Scalar, M: Model<T>>(
    model: &M,
    w: &WeightVector<T>,
    clients: &[Client<T>],
    completed: &[usize],
    params: &RoundParams<T>,
    proximal: bool,
    workers: &Workers,
) -> Result<WeightVector<T>> {
    if completed.is_empty() {
        return Ok(w.clone());
    }
    let locals = workers.map(completed, |&k| -> Result<(usize, WeightVector<T>)> {
        let data = &clients[k].train;
        let prox = proximal.then_some((params.mu, w));
        let local = local_descent(model, w, data, params, prox).map_err(|e| e.in_client(k))?;
        Ok((data.len(), local))
    });
    let locals = locals.into_iter().collect::<Result<Vec<_>>>()?;
    let total_n = locals.iter().map(|(n, _)| n).sum();
    let avg = objective::weighted_average(locals.iter().map(|(n, l)| (*n, l.as_slice())), total_n)?;
    Ok(WeightVector::from_raw(avg))
}

/// Everything a run needs besides the weights: client shards and the
/// evaluation sets.
pub struct Federation<T, M> {
    pub model: M,
    pub clients: Vec<Client<T>>,
    pub config: ExperimentConfig,
    train_sets: Vec<LabeledDataset<T>>,
    test_union: LabeledDataset<T>,
    workers: Workers,
}

impl<T: Scalar, M: Model<T>> Federation<T, M> {
    pub fn new(model: M, clients: Vec<Client<T>>, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if clients.is_empty() {
            return Err(Error::config("federation needs at least one client"));
        }
        let dim = clients[0].train.feature_dim();
        let train_sets = clients.iter().map(|c| c.train.clone()).collect();
        let test_union = LabeledDataset::concat(dim, clients.iter().map(|c| &c.test));
        let workers = Workers::new(config.workers)?;
        Ok(Federation {
            model,
            clients,
            config,
            train_sets,
            test_union,
            workers,
        })
    }

    pub fn params(&self) -> RoundParams<T> {
        RoundParams::from_config(&self.config)
    }

    /// Weighted global objective over the client training shards.
    pub fn train_loss(&self, w: &WeightVector<T>) -> Result<T> {
        let p = self.params();
        objective::global_loss(&self.model, w, &self.train_sets, p.beta, p.c)
    }

    /// Accuracy over the union of client test shards.
    pub fn test_accuracy(&self, w: &WeightVector<T>) -> Result<T> {
        metrics::accuracy(&self.model, w, &self.test_union)
    }

    /// Runs round `round` (1-based) from `w` with the configured algorithm.
    pub fn run_round(&self, w: &WeightVector<T>, round: usize) -> Result<(WeightVector<T>, RoundRecord)> {
        let cohort = cohort(&self.config, self.clients.len(), round);
        let params = self.params();
        let next = match self.config.algorithm {
            Algorithm::FralCse => fral_step(
                &self.model,
                w,
                &self.clients,
                &cohort.completed,
                &params,
                self.config.report_point,
                &self.workers,
            ),
            Algorithm::FedAvg => averaging_step(&self.model, w, &self.clients, &cohort.completed, &params, false, &self.workers),
            Algorithm::FedProx => averaging_step(&self.model, w, &self.clients, &cohort.completed, &params, true, &self.workers),
        }
        .map_err(|e| e.in_round(round))?;
        if !next.is_finite() {
            return Err(Error::domain("update produced non-finite weights").in_round(round));
        }
        let record = RoundRecord {
            round,
            global_train_loss: self.train_loss(&next).map_err(|e| e.in_round(round))?.as_f64(),
            test_accuracy: self.test_accuracy(&next).map_err(|e| e.in_round(round))?.as_f64(),
            participants: cohort.participants.len(),
            completed: cohort.completed.len(),
            step_norm: distance(next.as_slice(), w.as_slice()).as_f64(),
        };
        Ok((next, record))
    }

    /// Runs `config.rounds` rounds from `initial`.
    pub fn run(&self, initial: WeightVector<T>) -> Result<(WeightVector<T>, Vec<RoundRecord>)> {
        let mut w = initial;
        let mut records = Vec::with_capacity(self.config.rounds);
        for round in 1..=self.config.rounds {
            let (next, record) = self.run_round(&w, round)?;
            w = next;
            records.push(record);
        }
        Ok((w, records))
    }
}

/// Dataset, partition and client shards derived from a configuration.
pub struct Setup<T> {
    pub dataset: LabeledDataset<T>,
    pub plan: PartitionPlan,
    pub clients: Vec<Client<T>>,
}

pub fn synthetic_params(cfg: &ExperimentConfig) -> SyntheticParams {
    SyntheticParams {
        samples: cfg.clients * cfg.samples_per_client,
        feature_dim: cfg.features,
        num_sectors: cfg.num_sectors,
        signal_strength: cfg.signal_strength,
        sector_spread: cfg.sector_spread,
    }
}

/// Builds (or loads) the dataset, partitions it and splits every shard in time.
pub fn prepare<T: Scalar>(cfg: &ExperimentConfig) -> Result<Setup<T>> {
    cfg.validate()?;
    let dataset = match &cfg.data_path {
        Some(path) => data::load_csv(path)?,
        None => data::generate_with(&synthetic_params(cfg), cfg.seed)?,
    };
    let plan = partition::exdir_partition(&dataset, cfg.clients, cfg.labels_per_client, cfg.dirichlet_alpha, cfg.seed)?;
    let clients = plan
        .assignments
        .iter()
        .enumerate()
        .map(|(id, indices)| {
            let split = data::temporal_split(&dataset.select(indices), cfg.train_fraction).map_err(|e| e.in_client(id))?;
            Ok(Client {
                id,
                train: split.train,
                test: split.test,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Setup { dataset, plan, clients })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T> {
    pub records: Vec<RoundRecord>,
    pub initial_weights: WeightVector<T>,
    pub final_weights: WeightVector<T>,
    pub plan: PartitionPlan,
}

/// Full experiment with the linear model.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentOutcome<T>> {
    let setup = prepare::<T>(cfg)?;
    let initial = model::init_weights::<T>(setup.dataset.feature_dim(), cfg.seed)?;
    let federation = Federation::new(model::LinearModel, setup.clients, cfg.clone())?;
    let (final_weights, records) = federation.run(initial.clone())?;
    Ok(ExperimentOutcome {
        records,
        initial_weights: initial,
        final_weights,
        plan: setup.plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Record};
    use crate::model::LinearModel;

    #[test]
    fn participation_counts() {
        assert_eq!(sample_participants(7, 1.0, 3, 1), (0..7).collect::<Vec<_>>());
        for round in 0..20 {
            assert_eq!(sample_participants(10, 0.2, round, 5).len(), 2);
            assert_eq!(sample_participants(10, 0.8, round, 5).len(), 8);
            assert_eq!(sample_participants(3, 0.1, round, 5).len(), 1);
        }
        assert_eq!(sample_participants(10, 0.2, 4, 9), sample_participants(10, 0.2, 4, 9));
        let distinct: std::collections::BTreeSet<Vec<usize>> =
            (0..30).map(|r| sample_participants(10, 0.2, r, 9)).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn dropout_identity_and_rate() {
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(apply_dropout(&all, 0.0, 1, 1), all);

        let trials: Vec<usize> = (0..10_000).collect();
        let kept = apply_dropout(&trials, 0.4, 7, 3).len() as f64;
        let dropped = 10_000.0 - kept;
        let sigma = (10_000.0f64 * 0.4 * 0.6).sqrt();
        assert!((dropped - 4000.0).abs() <= 3.0 * sigma, "dropped {dropped}");
        assert_eq!(apply_dropout(&all, 0.4, 2, 1), apply_dropout(&all, 0.4, 2, 1));
    }

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

    fn params(c: f64, epochs: usize, mu: f64) -> RoundParams<f64> {
        RoundParams {
            beta: 0.5,
            c,
            epsilon: 1e-3,
            local_lr: 0.1,
            mu,
            local_epochs: epochs,
        }
    }

    fn client(id: usize, train: LabeledDataset<f64>) -> Client<f64> {
        Client {
            id,
            test: train.clone(),
            train,
        }
    }

    #[test]
    fn fral_regularizer_only_round_contracts() {
        let data = ds(&[(&[1.0, 2.0], 1), (&[-1.0, 0.5], -1), (&[0.3, -0.2], 1)]);
        let clients = vec![client(0, data.clone()), client(1, data)];
        let w = WeightVector::new(vec![0.4, -0.25, 0.1]).unwrap();
        let p = params(0.0, 0, 0.0);
        let next = fral_step(&LinearModel, &w, &clients, &[0, 1], &p, ReportPoint::Broadcast, &Workers::sequential()).unwrap();
        let factor = p.epsilon / (1.0 + p.epsilon);
        for (a, b) in next.as_slice().iter().zip(w.as_slice()) {
            assert!((a - factor * b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fral_single_active_sample_matches_cramer() {
        // d = 1: w = [0.5, 0]. Risks: x = 2 (y = -1) -> R = 1; x = -4 (y = -1) -> R = -2.
        // beta = 0.5 gives q = -2, so only the first sample is active.
        let data = ds(&[(&[2.0], -1), (&[-4.0], -1)]);
        let w = WeightVector::new(vec![0.5, 0.0]).unwrap();
        let p = RoundParams {
            beta: 0.5,
            c: 1.0,
            epsilon: 0.0,
            local_lr: 0.1,
            mu: 0.0,
            local_epochs: 0,
        };
        let next = fral_step(&LinearModel, &w, &[client(0, data)], &[0], &p, ReportPoint::Broadcast, &Workers::sequential()).unwrap();
        // g = w - (1/2) * (-1) * [2, 1] = [1.5, 0.5]
        // S = I + (1/2) [[4, 2], [2, 1]] = [[3, 1], [1, 1.5]], det = 3.5
        // d = (1/3.5) [[1.5, -1], [-1, 3]] g = [1.25/3.5, 0/3.5]
        let g = [1.5, 0.5];
        let det = 3.0 * 1.5 - 1.0;
        let d = [(1.5 * g[0] - g[1]) / det, (-g[0] + 3.0 * g[1]) / det];
        assert!((next[0] - (0.5 - d[0])).abs() < 1e-14);
        assert!((next[1] - (0.0 - d[1])).abs() < 1e-14);
    }

    #[test]
    fn empty_cohort_leaves_weights_untouched() {
        let data = ds(&[(&[1.0], 1), (&[2.0], -1)]);
        let w = WeightVector::new(vec![0.3, 0.1]).unwrap();
        let p = params(1.0, 1, 0.0);
        let c = [client(0, data)];
        let seq = Workers::sequential();
        assert_eq!(fral_step(&LinearModel, &w, &c, &[], &p, ReportPoint::Broadcast, &seq).unwrap(), w);
        assert_eq!(averaging_step(&LinearModel, &w, &c, &[], &p, false, &seq).unwrap(), w);
    }

    #[test]
    fn fedavg_degenerate_and_single_step() {
        let data = ds(&[(&[1.0, 0.0], 1), (&[0.0, 1.0], -1), (&[2.0, 2.0], 1), (&[-1.0, 1.0], -1)]);
        let w = WeightVector::new(vec![0.2, 0.1, -0.05]).unwrap();
        let seq = Workers::sequential();
        let c = [client(0, data.clone())];
        let same = averaging_step(&LinearModel, &w, &c, &[0], &params(1.0, 0, 0.0), false, &seq).unwrap();
        assert_eq!(same, w);

        let p = params(1.0, 1, 0.0);
        let one = averaging_step(&LinearModel, &w, &c, &[0], &p, false, &seq).unwrap();
        let g = objective::local_gradient(&LinearModel, &w, &data, p.beta, p.c).unwrap();
        for i in 0..w.len() {
            assert!((one[i] - (w[i] - p.local_lr * g[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn fedavg_duplicate_clients_match_single() {
        let data = crate::data::generate_synthetic::<f64>(40, 3, 1, 8).unwrap();
        let w = crate::model::init_weights::<f64>(3, 2).unwrap();
        let p = params(1.0, 3, 0.0);
        let seq = Workers::sequential();
        let one = averaging_step(&LinearModel, &w, &[client(0, data.clone())], &[0], &p, false, &seq).unwrap();
        let two = averaging_step(&LinearModel, &w, &[client(0, data.clone()), client(1, data)], &[0, 1], &p, false, &seq).unwrap();
        for i in 0..w.len() {
            assert!((one[i] - two[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn fedprox_reduces_to_fedavg_and_pins() {
        let data = crate::data::generate_synthetic::<f64>(40, 3, 1, 8).unwrap();
        let w = crate::model::init_weights::<f64>(3, 2).unwrap();
        let seq = Workers::sequential();
        let c = [client(0, data.clone())];
        let avg = averaging_step(&LinearModel, &w, &c, &[0], &params(1.0, 2, 0.0), false, &seq).unwrap();
        let prox = averaging_step(&LinearModel, &w, &c, &[0], &params(1.0, 2, 0.0), true, &seq).unwrap();
        assert_eq!(avg, prox);

        // The proximal gradient vanishes at the anchor, so pinning shows over
        // several epochs. With lr * mu = 1 every later step lands within
        // |grad L_k| / mu of the anchor.
        let mut p = params(1.0, 10, 1e6);
        p.local_lr = 1e-6;
        let pinned = local_descent(&LinearModel, &w, &data, &p, Some((p.mu, &w))).unwrap();
        let mut free = p;
        free.local_lr = 0.1;
        free.local_epochs = 10;
        let unpinned = local_descent(&LinearModel, &w, &data, &free, None).unwrap();
        assert!(distance(unpinned.as_slice(), w.as_slice()) > 1e-2);
        assert!(distance(pinned.as_slice(), w.as_slice()) <= 1e-3);
    }

    #[test]
    fn fedprox_hand_step() {
        // Two epochs, mu = 1, starting from anchor w0 with no active samples
        // (single record, its own quantile). Epoch 1: w1 = w0 - lr * w0.
        // Epoch 2: g = w1 + mu (w1 - w0); w2 = w1 - lr * g.
        let data = ds(&[(&[1.0], 1)]);
        let w0 = WeightVector::new(vec![1.0, 2.0]).unwrap();
        let p = RoundParams {
            beta: 0.5,
            c: 1.0,
            epsilon: 0.0,
            local_lr: 0.1,
            mu: 1.0,
            local_epochs: 2,
        };
        let w2 = local_descent(&LinearModel, &w0, &data, &p, Some((1.0, &w0))).unwrap();
        let expect = |v: f64| {
            let w1 = v - 0.1 * v;
            w1 - 0.1 * (w1 + (w1 - v))
        };
        assert!((w2[0] - expect(1.0)).abs() < 1e-15);
        assert!((w2[1] - expect(2.0)).abs() < 1e-15);
    }
}
