//! Two-stage non-IID partitioning (ExDir style).
//!
//! Stage one assigns every client `C` sector groups, walking a seeded random
//! ordering of the groups round-robin. Stage two splits each group's records
//! among its eligible clients with proportions drawn once from a symmetric
//! Dirichlet distribution. Each client receives one contiguous temporal
//! block per group, so per-client data stays in time order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// Record indices per client, ascending.
    pub assignments: Vec<Vec<usize>>,
    /// Groups (sector tags) each client is eligible for.
    pub client_groups: Vec<Vec<u32>>,
    pub labels_per_client: usize,
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Writes `client_id,record_index` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "client_id,record_index")?;
        for (client, indices) in self.assignments.iter().enumerate() {
            for i in indices {
                writeln!(out, "{client},{i}")?;
            }
        }
        out.flush()
    }
}

/// Proportions over `eligible` clients for one group, drawn from
/// Dirichlet(alpha, ..., alpha) via normalized Gamma(alpha, 1) draws.
pub fn dirichlet_proportions(alpha: f64, eligible: usize, seed: u64, group: u32) -> Result<Vec<f64>> {
    if eligible == 1 {
        return Ok(vec![1.0]);
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::config(format!("invalid Dirichlet concentration {alpha}: {e}")))?;
    let mut rng = rng::derive(seed, Stream::Dirichlet, &[u64::from(group)]);
    let draws: Vec<f64> = (0..eligible).map(|_| rng.sample(gamma)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Partition(format!(
            "degenerate Dirichlet draw for group {group} (alpha {alpha})"
        )));
    }
    Ok(draws.into_iter().map(|g| g / total).collect())
}

/// Block boundaries for `n` records split by `proportions`, using rounded
/// cumulative shares. The final block absorbs the rounding remainder.
pub fn block_boundaries(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(proportions.len() + 1);
    bounds.push(0);
    let mut cumulative = 0.0;
    for p in &proportions[..proportions.len() - 1] {
        cumulative += p;
        let b = ((cumulative * n as f64).round() as usize).min(n);
        bounds.push(b.max(*bounds.last().unwrap()));
    }
    bounds.push(n);
    bounds
}

/// Seeded group-to-client assignment used by stage one.
pub fn assign_groups(groups: &[u32], num_clients: usize, labels_per_client: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut order = groups.to_vec();
    let mut rng = rng::derive(seed, Stream::SectorGroups, &[]);
    order.shuffle(&mut rng);
    (0..num_clients)
        .map(|client| {
            let mut own: Vec<u32> = (0..labels_per_client)
                .map(|j| order[(client * labels_per_client + j) % order.len()])
                .collect();
            own.sort_unstable();
            own
        })
        .collect()
}

pub fn exdir_partition<T: Scalar>(
    data: &LabeledDataset<T>,
    num_clients: usize,
    labels_per_client: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    if num_clients == 0 {
        return Err(Error::config("number of clients must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("Dirichlet alpha must be finite and > 0, got {alpha}")));
    }
    let groups = data.sectors();
    if labels_per_client == 0 || labels_per_client > groups.len() {
        return Err(Error::config(format!(
            "labels per client must lie in 1..={}, got {labels_per_client}",
            groups.len()
        )));
    }

    let client_groups = assign_groups(&groups, num_clients, labels_per_client, seed);

    let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in data.iter().enumerate() {
        by_group.entry(r.sector).or_default().push(i);
    }

    let mut assignments = vec![Vec::new(); num_clients];
    for (&group, indices) in &by_group {
        let eligible: Vec<usize> = (0..num_clients)
            .filter(|&c| client_groups[c].contains(&group))
            .collect();
        if eligible.is_empty() {
            return Err(Error::Partition(format!(
                "group {group} has no eligible client ({num_clients} clients x {labels_per_client} labels < {} groups)",
                groups.len()
            )));
        }
        let proportions = dirichlet_proportions(alpha, eligible.len(), seed, group)?;
        let bounds = block_boundaries(indices.len(), &proportions);
        for (slot, &client) in eligible.iter().enumerate() {
            assignments[client].extend_from_slice(&indices[bounds[slot]..bounds[slot + 1]]);
        }
    }
    for (client, a) in assignments.iter_mut().enumerate() {
        if a.is_empty() {
            return Err(Error::Partition(format!("client {client} received no records")));
        }
        a.sort_unstable();
    }

    Ok(PartitionPlan {
        assignments,
        client_groups,
        labels_per_client,
        dirichlet_alpha: alpha,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Duplicate { index: usize, clients: (usize, usize) },
    OutOfRange { client: usize, index: usize },
    EmptyClient { client: usize },
    OutOfOrder { client: usize, position: usize },
    Coverage { assigned: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Duplicate { index, clients } => write!(
                f,
                "record {index} assigned more than once (clients {} and {})",
                clients.0, clients.1
            ),
            Violation::OutOfRange { client, index } => {
                write!(f, "client {client} holds out-of-range record {index}")
            }
            Violation::EmptyClient { client } => write!(f, "client {client} holds no records"),
            Violation::OutOfOrder { client, position } => write!(
                f,
                "client {client} indices not in temporal order at position {position}"
            ),
            Violation::Coverage { assigned, expected } => {
                write!(f, "{assigned} records assigned, expected all {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub violations: Vec<Violation>,
    pub client_sizes: Vec<usize>,
    /// Per client: sector tag -> record count.
    pub group_composition: Vec<BTreeMap<u32, usize>>,
}

impl PartitionReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Human-readable per-client summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (client, (size, groups)) in self.client_sizes.iter().zip(&self.group_composition).enumerate() {
            let comp: Vec<String> = groups.iter().map(|(g, n)| format!("{g}:{n}")).collect();
            s.push_str(&format!("client {client}: {size} records [{}]\n", comp.join(" ")));
        }
        if self.violations.is_empty() {
            s.push_str("no violations\n");
        } else {
            for v in &self.violations {
                s.push_str(&format!("violation: {v}\n"));
            }
        }
        s
    }
}

/// Checks disjointness, index range, nonemptiness and temporal order, and
/// optionally that every record is assigned.
pub fn validate_partition<T: Scalar>(
    plan: &PartitionPlan,
    data: &LabeledDataset<T>,
    require_full_coverage: bool,
) -> PartitionReport {
    let n = data.len();
    let mut violations = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut group_composition = Vec::with_capacity(plan.num_clients());

    for (client, indices) in plan.assignments.iter().enumerate() {
        if indices.is_empty() {
            violations.push(Violation::EmptyClient { client });
        }
        if let Some(position) = indices.windows(2).position(|w| w[0] >= w[1]) {
            violations.push(Violation::OutOfOrder {
                client,
                position: position + 1,
            });
        }
        let mut comp = BTreeMap::new();
        for &index in indices {
            if index >= n {
                violations.push(Violation::OutOfRange { client, index });
                continue;
            }
            match owner[index] {
                Some(first) => violations.push(Violation::Duplicate {
                    index,
                    clients: (first, client),
                }),
                None => owner[index] = Some(client),
            }
            *comp.entry(data.records()[index].sector).or_insert(0) += 1;
        }
        group_composition.push(comp);
    }

    if require_full_coverage {
        let assigned = owner.iter().filter(|o| o.is_some()).count();
        let total: usize = plan.assignments.iter().map(Vec::len).sum();
        if assigned != n || total != n {
            violations.push(Violation::Coverage {
                assigned: total,
                expected: n,
            });
        }
    }

    PartitionReport {
        violations,
        client_sizes: plan.sizes(),
        group_composition,
    }
}
