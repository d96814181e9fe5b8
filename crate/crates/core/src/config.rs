//! Experiment configuration and its flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may
//! appear at most once and unknown keys are rejected.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FralCse,
    FedAvg,
    FedProx,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FralCse => "fral_cse",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
        }
    }

    pub fn default_local_epochs(self) -> usize {
        match self {
            Algorithm::FralCse => 0,
            Algorithm::FedAvg | Algorithm::FedProx => 1,
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fral_cse" => Ok(Algorithm::FralCse),
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedprox" => Ok(Algorithm::FedProx),
            other => Err(format!("unknown algorithm `{other}` (expected fral_cse, fedavg or fedprox)")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a second-order client evaluates its report when it also runs
/// local epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportPoint {
    /// At the broadcast global weights.
    Broadcast,
    /// At the client's weights after its local epochs.
    Local,
}

impl FromStr for ReportPoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "broadcast" => Ok(ReportPoint::Broadcast),
            "local" => Ok(ReportPoint::Local),
            other => Err(format!("unknown report point `{other}` (expected broadcast or local)")),
        }
    }
}

impl fmt::Display for ReportPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportPoint::Broadcast => "broadcast",
            ReportPoint::Local => "local",
        })
    }
}

pub const DEFAULT_BETA: f64 = 0.8;
pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_FEATURES: usize = 130;
pub const DEFAULT_NUM_SECTORS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_LOCAL_LR: f64 = 0.05;
pub const DEFAULT_FEDPROX_MU: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub clients: usize,
    pub samples_per_client: usize,
    pub rounds: usize,
    pub seed: u64,
    pub participation_rate: f64,
    pub dropout_rate: f64,
    pub beta: f64,
    pub c: f64,
    pub epsilon: f64,
    pub local_epochs: usize,
    pub local_lr: f64,
    /// Proximal weight; only meaningful (and only settable) for FedProx.
    pub mu: f64,
    pub report_point: ReportPoint,
    pub features: usize,
    pub num_sectors: usize,
    pub signal_strength: f64,
    pub sector_spread: f64,
    pub labels_per_client: usize,
    pub dirichlet_alpha: f64,
    pub train_fraction: f64,
    /// CSV dataset to use instead of the synthetic generator.
    pub data_path: Option<PathBuf>,
    /// Threads used for client evaluation; never affects results.
    pub workers: usize,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// A configuration problem attributed to one key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: &'static str,
    pub message: String,
}

impl ConfigIssue {
    fn new(key: &'static str, message: impl Into<String>) -> Self {
        ConfigIssue {
            key,
            message: message.into(),
        }
    }
}

impl From<ConfigIssue> for Error {
    fn from(issue: ConfigIssue) -> Self {
        Error::Config(format!("{}: {}", issue.key, issue.message))
    }
}

impl ExperimentConfig {
    /// Configuration with every optional key at its default.
    pub fn new(algorithm: Algorithm, clients: usize, samples_per_client: usize, rounds: usize, seed: u64) -> Self {
        ExperimentConfig {
            algorithm,
            clients,
            samples_per_client,
            rounds,
            seed,
            participation_rate: 1.0,
            dropout_rate: 0.0,
            beta: DEFAULT_BETA,
            c: DEFAULT_C,
            epsilon: DEFAULT_EPSILON,
            local_epochs: algorithm.default_local_epochs(),
            local_lr: DEFAULT_LOCAL_LR,
            mu: if algorithm == Algorithm::FedProx {
                DEFAULT_FEDPROX_MU
            } else {
                0.0
            },
            report_point: ReportPoint::Broadcast,
            features: DEFAULT_FEATURES,
            num_sectors: DEFAULT_NUM_SECTORS,
            signal_strength: 1.0,
            sector_spread: 0.5,
            labels_per_client: 1,
            dirichlet_alpha: DEFAULT_ALPHA,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            data_path: None,
            workers: default_workers(),
        }
    }

    /// Switches algorithm, resetting the algorithm-dependent defaults.
    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self.local_epochs = algorithm.default_local_epochs();
        self.mu = if algorithm == Algorithm::FedProx {
            DEFAULT_FEDPROX_MU
        } else {
            0.0
        };
        self
    }

    pub fn check(&self) -> std::result::Result<(), ConfigIssue> {
        let open_unit = |key, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ConfigIssue::new(key, format!("must lie in (0, 1), got {v}")))
            }
        };
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigIssue::new(key, format!("must be finite and > 0, got {v}")))
            }
        };
        let non_negative = |key, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigIssue::new(key, format!("must be finite and >= 0, got {v}")))
            }
        };
        let at_least_one = |key, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(ConfigIssue::new(key, "must be at least 1"))
            }
        };

        at_least_one("clients", self.clients)?;
        if self.data_path.is_none() {
            at_least_one("samples_per_client", self.samples_per_client)?;
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return Err(ConfigIssue::new(
                "participation_rate",
                format!("must lie in (0, 1], got {}", self.participation_rate),
            ));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(ConfigIssue::new(
                "dropout_rate",
                format!("must lie in [0, 1), got {}", self.dropout_rate),
            ));
        }
        open_unit("beta", self.beta)?;
        positive("c", self.c)?;
        non_negative("epsilon", self.epsilon)?;
        positive("local_lr", self.local_lr)?;
        non_negative("mu", self.mu)?;
        if self.algorithm != Algorithm::FedProx && self.mu != 0.0 {
            return Err(ConfigIssue::new("mu", "only applies to algorithm = fedprox"));
        }
        if self.features < 2 {
            return Err(ConfigIssue::new("features", "must be at least 2"));
        }
        at_least_one("num_sectors", self.num_sectors)?;
        non_negative("signal_strength", self.signal_strength)?;
        non_negative("sector_spread", self.sector_spread)?;
        at_least_one("labels_per_client", self.labels_per_client)?;
        if self.data_path.is_none() && self.labels_per_client > self.num_sectors {
            return Err(ConfigIssue::new(
                "labels_per_client",
                format!("must not exceed num_sectors ({})", self.num_sectors),
            ));
        }
        positive("dirichlet_alpha", self.dirichlet_alpha)?;
        open_unit("train_fraction", self.train_fraction)?;
        at_least_one("workers", self.workers)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(Error::from)
    }

    /// Resolved configuration in the same text format `parse_config` reads.
    pub fn to_config_string(&self) -> String {
        let mut s = self.render_without_workers();
        s.push_str(&format!("workers = {}\n", self.workers));
        s
    }

    fn render_without_workers(&self) -> String {
        let mut lines = vec![
            format!("algorithm = {}", self.algorithm),
            format!("clients = {}", self.clients),
            format!("samples_per_client = {}", self.samples_per_client),
            format!("rounds = {}", self.rounds),
            format!("seed = {}", self.seed),
            format!("participation_rate = {:?}", self.participation_rate),
            format!("dropout_rate = {:?}", self.dropout_rate),
            format!("beta = {:?}", self.beta),
            format!("c = {:?}", self.c),
            format!("epsilon = {:?}", self.epsilon),
            format!("local_epochs = {}", self.local_epochs),
            format!("local_lr = {:?}", self.local_lr),
        ];
        if self.algorithm == Algorithm::FedProx {
            lines.push(format!("mu = {:?}", self.mu));
        }
        lines.extend([
            format!("report_point = {}", self.report_point),
            format!("features = {}", self.features),
            format!("num_sectors = {}", self.num_sectors),
            format!("signal_strength = {:?}", self.signal_strength),
            format!("sector_spread = {:?}", self.sector_spread),
            format!("labels_per_client = {}", self.labels_per_client),
            format!("dirichlet_alpha = {:?}", self.dirichlet_alpha),
            format!("train_fraction = {:?}", self.train_fraction),
        ]);
        if let Some(p) = &self.data_path {
            lines.push(format!("data_path = {}", p.display()));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    /// SHA-256 of the resolved configuration, excluding `workers`.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.render_without_workers().as_bytes()))
    }
}

const KEYS: &[&str] = &[
    "algorithm",
    "clients",
    "samples_per_client",
    "rounds",
    "seed",
    "participation_rate",
    "dropout_rate",
    "beta",
    "c",
    "epsilon",
    "local_epochs",
    "local_lr",
    "mu",
    "report_point",
    "features",
    "num_sectors",
    "signal_strength",
    "sector_spread",
    "labels_per_client",
    "dirichlet_alpha",
    "train_fraction",
    "data_path",
    "workers",
];

/// Reads a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut entries: HashMap<&'static str, (usize, String)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigLine {
            line: line_no,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::ConfigLine {
            line: line_no,
            message: format!("unknown key `{key}`"),
        })?;
        if let Some((first, _)) = entries.get(known) {
            return Err(Error::ConfigLine {
                line: line_no,
                message: format!("key `{key}` already set on line {first}"),
            });
        }
        entries.insert(known, (line_no, value.to_string()));
    }

    let line_of = |key: &str| entries.get(key).map(|(l, _)| *l);
    let at = |key: &'static str, message: String| match line_of(key) {
        Some(line) => Error::ConfigLine {
            line,
            message: format!("{key}: {message}"),
        },
        None => Error::Config(format!("{key}: {message}")),
    };

    fn get<V: FromStr>(
        entries: &HashMap<&'static str, (usize, String)>,
        key: &'static str,
    ) -> Result<Option<V>>
    where
        V::Err: fmt::Display,
    {
        match entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<V>().map(Some).map_err(|e| Error::ConfigLine {
                line: *line,
                message: format!("{key}: cannot parse `{v}`: {e}"),
            }),
        }
    }
    let required = |key: &'static str| Error::Config(format!("missing required key `{key}`"));

    let algorithm: Algorithm = get(&entries, "algorithm")?.ok_or_else(|| required("algorithm"))?;
    let data_path: Option<PathBuf> = get::<String>(&entries, "data_path")?.map(PathBuf::from);
    let samples_per_client = match get(&entries, "samples_per_client")? {
        Some(v) => v,
        None if data_path.is_some() => 0,
        None => return Err(required("samples_per_client")),
    };

    let mut cfg = ExperimentConfig::new(
        algorithm,
        get(&entries, "clients")?.ok_or_else(|| required("clients"))?,
        samples_per_client,
        get(&entries, "rounds")?.ok_or_else(|| required("rounds"))?,
        get(&entries, "seed")?.ok_or_else(|| required("seed"))?,
    );
    cfg.data_path = data_path;

    macro_rules! optional {
        ($($field:ident),* $(,)?) => {
            $(if let Some(v) = get(&entries, stringify!($field))? {
                cfg.$field = v;
            })*
        };
    }
    optional!(
        participation_rate,
        dropout_rate,
        beta,
        c,
        epsilon,
        local_epochs,
        local_lr,
        mu,
        report_point,
        features,
        num_sectors,
        signal_strength,
        sector_spread,
        labels_per_client,
        dirichlet_alpha,
        train_fraction,
        workers,
    );
    if algorithm != Algorithm::FedProx && line_of("mu").is_some() {
        return Err(at("mu", "only applies to algorithm = fedprox".into()));
    }

    cfg.check().map_err(|issue| at(issue.key, issue.message))?;
    Ok(cfg)
}
