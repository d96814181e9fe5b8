//! Labeled datasets: synthetic generation, CSV ingestion and temporal splits.
//!
//! Record order is temporal throughout. Nothing in this module shuffles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scalar::{norm, Scalar};

/// Binary action label, `-1` or `+1` on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_int(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::data(format!("label must be -1 or 1, got {other}"))),
        }
    }

    pub fn as_int(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    #[inline]
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Negative => -T::one(),
            Label::Positive => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record<T> {
    pub features: Vec<T>,
    pub label: Label,
    /// Partitioning group (market sector).
    pub sector: u32,
}

/// Ordered records with a common feature dimension. Index is time.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    records: Vec<Record<T>>,
    feature_dim: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(feature_dim: usize, records: Vec<Record<T>>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != feature_dim {
                return Err(Error::data(format!(
                    "record {i} has {} features, expected {feature_dim}",
                    r.features.len()
                )));
            }
            if let Some(j) = r.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("record {i} feature {j} is not finite")));
            }
        }
        Ok(LabeledDataset {
            records,
            feature_dim,
        })
    }

    pub fn empty(feature_dim: usize) -> Self {
        LabeledDataset {
            records: Vec::new(),
            feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn records(&self) -> &[Record<T>] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Record<T>> {
        self.records.iter()
    }

    /// New dataset holding the records at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        LabeledDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            feature_dim: self.feature_dim,
        }
    }

    /// Concatenation in argument order.
    pub fn concat<'a>(feature_dim: usize, parts: impl IntoIterator<Item = &'a Self>) -> Self {
        let records = parts
            .into_iter()
            .flat_map(|p| p.records.iter().cloned())
            .collect();
        LabeledDataset {
            records,
            feature_dim,
        }
    }

    /// Distinct sector tags in ascending order.
    pub fn sectors(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.records.iter().map(|r| r.sector).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.records.is_empty() {
            Err(Error::domain("dataset is empty"))
        } else {
            Ok(())
        }
    }
}

/// Parameters of the synthetic generator.
///
/// Each sector `s` has a unit mean direction
/// `mu_s = normalize(shared + sector_spread * own_s)`, where `shared` and
/// `own_s` are seeded standard-normal vectors. A record of sector `s` with
/// label `y` has features `y * signal_strength * mu_s + noise`, with
/// standard-normal noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub samples: usize,
    pub feature_dim: usize,
    pub num_sectors: usize,
    pub signal_strength: f64,
    pub sector_spread: f64,
}

impl SyntheticParams {
    pub fn new(samples: usize, feature_dim: usize, num_sectors: usize) -> Self {
        SyntheticParams {
            samples,
            feature_dim,
            num_sectors,
            signal_strength: 1.0,
            sector_spread: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("synthetic sample count must be at least 1"));
        }
        if self.feature_dim < 2 {
            return Err(Error::config("synthetic feature dimension must be at least 2"));
        }
        if self.num_sectors == 0 {
            return Err(Error::config("number of sectors must be at least 1"));
        }
        if !(self.signal_strength.is_finite() && self.signal_strength >= 0.0) {
            return Err(Error::config("signal_strength must be finite and >= 0"));
        }
        if !(self.sector_spread.is_finite() && self.sector_spread >= 0.0) {
            return Err(Error::config("sector_spread must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Unit mean direction of every sector under `seed`.
pub fn sector_directions(params: &SyntheticParams, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::derive(seed, Stream::Synthetic, &[0]);
    let d = params.feature_dim;
    let gaussian = |rng: &mut rng::SimRng| -> Vec<f64> {
        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let shared = gaussian(&mut rng);
    (0..params.num_sectors)
        .map(|_| {
            let own = gaussian(&mut rng);
            let mut mu: Vec<f64> = shared
                .iter()
                .zip(&own)
                .map(|(a, b)| a + params.sector_spread * b)
                .collect();
            let n = norm(&mu);
            mu.iter_mut().for_each(|v| *v /= n);
            mu
        })
        .collect()
}

pub fn generate_synthetic<T: Scalar>(
    samples: usize,
    feature_dim: usize,
    num_sectors: usize,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    generate_with(&SyntheticParams::new(samples, feature_dim, num_sectors), seed)
}

pub fn generate_with<T: Scalar>(params: &SyntheticParams, seed: u64) -> Result<LabeledDataset<T>> {
    params.validate()?;
    let directions = sector_directions(params, seed);
    let mut rng = rng::derive(seed, Stream::Synthetic, &[1]);
    let records = (0..params.samples)
        .map(|_| {
            let sector = rng.random_range(0..params.num_sectors);
            let label = if rng.random_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            };
            let scale = label.sign::<f64>() * params.signal_strength;
            let features = directions[sector]
                .iter()
                .map(|&m| T::of(scale * m + rng.sample::<f64, _>(StandardNormal)))
                .collect();
            Record {
                features,
                label,
                sector: sector as u32,
            }
        })
        .collect();
    Ok(LabeledDataset {
        records,
        feature_dim: params.feature_dim,
    })
}

/// Reads `feature_0..feature_{d-1},label[,sector]` with a header row.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: cannot read header: {e}", path.display())))?
        .clone();

    let mut feature_dim = 0;
    while headers.get(feature_dim) == Some(format!("feature_{feature_dim}").as_str()) {
        feature_dim += 1;
    }
    if feature_dim == 0 {
        return Err(Error::data("header must start with feature_0"));
    }
    if headers.get(feature_dim) != Some("label") {
        return Err(Error::data(format!(
            "expected column `label` after feature_{}",
            feature_dim - 1
        )));
    }
    let has_sector = match headers.len() - feature_dim - 1 {
        0 => false,
        1 if headers.get(feature_dim + 1) == Some("sector") => true,
        _ => {
            return Err(Error::data(
                "unexpected columns after `label` (only `sector` is allowed)",
            ))
        }
    };

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::data(format!("line {line}: {e}")))?;
        if row.len() != headers.len() {
            return Err(Error::data(format!(
                "line {line}: expected {} cells, found {}",
                headers.len(),
                row.len()
            )));
        }
        let mut features = Vec::with_capacity(feature_dim);
        for j in 0..feature_dim {
            let cell = &row[j];
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!("line {line}: feature_{j} `{cell}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!("line {line}: feature_{j} is not finite")));
            }
            features.push(T::of(v));
        }
        let label_cell = &row[feature_dim];
        let label = match label_cell {
            "-1" => Label::Negative,
            "1" => Label::Positive,
            other => {
                return Err(Error::data(format!(
                    "line {line}: label must be -1 or 1, got `{other}`"
                )))
            }
        };
        let sector = if has_sector {
            let cell = &row[feature_dim + 1];
            cell.parse().map_err(|_| {
                Error::data(format!("line {line}: sector `{cell}` is not a nonnegative integer"))
            })?
        } else {
            0
        };
        records.push(Record {
            features,
            label,
            sector,
        });
    }
    Ok(LabeledDataset {
        records,
        feature_dim,
    })
}

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn format_float<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

pub fn write_csv<T: Scalar>(data: &LabeledDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<String> = (0..data.feature_dim)
        .map(|j| format!("feature_{j}"))
        .collect();
    header.push("label".into());
    header.push("sector".into());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for r in &data.records {
        let mut cells: Vec<String> = r.features.iter().map(|&v| format_float(v)).collect();
        cells.push(r.label.as_int().to_string());
        cells.push(r.sector.to_string());
        writeln!(out, "{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T> {
    pub train: LabeledDataset<T>,
    pub test: LabeledDataset<T>,
    pub train_fraction: f64,
}

/// First `floor(fraction * n)` records train, the rest test. No shuffling.
pub fn temporal_split<T: Scalar>(data: &LabeledDataset<T>, fraction: f64) -> Result<SplitDataset<T>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = data.len();
    let cut = (fraction * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::config(format!(
            "temporal split of {n} records at fraction {fraction} leaves an empty side"
        )));
    }
    Ok(SplitDataset {
        train: LabeledDataset {
            records: data.records[..cut].to_vec(),
            feature_dim: data.feature_dim,
        },
        test: LabeledDataset {
            records: data.records[cut..].to_vec(),
            feature_dim: data.feature_dim,
        },
        train_fraction: fraction,
    })
}
