//! Deterministic simulator for risk-aware federated learning.
//!
//! Clients minimize a regularized hinge penalty on the part of their loss
//! distribution above its beta-quantile. The server combines client
//! gradients with tail-restricted Gauss-Newton curvature and takes a damped
//! second-order step. FedAvg and FedProx are provided as references, along
//! with a synthetic non-IID data generator, a two-stage Dirichlet
//! partitioner and a round-indexed metrics writer.
//!
//! All numerical code is generic over [`Scalar`] (`f32`, `f64`); the
//! aliases below fix the precision used by the command-line tool.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod federation;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod partition;
pub mod risk;
pub mod rng;
pub mod scalar;
pub mod sensitivity;

pub use config::{Algorithm, ExperimentConfig};
pub use error::{Error, Result};
pub use model::{LinearModel, Model};
pub use scalar::Scalar;

/// Working precision of the command-line tool.
pub type Real = f64;

pub type Weights = model::WeightVector<Real>;
pub type Dataset = data::LabeledDataset<Real>;
pub type Risks = risk::RiskVector<Real>;
pub type Sensitivity = sensitivity::SensitivityMatrix<Real>;
pub type Report = sensitivity::ClientReport<Real>;

pub type Weights32 = model::WeightVector<f32>;
pub type Dataset32 = data::LabeledDataset<f32>;
