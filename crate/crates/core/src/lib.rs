//! Robustness of learning-to-rank functions under adversarial document
//! manipulations.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the statistics, sweeps and CLI use.

pub mod compare;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod io;
pub mod measures;
pub mod rankers;
pub mod rng;
pub mod robustness;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod sweep;

pub use dataset::{GradedDataset, GradedDoc, MinMaxScaler, PreferencePair};
pub use domain::{pair_snapshots, rank, CompetitionLog, DocumentSnapshot, FeatureVector, PairedChange, RankedList};
pub use error::{Error, Result};
pub use rankers::Ranker;
pub use scalar::Scalar;

pub type Features = FeatureVector<f64>;
pub type Features32 = FeatureVector<f32>;
pub type Linear = rankers::LinearRanker<f64>;
pub type Linear32 = rankers::LinearRanker<f32>;
pub type Trees = rankers::TreeEnsembleRanker<f64>;
pub type Snapshot = DocumentSnapshot<f64>;
pub type Log = CompetitionLog<f64>;
pub type Dataset = GradedDataset<f64>;
pub type Ranking = RankedList<f64>;
pub type Change = PairedChange<f64>;
