//! Ranking functions: the [`Ranker`] contract, a regularized pairwise linear
//! ranker, a gradient-boosted tree ranker and a bootstrap variance estimator.

mod bootstrap;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_variance, BootstrapConfig};
pub use linear::{fit_ranksvm, ranksvm_objective, train_ranksvm, LinearRanker, RankSvmConfig, RankSvmFit};
pub use tree::{
    fit_lambdamart_lite, pairwise_logistic_loss, train_lambdamart_lite, LambdaMartConfig, LambdaMartFit, RegressionTree,
    TreeEnsembleRanker, TreeNode,
};

use crate::dataset::MinMaxScaler;
use crate::domain::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// A scoring function over fixed-dimension feature vectors.
pub trait Ranker<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Scores a raw slice whose length is already known to equal [`Ranker::dim`].
    fn score_slice(&self, x: &[T]) -> T;

    fn score(&self, d: &FeatureVector<T>) -> Result<T> {
        if d.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: d.dim() });
        }
        Ok(self.score_slice(d.as_slice()))
    }

    /// Gradient of the score at `x`, when the ranker is differentiable.
    fn gradient(&self, _x: &[T]) -> Option<Vec<T>> {
        None
    }
}

impl<T: Scalar, R: Ranker<T> + ?Sized> Ranker<T> for &R {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score_slice(&self, x: &[T]) -> T {
        (**self).score_slice(x)
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(x)
    }
}

impl<T: Scalar, R: Ranker<T> + ?Sized> Ranker<T> for Box<R> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score_slice(&self, x: &[T]) -> T {
        (**self).score_slice(x)
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(x)
    }
}

/// Scores every document identically.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRanker<T> {
    pub dim: usize,
    pub value: T,
}

impl<T: Scalar> Ranker<T> for ConstantRanker<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn score_slice(&self, _x: &[T]) -> T {
        self.value
    }
    fn gradient(&self, _x: &[T]) -> Option<Vec<T>> {
        Some(vec![T::zero(); self.dim])
    }
}

/// Wraps an arbitrary scoring closure as a black-box ranker.
pub struct FnRanker<F> {
    dim: usize,
    f: F,
}

impl<F> FnRanker<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F: Fn(&[T]) -> T + Send + Sync> Ranker<T> for FnRanker<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn score_slice(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

/// Euclidean norm of the weight vector, the Lipschitz constant of a linear ranker.
pub fn weight_norm<T: Scalar>(r: &LinearRanker<T>) -> T {
    r.w.norm()
}

/// Either trained family, as persisted to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", bound = "T: Scalar")]
pub enum AnyRanker<T: Scalar> {
    Linear(LinearRanker<T>),
    Trees(TreeEnsembleRanker<T>),
}

impl<T: Scalar> Ranker<T> for AnyRanker<T> {
    fn dim(&self) -> usize {
        match self {
            AnyRanker::Linear(r) => r.dim(),
            AnyRanker::Trees(r) => r.dim(),
        }
    }
    fn score_slice(&self, x: &[T]) -> T {
        match self {
            AnyRanker::Linear(r) => r.score_slice(x),
            AnyRanker::Trees(r) => r.score_slice(x),
        }
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        match self {
            AnyRanker::Linear(r) => r.gradient(x),
            AnyRanker::Trees(r) => r.gradient(x),
        }
    }
}

impl<T: Scalar> AnyRanker<T> {
    /// Rewrites a ranker trained on min-max scaled features so that it scores
    /// raw features identically (up to rounding).
    pub fn fold_scaler(&self, scaler: &MinMaxScaler<T>) -> Result<Self> {
        if scaler.ranges.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: scaler.ranges.len() });
        }
        match self {
            AnyRanker::Linear(r) => {
                let mut b = r.b;
                let w = r
                    .w
                    .as_slice()
                    .iter()
                    .zip(&scaler.ranges)
                    .map(|(&wk, &(lo, hi))| {
                        if hi > lo {
                            b = b - wk * lo / (hi - lo);
                            wk / (hi - lo)
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                Ok(AnyRanker::Linear(LinearRanker::new(FeatureVector::new(w)?, b)))
            }
            AnyRanker::Trees(r) => {
                let mut out = r.clone();
                for node in out.trees.iter_mut().flat_map(|t| t.nodes.iter_mut()) {
                    if let TreeNode::Split { feature, threshold, .. } = node {
                        let (lo, hi) = scaler.ranges[*feature];
                        if hi <= lo {
                            return Err(invalid(format!("split on feature {feature}, which is constant in training")));
                        }
                        *threshold = lo + *threshold * (hi - lo);
                    }
                }
                Ok(AnyRanker::Trees(out))
            }
        }
    }
}

/// Training configuration of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainConfig {
    #[serde(rename = "ranksvm")]
    RankSvm(RankSvmConfig),
    #[serde(rename = "lambdamart")]
    LambdaMart(LambdaMartConfig),
}

impl TrainConfig {
    /// Stable short hash of the configuration, stored with saved rankers.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// A ranker on disk: parameters plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SavedRanker<T: Scalar> {
    pub dim: usize,
    pub config: Option<TrainConfig>,
    pub fingerprint: Option<String>,
    pub ranker: AnyRanker<T>,
}

impl<T: Scalar> SavedRanker<T> {
    pub fn new(ranker: AnyRanker<T>, config: Option<TrainConfig>) -> Self {
        let fingerprint = config.as_ref().map(TrainConfig::fingerprint);
        Self { dim: ranker.dim(), config, fingerprint, ranker }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let saved: Self = serde_json::from_str(s)?;
        if saved.dim != saved.ranker.dim() {
            return Err(Error::DimensionMismatch { expected: saved.dim, found: saved.ranker.dim() });
        }
        Ok(saved)
    }
}
