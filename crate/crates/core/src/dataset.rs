//! Graded learning-to-rank datasets and preference pairs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{CompetitionLog, DocumentSnapshot, FeatureVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GradedDoc<T: Scalar> {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u8,
    pub features: FeatureVector<T>,
}

/// A judged collection of query-document feature vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GradedDataset<T: Scalar> {
    pub docs: Vec<GradedDoc<T>>,
}

/// A training pair: `label = +1` means `winner` should outscore `loser`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair<T: Scalar> {
    pub query_id: String,
    pub winner: FeatureVector<T>,
    pub loser: FeatureVector<T>,
    pub label: i8,
}

impl<T: Scalar> GradedDataset<T> {
    pub fn new(docs: Vec<GradedDoc<T>>) -> Result<Self> {
        if let Some(first) = docs.first() {
            let m = first.features.dim();
            if let Some(bad) = docs.iter().find(|d| d.features.dim() != m) {
                return Err(Error::DimensionMismatch { expected: m, found: bad.features.dim() });
            }
        }
        Ok(Self { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.docs.first().map(|d| d.features.dim())
    }

    /// Query ids in order of first appearance.
    pub fn query_ids(&self) -> Vec<&str> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for d in &self.docs {
            if seen.insert(d.query_id.as_str(), ()).is_none() {
                out.push(d.query_id.as_str());
            }
        }
        out
    }

    /// Indices of documents grouped by query, queries in first-appearance order.
    pub fn query_groups(&self) -> Vec<Vec<usize>> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, d) in self.docs.iter().enumerate() {
            let g = *index.entry(d.query_id.as_str()).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }

    /// All within-query pairs with different grades, higher grade as winner.
    pub fn preference_pairs(&self) -> Vec<PreferencePair<T>> {
        let mut pairs = Vec::new();
        for group in self.query_groups() {
            for (a, &i) in group.iter().enumerate() {
                for &j in &group[a + 1..] {
                    let (di, dj) = (&self.docs[i], &self.docs[j]);
                    let (w, l) = match di.grade.cmp(&dj.grade) {
                        std::cmp::Ordering::Greater => (di, dj),
                        std::cmp::Ordering::Less => (dj, di),
                        std::cmp::Ordering::Equal => continue,
                    };
                    pairs.push(PreferencePair {
                        query_id: w.query_id.clone(),
                        winner: w.features.clone(),
                        loser: l.features.clone(),
                        label: 1,
                    });
                }
            }
        }
        pairs
    }

    /// Min-max bounds per feature, for optional scaling.
    pub fn feature_ranges(&self) -> Option<Vec<(T, T)>> {
        let m = self.dim()?;
        let mut out = vec![(T::infinity(), T::neg_infinity()); m];
        for d in &self.docs {
            for (r, &v) in out.iter_mut().zip(d.features.as_slice()) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        Some(out)
    }
}

/// Per-feature affine map onto [0, 1], fit on training data. Constant
/// features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MinMaxScaler<T: Scalar> {
    pub ranges: Vec<(T, T)>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(dataset: &GradedDataset<T>) -> Result<Self> {
        dataset.feature_ranges().map(|ranges| Self { ranges }).ok_or(Error::Empty("dataset to fit the scaler on"))
    }

    pub fn transform(&self, x: &FeatureVector<T>) -> Result<FeatureVector<T>> {
        if x.dim() != self.ranges.len() {
            return Err(Error::DimensionMismatch { expected: self.ranges.len(), found: x.dim() });
        }
        let v = x
            .as_slice()
            .iter()
            .zip(&self.ranges)
            .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { T::zero() })
            .collect();
        FeatureVector::new(v)
    }

    pub fn transform_dataset(&self, dataset: &GradedDataset<T>) -> Result<GradedDataset<T>> {
        let docs = dataset
            .docs
            .iter()
            .map(|d| Ok(GradedDoc { features: self.transform(&d.features)?, ..d.clone() }))
            .collect::<Result<_>>()?;
        Ok(GradedDataset { docs })
    }

    pub fn transform_log(&self, log: &CompetitionLog<T>) -> Result<CompetitionLog<T>> {
        let snapshots = log
            .snapshots
            .iter()
            .map(|s| Ok(DocumentSnapshot { features: self.transform(&s.features)?, ..s.clone() }))
            .collect::<Result<_>>()?;
        CompetitionLog::new(snapshots)
    }
}

impl<T: Scalar> From<&CompetitionLog<T>> for GradedDataset<T> {
    /// Each (query, round) becomes its own query so that pairs never mix rounds.
    fn from(log: &CompetitionLog<T>) -> Self {
        Self {
            docs: log
                .snapshots
                .iter()
                .map(|s| GradedDoc {
                    query_id: format!("{}#r{}", s.query_id, s.round),
                    doc_id: s.doc_id.clone(),
                    grade: s.relevance_grade,
                    features: s.features.clone(),
                })
                .collect(),
        }
    }
}
