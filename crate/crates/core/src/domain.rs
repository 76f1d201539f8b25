//! Documents, rankings and competition logs, plus deterministic ranking.
//!
//! Everything here is immutable once built. Ranking ties are broken by
//! ascending lexicographic document id so that repeated runs, and the two
//! rounds of a round pair, order tied documents identically.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rankers::Ranker;
use crate::scalar::{self, Scalar};

/// Dense, finite, fixed-dimension feature vector of a query-document pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar")]
pub struct FeatureVector<T: Scalar>(Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    /// Builds from `f64` values; panics on non-finite input. Intended for literals.
    pub fn from_f64(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| T::lit(v)).collect()).expect("finite literal")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        scalar::norm(&self.0)
    }

    pub fn dot(&self, other: &Self) -> T {
        scalar::dot(&self.0, &other.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == T::zero())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::new(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::new(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn scale(&self, factor: T) -> Self {
        Self(self.0.iter().map(|&v| v * factor).collect())
    }

    pub fn distance(&self, other: &Self) -> Result<T> {
        Ok(self.sub(other)?.norm())
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for FeatureVector<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T: Scalar> From<FeatureVector<T>> for Vec<T> {
    fn from(v: FeatureVector<T>) -> Self {
        v.0
    }
}

impl<T: Scalar> Index<usize> for FeatureVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// One author's document for one query in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DocumentSnapshot<T: Scalar> {
    pub doc_id: String,
    pub author_id: String,
    pub query_id: String,
    pub round: u32,
    pub features: FeatureVector<T>,
    pub relevance_grade: u8,
}

/// Documents of one query ordered by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedList<T: Scalar> {
    pub query_id: String,
    pub entries: Vec<(String, T)>,
}

impl<T: Scalar> RankedList<T> {
    /// Sorts `(doc_id, score)` pairs by score, breaking ties by doc id.
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, T)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(scored.len());
        for (id, s) in &scored {
            if !seen.insert(id.as_str()) {
                return Err(invalid(format!("duplicate doc id `{id}` in ranking")));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("ranking score"));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { query_id: query_id.into(), entries: scored })
    }

    /// Builds a list whose order is given directly, best first. Scores are
    /// synthesized as descending integers.
    pub fn from_order<S: AsRef<str>>(query_id: impl Into<String>, order: &[S]) -> Result<Self> {
        let n = order.len();
        let scored = order
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_ref().to_string(), T::lit((n - i) as f64)))
            .collect();
        Self::from_scores(query_id, scored)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn top(&self) -> Option<&str> {
        self.entries.first().map(|(id, _)| id.as_str())
    }

    /// Map from doc id to 0-based rank.
    pub fn positions(&self) -> HashMap<&str, usize> {
        self.ids().enumerate().map(|(i, id)| (id, i)).collect()
    }

    /// Renames documents through `mapping`; ids without a mapping are kept.
    /// Order is preserved.
    pub fn relabel(&self, mapping: &HashMap<String, String>) -> Self {
        Self {
            query_id: self.query_id.clone(),
            entries: self
                .entries
                .iter()
                .map(|(id, s)| (mapping.get(id).cloned().unwrap_or_else(|| id.clone()), *s))
                .collect(),
        }
    }
}

/// Per-query, per-round snapshots of every author's document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CompetitionLog<T: Scalar> {
    pub queries: Vec<String>,
    pub rounds: u32,
    pub snapshots: Vec<DocumentSnapshot<T>>,
}

impl<T: Scalar> CompetitionLog<T> {
    /// Validates and indexes a set of snapshots.
    ///
    /// Checks: unique `(query, author, round)`, unique doc ids, grades in
    /// 0..=3, a single feature dimension, rounds starting at 1 and contiguous
    /// for each query.
    pub fn new(snapshots: Vec<DocumentSnapshot<T>>) -> Result<Self> {
        let mut keys = HashSet::new();
        let mut ids = HashSet::new();
        let mut rounds_per_query: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
        let dim = snapshots.first().map(|s| s.features.dim());
        for s in &snapshots {
            if s.round == 0 {
                return Err(invalid(format!("doc `{}` has round 0; rounds start at 1", s.doc_id)));
            }
            if s.relevance_grade > 3 {
                return Err(invalid(format!("doc `{}` has grade {} outside 0..=3", s.doc_id, s.relevance_grade)));
            }
            if Some(s.features.dim()) != dim {
                return Err(Error::DimensionMismatch { expected: dim.unwrap_or(0), found: s.features.dim() });
            }
            if !keys.insert((s.query_id.as_str(), s.author_id.as_str(), s.round)) {
                return Err(invalid(format!(
                    "duplicate snapshot for query `{}`, author `{}`, round {}",
                    s.query_id, s.author_id, s.round
                )));
            }
            if !ids.insert(s.doc_id.as_str()) {
                return Err(invalid(format!("duplicate doc id `{}`", s.doc_id)));
            }
            rounds_per_query.entry(s.query_id.as_str()).or_default().insert(s.round);
        }
        let mut rounds = 0;
        for (q, rs) in &rounds_per_query {
            let max = *rs.iter().next_back().unwrap_or(&0);
            if rs.len() as u32 != max {
                return Err(invalid(format!("rounds of query `{q}` are not contiguous from 1")));
            }
            rounds = rounds.max(max);
        }
        let queries = rounds_per_query.keys().map(|q| q.to_string()).collect();
        Ok(Self { queries, rounds, snapshots })
    }

    pub fn dim(&self) -> Option<usize> {
        self.snapshots.first().map(|s| s.features.dim())
    }

    /// Snapshots of one query in one round, sorted by author id.
    pub fn round_snapshots(&self, query_id: &str, round: u32) -> Vec<&DocumentSnapshot<T>> {
        let mut out: Vec<_> =
            self.snapshots.iter().filter(|s| s.query_id == query_id && s.round == round).collect();
        out.sort_by(|a, b| a.author_id.cmp(&b.author_id));
        out
    }

    pub fn query_rounds(&self, query_id: &str) -> u32 {
        self.snapshots.iter().filter(|s| s.query_id == query_id).map(|s| s.round).max().unwrap_or(0)
    }
}

/// A document before and after one round of manipulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PairedChange<T: Scalar> {
    /// Item identity shared by both rounds (the earlier round's doc id).
    pub doc_id: String,
    pub author_id: String,
    pub before: FeatureVector<T>,
    pub after: FeatureVector<T>,
}

impl<T: Scalar> PairedChange<T> {
    pub fn new(doc_id: impl Into<String>, before: FeatureVector<T>, after: FeatureVector<T>) -> Result<Self> {
        if before.dim() != after.dim() {
            return Err(Error::DimensionMismatch { expected: before.dim(), found: after.dim() });
        }
        let doc_id = doc_id.into();
        Ok(Self { author_id: doc_id.clone(), doc_id, before, after })
    }

    pub fn change(&self) -> FeatureVector<T> {
        FeatureVector(self.after.0.iter().zip(&self.before.0).map(|(&a, &b)| a - b).collect())
    }
}

/// Result of matching two consecutive rounds of one query by author.
#[derive(Debug, Clone)]
pub struct RoundPair<'a, T: Scalar> {
    pub changes: Vec<PairedChange<T>>,
    pub before: Vec<&'a DocumentSnapshot<T>>,
    pub after: Vec<&'a DocumentSnapshot<T>>,
    /// Authors present in only one of the two rounds.
    pub dropped_authors: Vec<String>,
}

impl<T: Scalar> RoundPair<'_, T> {
    /// Later-round doc id -> earlier-round doc id.
    pub fn identity_map(&self) -> HashMap<String, String> {
        self.before.iter().zip(&self.after).map(|(b, a)| (a.doc_id.clone(), b.doc_id.clone())).collect()
    }
}

/// Pairs the documents of `round` and `round + 1` for a query by author.
///
/// Authors missing from either round are dropped and logged.
pub fn pair_snapshots<'a, T: Scalar>(
    log: &'a CompetitionLog<T>,
    query_id: &str,
    round: u32,
) -> Result<RoundPair<'a, T>> {
    let earlier = log.round_snapshots(query_id, round);
    let later = log.round_snapshots(query_id, round + 1);
    if earlier.is_empty() || later.is_empty() {
        return Err(invalid(format!("query `{query_id}` lacks rounds {round} and {}", round + 1)));
    }
    let later_by_author: HashMap<&str, &DocumentSnapshot<T>> =
        later.iter().map(|s| (s.author_id.as_str(), *s)).collect();
    let earlier_authors: HashSet<&str> = earlier.iter().map(|s| s.author_id.as_str()).collect();

    let mut out = RoundPair { changes: Vec::new(), before: Vec::new(), after: Vec::new(), dropped_authors: Vec::new() };
    for b in earlier {
        match later_by_author.get(b.author_id.as_str()) {
            Some(a) => {
                out.changes.push(PairedChange {
                    doc_id: b.doc_id.clone(),
                    author_id: b.author_id.clone(),
                    before: b.features.clone(),
                    after: a.features.clone(),
                });
                out.before.push(b);
                out.after.push(a);
            }
            None => out.dropped_authors.push(b.author_id.clone()),
        }
    }
    for a in later {
        if !earlier_authors.contains(a.author_id.as_str()) {
            out.dropped_authors.push(a.author_id.clone());
        }
    }
    out.dropped_authors.sort();
    if !out.dropped_authors.is_empty() {
        log::warn!(
            "query `{query_id}`, rounds {round}->{}: dropping authors without both snapshots: {:?}",
            round + 1,
            out.dropped_authors
        );
    }
    Ok(out)
}

/// Ranks snapshots of a single query with `ranker`.
pub fn rank<T, R, S>(ranker: &R, snapshots: &[S]) -> Result<RankedList<T>>
where
    T: Scalar,
    R: Ranker<T> + ?Sized,
    S: std::borrow::Borrow<DocumentSnapshot<T>>,
{
    let Some(first) = snapshots.first() else {
        return Ok(RankedList { query_id: String::new(), entries: Vec::new() });
    };
    let query_id = first.borrow().query_id.clone();
    let mut scored = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let s = s.borrow();
        if s.query_id != query_id {
            return Err(invalid(format!("mixed queries `{}` and `{}` in one ranking", query_id, s.query_id)));
        }
        scored.push((s.doc_id.clone(), ranker.score(&s.features)?));
    }
    RankedList::from_scores(query_id, scored)
}
