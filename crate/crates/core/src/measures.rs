//! Ranking-robustness measures between a list and its re-ranking after
//! document changes, and the round-pair evaluation protocol over a
//! competition log.
//!
//! The lists compared are always conjoint: a document before and after its
//! change is the same item.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{pair_snapshots, rank, CompetitionLog, PairedChange, RankedList};
use crate::error::{invalid, Error, Result};
use crate::rankers::Ranker;
use crate::scalar::Scalar;

/// How the changes of two documents are combined into one magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `‖Δ2‖ + ‖Δ1‖`
    Sum,
    /// `|‖Δ2‖ − ‖Δ1‖|`
    Diff,
    /// `‖Δ2 − Δ1‖`
    Rel,
}

/// The nine measures reported per round pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "KT")]
    Kt,
    #[serde(rename = "RBO")]
    Rbo,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "KT-sum")]
    KtSum,
    #[serde(rename = "KT-diff")]
    KtDiff,
    #[serde(rename = "KT-rel")]
    KtRel,
    #[serde(rename = "TC-sum")]
    TcSum,
    #[serde(rename = "TC-diff")]
    TcDiff,
    #[serde(rename = "TC-rel")]
    TcRel,
}

impl Measure {
    pub const ALL: [Measure; 9] = [
        Measure::Kt,
        Measure::Rbo,
        Measure::Tc,
        Measure::KtSum,
        Measure::KtDiff,
        Measure::KtRel,
        Measure::TcSum,
        Measure::TcDiff,
        Measure::TcRel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Kt => "KT",
            Measure::Rbo => "RBO",
            Measure::Tc => "TC",
            Measure::KtSum => "KT-sum",
            Measure::KtDiff => "KT-diff",
            Measure::KtRel => "KT-rel",
            Measure::TcSum => "TC-sum",
            Measure::TcDiff => "TC-diff",
            Measure::TcRel => "TC-rel",
        }
    }

    /// RBO is a similarity; every other measure is a distance.
    pub fn is_similarity(self) -> bool {
        self == Measure::Rbo
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown measure `{s}`")))
    }
}

fn check_conjoint<T: Scalar>(a: &RankedList<T>, b: &RankedList<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::NotConjoint(format!("lengths {} and {}", a.len(), b.len())));
    }
    let left: HashSet<&str> = a.ids().collect();
    if left.len() != a.len() {
        return Err(Error::NotConjoint("duplicate item in first list".into()));
    }
    if let Some(missing) = b.ids().find(|id| !left.contains(id)) {
        return Err(Error::NotConjoint(format!("`{missing}` only in second list")));
    }
    Ok(())
}

/// Discordant pairs as `(earlier item in a, later item in a)`.
fn discordant_pairs<'a, T: Scalar>(a: &'a RankedList<T>, b: &RankedList<T>) -> Vec<(&'a str, &'a str)> {
    let pos_b = b.positions();
    let ids: Vec<&str> = a.ids().collect();
    let mut out = Vec::new();
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if pos_b[ids[i]] > pos_b[ids[j]] {
                out.push((ids[i], ids[j]));
            }
        }
    }
    out
}

/// Fraction of item pairs ordered differently by the two lists.
pub fn kt_distance<T: Scalar>(a: &RankedList<T>, b: &RankedList<T>) -> Result<f64> {
    check_conjoint(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(invalid("Kendall's tau distance needs at least two items"));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(discordant_pairs(a, b).len() as f64 / pairs)
}

/// Extrapolated rank-biased overlap of two conjoint lists of length `k`:
/// `(1 − p)·Σ_{d=1..k} p^(d−1)·A_d + p^k`, `A_d` the prefix agreement at depth `d`.
pub fn rbo_ext<T: Scalar>(a: &RankedList<T>, b: &RankedList<T>, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("RBO persistence must lie in (0, 1), got {p}")));
    }
    check_conjoint(a, b)?;
    let k = a.len();
    let mut seen_a = HashSet::with_capacity(k);
    let mut seen_b = HashSet::with_capacity(k);
    let mut overlap = 0usize;
    let mut sum = 0.0;
    let mut weight = 1.0;
    for (x, y) in a.ids().zip(b.ids()) {
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        let depth = seen_a.len() as f64;
        sum += weight * overlap as f64 / depth;
        weight *= p;
    }
    Ok(((1.0 - p) * sum + weight).clamp(0.0, 1.0))
}

/// 1 when the top item differs, else 0.
pub fn top_change<T: Scalar>(a: &RankedList<T>, b: &RankedList<T>) -> Result<u8> {
    check_conjoint(a, b)?;
    Ok(u8::from(a.top() != b.top()))
}

/// Combined change magnitude of two documents.
pub fn delta_doc_pair<T: Scalar>(c1: &PairedChange<T>, c2: &PairedChange<T>, mode: Normalizer) -> Result<T> {
    if c1.before.dim() != c2.before.dim() {
        return Err(Error::DimensionMismatch { expected: c1.before.dim(), found: c2.before.dim() });
    }
    let d1 = c1.change();
    let d2 = c2.change();
    Ok(match mode {
        Normalizer::Sum => d2.norm() + d1.norm(),
        Normalizer::Diff => (d2.norm() - d1.norm()).abs(),
        Normalizer::Rel => d2.sub(&d1)?.norm(),
    })
}

fn change_index<'a, T: Scalar>(
    a: &RankedList<T>,
    changes: &'a [PairedChange<T>],
) -> Result<HashMap<&'a str, &'a PairedChange<T>>> {
    let index: HashMap<&str, &PairedChange<T>> = changes.iter().map(|c| (c.doc_id.as_str(), c)).collect();
    if let Some(missing) = a.ids().find(|id| !index.contains_key(id)) {
        return Err(Error::MissingChange(missing.to_string()));
    }
    Ok(index)
}

/// Sum over discordant pairs of `1 / (δ(d1, d2) + 1)`. Unnormalized.
pub fn kt_weighted<T: Scalar>(
    a: &RankedList<T>,
    b: &RankedList<T>,
    changes: &[PairedChange<T>],
    mode: Normalizer,
) -> Result<f64> {
    check_conjoint(a, b)?;
    let index = change_index(a, changes)?;
    let mut total = 0.0;
    for (x, y) in discordant_pairs(a, b) {
        let delta = delta_doc_pair(index[x], index[y], mode)?.as_f64();
        total += 1.0 / (delta + 1.0);
    }
    Ok(total)
}

/// `1 / (δ(top of a, top of b) + 1)` when the top changed, else 0.
pub fn tc_weighted<T: Scalar>(
    a: &RankedList<T>,
    b: &RankedList<T>,
    changes: &[PairedChange<T>],
    mode: Normalizer,
) -> Result<f64> {
    check_conjoint(a, b)?;
    let (Some(top_a), Some(top_b)) = (a.top(), b.top()) else {
        return Ok(0.0);
    };
    if top_a == top_b {
        return Ok(0.0);
    }
    let index = change_index(a, changes)?;
    let delta = delta_doc_pair(index[top_a], index[top_b], mode)?.as_f64();
    Ok(1.0 / (delta + 1.0))
}

/// All nine measures for one list pair.
pub fn all_measures<T: Scalar>(
    a: &RankedList<T>,
    b: &RankedList<T>,
    changes: &[PairedChange<T>],
    rbo_p: f64,
) -> Result<BTreeMap<Measure, f64>> {
    let mut out = BTreeMap::new();
    out.insert(Measure::Kt, kt_distance(a, b)?);
    out.insert(Measure::Rbo, rbo_ext(a, b, rbo_p)?);
    out.insert(Measure::Tc, top_change(a, b)? as f64);
    for (mode, kt, tc) in [
        (Normalizer::Sum, Measure::KtSum, Measure::TcSum),
        (Normalizer::Diff, Measure::KtDiff, Measure::TcDiff),
        (Normalizer::Rel, Measure::KtRel, Measure::TcRel),
    ] {
        out.insert(kt, kt_weighted(a, b, changes, mode)?);
        out.insert(tc, tc_weighted(a, b, changes, mode)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub rbo_p: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self { rbo_p: 0.7 }
    }
}

/// Measures of one consecutive round pair `(round, round + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPairValues {
    pub round: u32,
    pub values: BTreeMap<Measure, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRobustness {
    pub query_id: String,
    pub round_pairs: Vec<RoundPairValues>,
    /// Mean over round pairs.
    pub means: BTreeMap<Measure, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRoundPair {
    pub query_id: String,
    pub round: u32,
    pub reason: String,
}

/// Two-stage averages: round pairs within a query, then queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub queries: Vec<QueryRobustness>,
    pub grand_means: BTreeMap<Measure, f64>,
    /// Queries without any usable round pair.
    pub excluded_queries: Vec<String>,
    pub skipped_round_pairs: Vec<SkippedRoundPair>,
}

impl RobustnessReport {
    pub fn grand_mean(&self, m: Measure) -> f64 {
        self.grand_means.get(&m).copied().unwrap_or(f64::NAN)
    }

    /// Per-round-pair values of one measure for one query.
    pub fn values(&self, m: Measure, query_id: &str) -> Option<Vec<f64>> {
        self.queries
            .iter()
            .find(|q| q.query_id == query_id)
            .map(|q| q.round_pairs.iter().map(|r| r.values[&m]).collect())
    }

    /// Per-query means of one measure, in report order.
    pub fn query_means(&self, m: Measure) -> Vec<f64> {
        self.queries.iter().map(|q| q.means[&m]).collect()
    }

    /// One row per query × round pair × measure.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["query_id", "round", "next_round", "measure", "value"])?;
        for q in &self.queries {
            for rp in &q.round_pairs {
                for (m, v) in &rp.values {
                    out.write_record([
                        q.query_id.as_str(),
                        &rp.round.to_string(),
                        &(rp.round + 1).to_string(),
                        m.name(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_of(rows: &[&BTreeMap<Measure, f64>]) -> BTreeMap<Measure, f64> {
    Measure::ALL
        .into_iter()
        .map(|m| (m, rows.iter().map(|r| r[&m]).sum::<f64>() / rows.len() as f64))
        .collect()
}

/// Ranks every round of every query with `ranker`, compares consecutive
/// rounds with all nine measures and averages per query, then over queries.
pub fn evaluate_ranking_robustness<T: Scalar, R: Ranker<T> + ?Sized>(
    ranker: &R,
    log: &CompetitionLog<T>,
    cfg: &MeasureConfig,
) -> Result<RobustnessReport> {
    if log.rounds < 2 {
        return Err(invalid("robustness evaluation needs at least two rounds"));
    }
    if !(cfg.rbo_p > 0.0 && cfg.rbo_p < 1.0) {
        return Err(invalid("rbo_p must lie in (0, 1)"));
    }
    if let Some(m) = log.dim() {
        if m != ranker.dim() {
            return Err(Error::DimensionMismatch { expected: ranker.dim(), found: m });
        }
    }

    type PerQuery = (Option<QueryRobustness>, Vec<SkippedRoundPair>);
    let per_query: Vec<PerQuery> = log
        .queries
        .par_iter()
        .map(|q| -> Result<PerQuery> {
            let mut pairs = Vec::new();
            let mut skipped = Vec::new();
            for round in 1..log.query_rounds(q) {
                let rp = match pair_snapshots(log, q, round) {
                    Ok(rp) => rp,
                    Err(e) => {
                        skipped.push(SkippedRoundPair { query_id: q.clone(), round, reason: e.to_string() });
                        continue;
                    }
                };
                if rp.changes.len() < 2 {
                    skipped.push(SkippedRoundPair {
                        query_id: q.clone(),
                        round,
                        reason: format!("{} paired documents; need 2", rp.changes.len()),
                    });
                    continue;
                }
                let before = rank(ranker, &rp.before)?;
                let after = rank(ranker, &rp.after)?.relabel(&rp.identity_map());
                let values = all_measures(&before, &after, &rp.changes, cfg.rbo_p)?;
                pairs.push(RoundPairValues { round, values });
            }
            if pairs.is_empty() {
                return Ok((None, skipped));
            }
            let means = mean_of(&pairs.iter().map(|p| &p.values).collect::<Vec<_>>());
            Ok((Some(QueryRobustness { query_id: q.clone(), round_pairs: pairs, means }), skipped))
        })
        .collect::<Result<_>>()?;

    let mut queries = Vec::new();
    let mut excluded = Vec::new();
    let mut skipped_round_pairs = Vec::new();
    for (q, (res, skipped)) in log.queries.iter().zip(per_query) {
        skipped_round_pairs.extend(skipped);
        match res {
            Some(r) => queries.push(r),
            None => {
                log::warn!("query `{q}` has no usable round pair; excluded");
                excluded.push(q.clone());
            }
        }
    }
    if queries.is_empty() {
        return Err(invalid("no query has a usable round pair"));
    }
    let grand_means = mean_of(&queries.iter().map(|q| &q.means).collect::<Vec<_>>());
    Ok(RobustnessReport { queries, grand_means, excluded_queries: excluded, skipped_round_pairs })
}
