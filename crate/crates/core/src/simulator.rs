//! Synthetic ranking competitions at the feature-vector level.
//!
//! Each query has a hidden ideal point. Authors start uniformly inside the
//! feature bounds; in every later round each author other than the previous
//! winner moves part of the way toward the winner and picks up Gaussian noise.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GradedDataset, GradedDoc};
use crate::domain::{rank, CompetitionLog, DocumentSnapshot, FeatureVector};
use crate::error::{invalid, Error, Result};
use crate::rankers::{LinearRanker, Ranker};
use crate::rng::{derive_seed, seeded, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Grades from the normalized distance to a query's ideal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelevanceModel {
    /// Ideal points are drawn uniformly in `[ideal_lo, ideal_hi]` per
    /// normalized coordinate.
    pub ideal_lo: f64,
    pub ideal_hi: f64,
    /// Distance cut-offs for grades 3, 2 and 1; anything farther is 0.
    /// Distances are RMS over normalized coordinates, so they lie in [0, 1].
    pub cutoffs: [f64; 3],
}

impl Default for RelevanceModel {
    fn default() -> Self {
        Self { ideal_lo: 0.7, ideal_hi: 1.0, cutoffs: [0.15, 0.3, 0.45] }
    }
}

impl RelevanceModel {
    pub fn grade(&self, bounds: &[Bounds], ideal: &[f64], x: &[f64]) -> u8 {
        let sq: f64 = bounds
            .iter()
            .zip(ideal)
            .zip(x)
            .map(|((b, p), v)| ((v - b.lo) / b.width() - p).powi(2))
            .sum();
        let dist = (sq / bounds.len() as f64).sqrt();
        match self.cutoffs.iter().position(|c| dist < *c) {
            Some(i) => 3 - i as u8,
            None => 0,
        }
    }

    fn draw_ideal(&self, m: usize, rng: &mut Rng) -> Vec<f64> {
        (0..m).map(|_| rng.random_range(self.ideal_lo..=self.ideal_hi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_queries: usize,
    pub rounds: u32,
    pub authors_per_query: usize,
    /// Per-dimension bounds; the feature dimension is `bounds.len()`.
    pub bounds: Vec<Bounds>,
    /// α in [0, 1]: fraction of the way toward the previous winner.
    pub mimic_rate: f64,
    /// σ ≥ 0 of the isotropic Gaussian step noise.
    pub noise_scale: f64,
    pub relevance: RelevanceModel,
    pub seed: u64,
}

impl Default for SimConfig {
    /// Two unit-range features and two narrow ones, mimicking unnormalized
    /// retrieval features whose scales differ by an order of magnitude.
    fn default() -> Self {
        Self {
            num_queries: 31,
            rounds: 8,
            authors_per_query: 5,
            bounds: vec![Bounds::new(0.0, 1.0), Bounds::new(0.0, 1.0), Bounds::new(0.0, 0.1), Bounds::new(0.0, 0.1)],
            mimic_rate: 0.3,
            noise_scale: 0.01,
            relevance: RelevanceModel::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(invalid("feature bounds must not be empty"));
        }
        if let Some(b) = self.bounds.iter().find(|b| !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi)) {
            return Err(invalid(format!("bounds need finite lo < hi, got [{}, {}]", b.lo, b.hi)));
        }
        if !(0.0..=1.0).contains(&self.mimic_rate) {
            return Err(invalid(format!("mimic rate must lie in [0, 1], got {}", self.mimic_rate)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(invalid(format!("noise scale must be finite and >= 0, got {}", self.noise_scale)));
        }
        if self.num_queries == 0 || self.rounds == 0 || self.authors_per_query == 0 {
            return Err(invalid("queries, rounds and authors must all be positive"));
        }
        let r = &self.relevance;
        if !(0.0 <= r.ideal_lo && r.ideal_lo <= r.ideal_hi && r.ideal_hi <= 1.0) {
            return Err(invalid("ideal point range must satisfy 0 <= lo <= hi <= 1"));
        }
        Ok(())
    }

    /// Per-query ideal points in normalized coordinates.
    pub fn ideal_points(&self) -> Vec<Vec<f64>> {
        (0..self.num_queries).map(|q| ideal_point(self, self.seed, q)).collect()
    }

    /// Bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|b| b.width().powi(2)).sum::<f64>().sqrt()
    }
}

/// Linear ranker weighting every feature by the inverse of its width, so
/// each contributes equally over its range.
pub fn balanced_ranker<T: Scalar>(cfg: &SimConfig) -> LinearRanker<T> {
    let w: Vec<f64> = cfg.bounds.iter().map(|b| 1.0 / b.width()).collect();
    LinearRanker::new(FeatureVector::from_f64(&w), T::zero())
}

fn ideal_point(cfg: &SimConfig, seed: u64, q: usize) -> Vec<f64> {
    let mut rng = seeded(derive_seed(derive_seed(seed, q as u64), 0));
    cfg.relevance.draw_ideal(cfg.dim(), &mut rng)
}

pub fn query_id(q: usize) -> String {
    format!("q{:02}", q + 1)
}

pub fn author_id(a: usize) -> String {
    format!("a{:02}", a + 1)
}

pub fn doc_id(query: &str, author: &str, round: u32) -> String {
    format!("{query}-{author}-r{round:02}")
}

fn clamp_into(bounds: &[Bounds], x: &mut [f64]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = v.clamp(b.lo, b.hi);
    }
}

fn simulate_query<T: Scalar, R: Ranker<T>>(cfg: &SimConfig, ranker: &R, q: usize) -> Result<Vec<DocumentSnapshot<T>>> {
    let qid = query_id(q);
    let ideal = ideal_point(cfg, cfg.seed, q);
    let mut rng = seeded(derive_seed(derive_seed(cfg.seed, q as u64), 1));
    let authors: Vec<String> = (0..cfg.authors_per_query).map(author_id).collect();

    let mut current: Vec<Vec<f64>> = (0..cfg.authors_per_query)
        .map(|_| cfg.bounds.iter().map(|b| rng.random_range(b.lo..=b.hi)).collect())
        .collect();
    let mut out = Vec::with_capacity(cfg.authors_per_query * cfg.rounds as usize);

    for round in 1..=cfg.rounds {
        let snaps: Vec<DocumentSnapshot<T>> = authors
            .iter()
            .zip(&current)
            .map(|(a, x)| DocumentSnapshot {
                doc_id: doc_id(&qid, a, round),
                author_id: a.clone(),
                query_id: qid.clone(),
                round,
                features: FeatureVector::from_f64(x),
                relevance_grade: cfg.relevance.grade(&cfg.bounds, &ideal, x),
            })
            .collect();
        if round < cfg.rounds {
            let ranking = rank(ranker, &snaps)?;
            let top = ranking.top().expect("at least one author");
            let winner = snaps.iter().position(|s| s.doc_id == top).expect("ranked doc exists");
            // Every author updates from the same previous-round state.
            let w = current[winner].clone();
            for (i, x) in current.iter_mut().enumerate() {
                if i == winner {
                    continue;
                }
                for (v, wv) in x.iter_mut().zip(&w) {
                    let eps: f64 = rng.sample(StandardNormal);
                    *v = (1.0 - cfg.mimic_rate) * *v + cfg.mimic_rate * wv + cfg.noise_scale * eps;
                }
                clamp_into(&cfg.bounds, x);
            }
        }
        out.extend(snaps);
    }
    Ok(out)
}

/// Runs a competition driven by `ranker`. Queries simulate in parallel with
/// derived seeds, so the log is a pure function of `cfg`.
pub fn simulate_competition<T, R>(cfg: &SimConfig, ranker: &R) -> Result<CompetitionLog<T>>
where
    T: Scalar,
    R: Ranker<T>,
{
    cfg.validate()?;
    if ranker.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch { expected: cfg.dim(), found: ranker.dim() });
    }
    let per_query: Vec<Vec<DocumentSnapshot<T>>> =
        (0..cfg.num_queries).into_par_iter().map(|q| simulate_query(cfg, ranker, q)).collect::<Result<_>>()?;
    CompetitionLog::new(per_query.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetConfig {
    pub num_queries: usize,
    pub docs_per_query: usize,
    /// Standard deviation of documents around the ideal point, in
    /// normalized coordinates.
    pub spread: f64,
    pub seed: u64,
}

impl Default for TrainingSetConfig {
    fn default() -> Self {
        Self { num_queries: 40, docs_per_query: 12, spread: 0.25, seed: 1 }
    }
}

/// Graded training queries sharing the competition's relevance model but with
/// their own ideal points.
pub fn synthetic_training_set<T: Scalar>(sim: &SimConfig, cfg: &TrainingSetConfig) -> Result<GradedDataset<T>> {
    sim.validate()?;
    if cfg.num_queries == 0 || cfg.docs_per_query < 2 {
        return Err(invalid("training set needs at least one query with two documents"));
    }
    if !(cfg.spread > 0.0 && cfg.spread.is_finite()) {
        return Err(invalid(format!("spread must be positive, got {}", cfg.spread)));
    }
    let mut docs = Vec::with_capacity(cfg.num_queries * cfg.docs_per_query);
    for q in 0..cfg.num_queries {
        let ideal = ideal_point(sim, cfg.seed, q);
        let mut rng = seeded(derive_seed(derive_seed(cfg.seed, q as u64), 2));
        let qid = format!("t{:03}", q + 1);
        for i in 0..cfg.docs_per_query {
            let x: Vec<f64> = sim
                .bounds
                .iter()
                .zip(&ideal)
                .map(|(b, p)| {
                    let z: f64 = rng.sample(StandardNormal);
                    b.lo + (p + cfg.spread * z).clamp(0.0, 1.0) * b.width()
                })
                .collect();
            docs.push(GradedDoc {
                query_id: qid.clone(),
                doc_id: format!("{qid}-d{:03}", i + 1),
                grade: sim.relevance.grade(&sim.bounds, &ideal, &x),
                features: FeatureVector::from_f64(&x),
            });
        }
    }
    GradedDataset::new(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{evaluate_ranking_robustness, Measure, MeasureConfig};

    fn driver() -> LinearRanker<f64> {
        LinearRanker::new(FeatureVector::from_f64(&[1.0, 1.0, 10.0, 10.0]), 0.0)
    }

    fn small(alpha: f64, sigma: f64) -> SimConfig {
        SimConfig { num_queries: 4, rounds: 4, mimic_rate: alpha, noise_scale: sigma, ..Default::default() }
    }

    #[test]
    fn static_competition_has_no_rank_change() {
        let log = simulate_competition(&small(0.0, 0.0), &driver()).unwrap();
        for q in &log.queries {
            for r in 2..=log.rounds {
                let a = log.round_snapshots(q, r - 1);
                let b = log.round_snapshots(q, r);
                for (x, y) in a.iter().zip(&b) {
                    assert_eq!(x.features, y.features);
                }
            }
        }
        let rep = evaluate_ranking_robustness(&driver(), &log, &MeasureConfig::default()).unwrap();
        assert_eq!(rep.grand_mean(Measure::Kt), 0.0);
        assert_eq!(rep.grand_mean(Measure::Rbo), 1.0);
    }

    #[test]
    fn full_mimicry_copies_previous_winner() {
        let cfg = small(1.0, 0.0);
        let log = simulate_competition(&cfg, &driver()).unwrap();
        for q in &log.queries {
            for r in 2..=log.rounds {
                let prev = log.round_snapshots(q, r - 1);
                let ranking = rank(&driver(), &prev).unwrap();
                let top = prev.iter().find(|s| s.doc_id == ranking.top().unwrap()).unwrap();
                for s in log.round_snapshots(q, r) {
                    assert_eq!(s.features, top.features);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SimConfig { seed: 9, ..Default::default() };
        let a: CompetitionLog<f64> = simulate_competition(&cfg, &driver()).unwrap();
        let b: CompetitionLog<f64> = simulate_competition(&cfg, &driver()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.queries.len(), 31);
        assert_eq!(a.rounds, 8);
        assert_eq!(a.snapshots.len(), 31 * 8 * 5);
        for s in &a.snapshots {
            for (v, bd) in s.features.as_slice().iter().zip(&cfg.bounds) {
                assert!(bd.lo <= *v && *v <= bd.hi);
            }
        }
    }

    #[test]
    fn noiseless_steps_are_bounded() {
        let cfg = SimConfig { noise_scale: 0.0, mimic_rate: 0.4, ..small(0.4, 0.0) };
        let log: CompetitionLog<f64> = simulate_competition(&cfg, &driver()).unwrap();
        for q in &log.queries {
            for r in 2..=log.rounds {
                for (x, y) in log.round_snapshots(q, r - 1).iter().zip(log.round_snapshots(q, r)) {
                    assert!(x.features.distance(&y.features).unwrap() <= 0.4 * cfg.diameter() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(simulate_competition::<f64, _>(&small(1.5, 0.0), &driver()).is_err());
        assert!(simulate_competition::<f64, _>(&small(0.5, -1.0), &driver()).is_err());
        let wrong_dim = LinearRanker::new(FeatureVector::from_f64(&[1.0]), 0.0);
        assert!(simulate_competition::<f64, _>(&small(0.5, 0.0), &wrong_dim).is_err());
    }

    #[test]
    fn training_set_has_graded_pairs() {
        let ds: GradedDataset<f64> = synthetic_training_set(&SimConfig::default(), &TrainingSetConfig::default()).unwrap();
        assert_eq!(ds.len(), 40 * 12);
        assert!(ds.preference_pairs().len() > 100);
        assert_eq!(ds, synthetic_training_set(&SimConfig::default(), &TrainingSetConfig::default()).unwrap());
    }
}
