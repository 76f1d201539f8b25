use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::PreferencePair;
use crate::domain::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::{dot, Scalar};

use super::Ranker;

/// `f(d) = w·d + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearRanker<T: Scalar> {
    pub w: FeatureVector<T>,
    pub b: T,
}

impl<T: Scalar> LinearRanker<T> {
    pub fn new(w: FeatureVector<T>, b: T) -> Self {
        Self { w, b }
    }

    /// Same direction, weights multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { w: self.w.scale(factor), b: self.b * factor }
    }
}

impl<T: Scalar> Ranker<T> for LinearRanker<T> {
    fn dim(&self) -> usize {
        self.w.dim()
    }

    fn score_slice(&self, x: &[T]) -> T {
        dot(self.w.as_slice(), x) + self.b
    }

    fn gradient(&self, _x: &[T]) -> Option<Vec<T>> {
        Some(self.w.as_slice().to_vec())
    }
}

/// Settings of the pairwise hinge-loss trainer.
///
/// The objective is `½‖w‖² + c·Σ max(0, 1 − l·w·(winner − loser))`, minimized
/// as its equivalent `λ/2‖w‖² + mean hinge` with `λ = 1/(n·c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSvmConfig {
    pub c: f64,
    pub epochs: usize,
    /// Pairs per subgradient step; `None` uses every pair (deterministic full batch).
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl RankSvmConfig {
    pub fn with_c(c: f64) -> Self {
        Self { c, ..Self::default() }
    }
}

impl Default for RankSvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 300, batch_size: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct RankSvmFit<T: Scalar> {
    pub ranker: LinearRanker<T>,
    pub lambda: f64,
    pub num_pairs: usize,
    /// Best objective seen so far, recorded at the end of every epoch.
    pub objective_history: Vec<f64>,
}

/// `½‖w‖² + c·Σ hinge` over `pairs`.
pub fn ranksvm_objective<T: Scalar>(w: &[T], pairs: &[PreferencePair<T>], c: f64) -> f64 {
    let diffs = pair_diffs(pairs);
    objective(w, &diffs, c)
}

fn pair_diffs<T: Scalar>(pairs: &[PreferencePair<T>]) -> Vec<Vec<T>> {
    pairs
        .iter()
        .map(|p| {
            let l = T::lit(p.label as f64);
            p.winner.as_slice().iter().zip(p.loser.as_slice()).map(|(&a, &b)| l * (a - b)).collect()
        })
        .collect()
}

fn objective<T: Scalar>(w: &[T], diffs: &[Vec<T>], c: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
    let hinge: f64 = diffs.iter().map(|z| (1.0 - dot(w, z).as_f64()).max(0.0)).sum();
    reg + c * hinge
}

/// Trains a linear pairwise ranker; see [`fit_ranksvm`].
pub fn train_ranksvm<T: Scalar>(pairs: &[PreferencePair<T>], cfg: &RankSvmConfig) -> Result<LinearRanker<T>> {
    Ok(fit_ranksvm(pairs, cfg)?.ranker)
}

/// Projected stochastic subgradient descent (Pegasos) on the pairwise hinge
/// objective, step `1/(λt)`, projection onto the ball of radius `1/√λ`.
///
/// The returned weights are the best of the iterates and their suffix average
/// as measured on the full objective at each epoch end, starting from `w = 0`.
pub fn fit_ranksvm<T: Scalar>(pairs: &[PreferencePair<T>], cfg: &RankSvmConfig) -> Result<RankSvmFit<T>> {
    if pairs.is_empty() {
        return Err(Error::Empty("preference pairs"));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(invalid(format!("c must be positive and finite, got {}", cfg.c)));
    }
    let m = pairs[0].winner.dim();
    for p in pairs {
        if p.winner.dim() != m || p.loser.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, found: p.winner.dim().max(p.loser.dim()) });
        }
        if p.label != 1 && p.label != -1 {
            return Err(invalid(format!("pair label must be ±1, got {}", p.label)));
        }
    }
    let diffs = pair_diffs(pairs);
    if diffs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pair features"));
    }

    let n = pairs.len();
    let lambda = 1.0 / (n as f64 * cfg.c);
    let radius = 1.0 / lambda.sqrt();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = cfg.epochs.max(1) * steps_per_epoch;
    let avg_start = total_steps / 2;

    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0f64; m];
    let mut avg = vec![0.0f64; m];
    let mut avg_count = 0usize;
    let mut grad = vec![0.0f64; m];
    let diffs64: Vec<Vec<f64>> = diffs.iter().map(|z| z.iter().map(|v| v.as_f64()).collect()).collect();

    let mut best_w = w.clone();
    let mut best_obj = objective64(&w, &diffs64, cfg.c);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut t = 0usize;

    for _ in 0..cfg.epochs.max(1) {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &p in chunk {
                let z = &diffs64[p];
                if dot64(&w, z) < 1.0 {
                    grad.iter_mut().zip(z).for_each(|(g, &zi)| *g += zi);
                }
            }
            let shrink = 1.0 - eta * lambda;
            let step = eta / chunk.len() as f64;
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi = shrink * *wi + step * gi;
            }
            let nw = dot64(&w, &w).sqrt();
            if nw > radius {
                w.iter_mut().for_each(|v| *v *= radius / nw);
            }
            if t > avg_start {
                avg_count += 1;
                let k = avg_count as f64;
                avg.iter_mut().zip(&w).for_each(|(a, &x)| *a += (x - *a) / k);
            }
        }
        for cand in [&w, &avg] {
            if cand.iter().all(|v| *v == 0.0) {
                continue;
            }
            let obj = objective64(cand, &diffs64, cfg.c);
            if obj < best_obj {
                best_obj = obj;
                best_w.clone_from(cand);
            }
        }
        history.push(best_obj);
    }

    let w = FeatureVector::new(best_w.iter().map(|&v| T::lit(v)).collect())?;
    Ok(RankSvmFit { ranker: LinearRanker::new(w, T::zero()), lambda, num_pairs: n, objective_history: history })
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective64(w: &[f64], diffs: &[Vec<f64>], c: f64) -> f64 {
    0.5 * dot64(w, w) + c * diffs.iter().map(|z| (1.0 - dot64(w, z)).max(0.0)).sum::<f64>()
}
