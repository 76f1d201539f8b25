use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::{GradedDataset, GradedDoc};
use crate::domain::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

use super::Ranker;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    /// Number of resamples, at least 2.
    pub resamples: usize,
    pub seed: u64,
    /// Extra attempts with fresh seeds when training on a resample fails.
    pub max_retries: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 20, seed: 0, max_retries: 3 }
    }
}

/// Resamples whole queries with replacement. Repeated queries get distinct
/// ids so no pair spans two copies.
fn resample_queries<T: Scalar>(dataset: &GradedDataset<T>, seed: u64) -> GradedDataset<T> {
    let groups = dataset.query_groups();
    let mut rng = seeded(seed);
    let mut docs = Vec::with_capacity(dataset.len());
    for copy in 0..groups.len() {
        let g = &groups[rng.random_range(0..groups.len())];
        docs.extend(g.iter().map(|&i| {
            let d = &dataset.docs[i];
            GradedDoc {
                query_id: format!("{}#{copy}", d.query_id),
                doc_id: format!("{}#{copy}", d.doc_id),
                grade: d.grade,
                features: d.features.clone(),
            }
        }));
    }
    GradedDataset { docs }
}

/// Mean over `probes` of the across-resample variance of ranker scores.
///
/// `train` receives a query-level bootstrap resample and a derived seed.
/// Resamples train in parallel; results are combined in resample order, so
/// the value is deterministic for a fixed seed.
pub fn bootstrap_variance<T, R, F>(
    train: F,
    dataset: &GradedDataset<T>,
    probes: &[FeatureVector<T>],
    cfg: &BootstrapConfig,
) -> Result<f64>
where
    T: Scalar,
    R: Ranker<T>,
    F: Fn(&GradedDataset<T>, u64) -> Result<R> + Sync,
{
    if cfg.resamples < 2 {
        return Err(invalid("bootstrap needs at least 2 resamples"));
    }
    if probes.is_empty() {
        return Err(Error::Empty("probe documents"));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("bootstrap dataset"));
    }

    let scores: Vec<Vec<f64>> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut last_err = None;
            for attempt in 0..=cfg.max_retries {
                let seed = derive_seed(derive_seed(cfg.seed, b as u64), attempt as u64);
                let sample = resample_queries(dataset, seed);
                match train(&sample, seed) {
                    Ok(r) => {
                        return probes.iter().map(|p| r.score(p).map(Scalar::as_f64)).collect::<Result<Vec<_>>>();
                    }
                    Err(e) => {
                        log::debug!("bootstrap resample {b}, attempt {attempt} failed: {e}");
                        last_err = Some(e);
                    }
                }
            }
            Err(Error::Training(format!(
                "resample {b} failed after {} attempts: {}",
                cfg.max_retries + 1,
                last_err.map(|e| e.to_string()).unwrap_or_default()
            )))
        })
        .collect::<Result<_>>()?;

    let b = cfg.resamples as f64;
    let mean_var = (0..probes.len())
        .map(|p| {
            let mean = scores.iter().map(|s| s[p]).sum::<f64>() / b;
            scores.iter().map(|s| (s[p] - mean).powi(2)).sum::<f64>() / (b - 1.0)
        })
        .sum::<f64>()
        / probes.len() as f64;
    Ok(mean_var)
}
