//! Paired comparison of two rankers on the same competition log.

use serde::{Deserialize, Serialize};

use crate::domain::CompetitionLog;
use crate::error::{invalid, Result};
use crate::measures::{evaluate_ranking_robustness, Measure, MeasureConfig};
use crate::rankers::Ranker;
use crate::scalar::Scalar;
use crate::stats::{bonferroni_adjust, bonferroni_threshold, paired_t_test};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub measure: Measure,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub p_value: f64,
    pub degenerate: bool,
    /// Significant after the Bonferroni correction over all measures.
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub threshold: f64,
    pub queries: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Two-tailed paired t-tests over per-query means of every measure, with a
/// Bonferroni correction across the nine measures.
pub fn compare_rankers<T, A, B>(a: &A, b: &B, log: &CompetitionLog<T>, cfg: &MeasureConfig, alpha: f64) -> Result<Comparison>
where
    T: Scalar,
    A: Ranker<T> + ?Sized,
    B: Ranker<T> + ?Sized,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let ra = evaluate_ranking_robustness(a, log, cfg)?;
    let rb = evaluate_ranking_robustness(b, log, cfg)?;
    // Both reports come from the same log, so they cover the same queries in the same order.
    let queries = ra.queries.len();
    let mut rows = Vec::with_capacity(Measure::ALL.len());
    for m in Measure::ALL {
        let (xa, xb) = (ra.query_means(m), rb.query_means(m));
        let test = paired_t_test(&xa, &xb)?;
        rows.push(ComparisonRow {
            measure: m,
            mean_a: ra.grand_mean(m),
            mean_b: rb.grand_mean(m),
            t: test.t,
            p_value: test.p_value,
            degenerate: test.degenerate,
            reject: false,
        });
    }
    let p: Vec<f64> = rows.iter().map(|r| r.p_value).collect();
    for (row, reject) in rows.iter_mut().zip(bonferroni_adjust(&p, alpha)) {
        row.reject = reject;
    }
    Ok(Comparison { alpha, threshold: bonferroni_threshold(p.len(), alpha), queries, rows })
}
