//! Correlation coefficients with significance, paired tests and retrieval
//! effectiveness metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{invalid, Error, Result};

/// Largest sample for which exact permutation p-values are computed by
/// enumeration when [`PValueMethod::Auto`] is selected.
pub const AUTO_EXACT_MAX_N: usize = 10;
/// Hard limit for explicit permutation enumeration (12! ≈ 4.8e8).
pub const PERMUTATION_MAX_N: usize = 12;
/// Exact Kendall null distribution for tie-free data via inversion counts.
const KENDALL_EXACT_MAX_N: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Spearman,
    Pearson,
    Kendall,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 3] =
        [CorrelationMethod::Spearman, CorrelationMethod::Pearson, CorrelationMethod::Kendall];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Kendall => "kendall",
        }
    }
}

/// How p-values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact permutation distribution for small samples, asymptotic otherwise.
    #[default]
    Auto,
    /// Student t (Pearson, Spearman, paired t) or normal (Kendall).
    Asymptotic,
    /// Exact enumeration of the permutation (or sign-flip) distribution.
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub method: CorrelationMethod,
    /// `None` when either series has zero variance.
    pub coefficient: Option<f64>,
    pub p_value: Option<f64>,
    pub significant_95: bool,
}

fn check_series(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < min_len {
        return Err(invalid(format!("need at least {min_len} observations, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let (xc, yc) = (centered(x), centered(y));
    let sxx: f64 = xc.iter().map(|v| v * v).sum();
    let syy: f64 = yc.iter().map(|v| v * v).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mid-ranks (1-based), ties share the average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `S = concordant − discordant` and the tie-corrected τ-b denominator.
fn kendall_parts(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mut s = 0i64;
    let (mut tx, mut ty) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = (x[i] - x[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            let b = (y[i] - y[j]).partial_cmp(&0.0).map_or(0, |o| o as i64);
            s += a * b;
            tx += i64::from(a == 0);
            ty += i64::from(b == 0);
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tx) * (n0 - ty)) as f64).sqrt();
    (s as f64, denom)
}

fn tie_groups(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        if j > i {
            out.push((j - i + 1) as f64);
        }
        i = j + 1;
    }
    out
}

/// Null variance of Kendall's S with tie corrections.
fn kendall_s_variance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (tx, ty) = (tie_groups(x), tie_groups(y));
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt: f64 = tx.iter().map(|t| t * (t - 1.0) * (2.0 * t + 5.0)).sum();
    let vu: f64 = ty.iter().map(|u| u * (u - 1.0) * (2.0 * u + 5.0)).sum();
    let t2: f64 = tx.iter().map(|t| t * (t - 1.0)).sum();
    let u2: f64 = ty.iter().map(|u| u * (u - 1.0)).sum();
    let t3: f64 = tx.iter().map(|t| t * (t - 1.0) * (t - 2.0)).sum();
    let u3: f64 = ty.iter().map(|u| u * (u - 1.0) * (u - 2.0)).sum();
    (v0 - vt - vu) / 18.0 + t3 * u3 / (9.0 * n * (n - 1.0) * (n - 2.0)) + t2 * u2 / (2.0 * n * (n - 1.0))
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn normal_two_sided(z: f64) -> f64 {
    let dist = Normal::standard();
    (2.0 * dist.sf(z.abs())).min(1.0)
}

fn r_t_pvalue(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// Calls `visit` with every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn at_least(stat: f64, observed: f64) -> bool {
    stat >= observed - 1e-9 * observed.abs().max(1e-12)
}

/// Two-sided permutation p-value of `|Σ a_i · b_π(i)|` for centered inputs.
fn permutation_pvalue_dot(a: &[f64], b: &[f64]) -> f64 {
    let observed: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    for_each_permutation(a.len(), |p| {
        let s: f64 = p.iter().enumerate().map(|(i, &j)| a[i] * b[j]).sum();
        total += 1;
        hits += u64::from(at_least(s.abs(), observed));
    });
    hits as f64 / total as f64
}

/// `counts[k]` = number of permutations of `n` items with `k` inversions.
fn mahonian(n: usize) -> Vec<f64> {
    let mut counts = vec![1.0];
    for m in 2..=n {
        let max = m * (m - 1) / 2;
        let mut next = vec![0.0; max + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            let lo = k.saturating_sub(m - 1);
            *slot = (lo..=k.min(counts.len() - 1)).map(|j| counts[j]).sum();
        }
        counts = next;
    }
    counts
}

fn kendall_exact_pvalue(x: &[f64], y: &[f64], s_obs: f64) -> f64 {
    let n = x.len();
    let ties = tie_groups(x).len() + tie_groups(y).len() > 0;
    if !ties {
        let counts = mahonian(n);
        let pairs = (n * (n - 1) / 2) as f64;
        let total: f64 = counts.iter().sum();
        let hit: f64 = counts
            .iter()
            .enumerate()
            .filter(|(inv, _)| at_least((pairs - 2.0 * *inv as f64).abs(), s_obs.abs()))
            .map(|(_, c)| c)
            .sum();
        return (hit / total).min(1.0);
    }
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut yp = vec![0.0; n];
    for_each_permutation(n, |p| {
        for (i, &j) in p.iter().enumerate() {
            yp[i] = y[j];
        }
        total += 1;
        hits += u64::from(at_least(kendall_parts(x, &yp).0.abs(), s_obs.abs()));
    });
    hits as f64 / total as f64
}

fn use_exact(method: PValueMethod, n: usize) -> Result<bool> {
    match method {
        PValueMethod::Asymptotic => Ok(false),
        PValueMethod::Auto => Ok(n <= AUTO_EXACT_MAX_N),
        PValueMethod::Permutation if n <= PERMUTATION_MAX_N => Ok(true),
        PValueMethod::Permutation => {
            Err(invalid(format!("permutation p-values are limited to n <= {PERMUTATION_MAX_N}, got {n}")))
        }
    }
}

/// Correlation with the default p-value method.
pub fn correlate(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<CorrelationResult> {
    correlate_with(x, y, method, PValueMethod::Auto)
}

/// Pearson r with a t test on n − 2 df; Spearman as Pearson on mid-ranks;
/// Kendall τ-b with a tie-corrected normal approximation. Exact permutation
/// p-values when requested, or under `Auto` for small samples.
pub fn correlate_with(
    x: &[f64],
    y: &[f64],
    method: CorrelationMethod,
    pmethod: PValueMethod,
) -> Result<CorrelationResult> {
    check_series(x, y, 3)?;
    let n = x.len();
    let undefined = CorrelationResult { method, coefficient: None, p_value: None, significant_95: false };
    let (coefficient, p) = match method {
        CorrelationMethod::Pearson | CorrelationMethod::Spearman => {
            let (a, b) = if method == CorrelationMethod::Spearman {
                (average_ranks(x), average_ranks(y))
            } else {
                (x.to_vec(), y.to_vec())
            };
            let Some(r) = pearson_r(&a, &b) else { return Ok(undefined) };
            let p = if use_exact(pmethod, n)? {
                permutation_pvalue_dot(&centered(&a), &centered(&b))
            } else {
                r_t_pvalue(r, n)
            };
            (r, p)
        }
        CorrelationMethod::Kendall => {
            let (s, denom) = kendall_parts(x, y);
            if denom == 0.0 {
                return Ok(undefined);
            }
            let tau = (s / denom).clamp(-1.0, 1.0);
            let exact_by_dp = pmethod == PValueMethod::Auto
                && n <= KENDALL_EXACT_MAX_N
                && tie_groups(x).is_empty()
                && tie_groups(y).is_empty();
            let p = if exact_by_dp || use_exact(pmethod, n)? {
                kendall_exact_pvalue(x, y, s)
            } else {
                let var = kendall_s_variance(x, y);
                if var > 0.0 {
                    normal_two_sided(s / var.sqrt())
                } else {
                    1.0
                }
            };
            (tau, p)
        }
    };
    Ok(CorrelationResult { method, coefficient: Some(coefficient), p_value: Some(p), significant_95: p < 0.05 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// Mean difference `a − b` over its standard error.
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    /// All differences zero; `t = 0`, `p = 1` by convention.
    pub degenerate: bool,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    paired_t_test_with(a, b, PValueMethod::Auto)
}

/// Two-tailed paired t test; the exact mode uses the sign-flip distribution
/// of the mean difference.
pub fn paired_t_test_with(a: &[f64], b: &[f64], pmethod: PValueMethod) -> Result<PairedTTest> {
    check_series(a, b, 2)?;
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1;
    if d.iter().all(|v| *v == 0.0) {
        return Ok(PairedTTest { t: 0.0, p_value: 1.0, df, degenerate: true });
    }
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / df as f64;
    let se = (var / n as f64).sqrt();
    let t = if se == 0.0 { m.signum() * f64::INFINITY } else { m / se };
    let exact = match pmethod {
        PValueMethod::Asymptotic => false,
        PValueMethod::Auto => n <= AUTO_EXACT_MAX_N,
        PValueMethod::Permutation if n <= 24 => true,
        PValueMethod::Permutation => return Err(invalid("sign-flip enumeration is limited to n <= 24")),
    };
    let p_value = if exact {
        // |t| is increasing in |Σd| because Σd² is invariant under sign flips
        let observed = d.iter().sum::<f64>().abs();
        let total = 1u64 << n;
        let hits = (0..total)
            .filter(|mask| {
                let s: f64 = d.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).sum();
                at_least(s.abs(), observed)
            })
            .count();
        hits as f64 / total as f64
    } else {
        t_two_sided(t, df as f64)
    };
    Ok(PairedTTest { t, p_value, df, degenerate: false })
}

/// Per-test threshold `alpha / k`.
pub fn bonferroni_threshold(k: usize, alpha: f64) -> f64 {
    alpha / k as f64
}

/// `reject_i ⇔ p_i < alpha / k`.
pub fn bonferroni_adjust(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let threshold = bonferroni_threshold(p_values.len(), alpha);
    p_values.iter().map(|&p| p < threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragePrecision {
    pub value: f64,
    /// The query has no relevant document; `value` is 0 by convention.
    pub no_relevant: bool,
}

/// Mean over relevant documents of precision at their ranks, relative to
/// every relevant document in `judgments`.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], judgments: &HashMap<String, bool>) -> Result<AveragePrecision> {
    let total_relevant = judgments.values().filter(|r| **r).count();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        let rel = *judgments
            .get(id.as_ref())
            .ok_or_else(|| invalid(format!("no judgment for document `{}`", id.as_ref())))?;
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if total_relevant == 0 {
        return Ok(AveragePrecision { value: 0.0, no_relevant: true });
    }
    Ok(AveragePrecision { value: sum / total_relevant as f64, no_relevant: false })
}

/// Mean of per-query average precision.
pub fn mean_average_precision<S: AsRef<str>>(runs: &[(Vec<S>, HashMap<String, bool>)]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Empty("queries for MAP"));
    }
    let total = runs.iter().map(|(r, j)| average_precision(r, j).map(|a| a.value)).sum::<Result<f64>>()?;
    Ok(total / runs.len() as f64)
}

/// NDCG@k of grades listed in ranked order: gain `2^g − 1`, discount
/// `log₂(rank + 1)`, normalized by the ideal ordering of the same grades.
pub fn ndcg_at_k(ranked_grades: &[u8], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("NDCG cutoff must be at least 1"));
    }
    let dcg = |g: &[u8]| -> f64 {
        g.iter().take(k).enumerate().map(|(i, &x)| (2f64.powi(x as i32) - 1.0) / ((i + 2) as f64).log2()).sum()
    };
    let mut ideal = ranked_grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(ranked_grades) / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = correlate(&x, &y, CorrelationMethod::Pearson).unwrap();
        assert!((r.coefficient.unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert!((correlate(&x, &y, CorrelationMethod::Spearman).unwrap().coefficient.unwrap() - 1.0).abs() < 1e-12);
        let k = correlate(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], CorrelationMethod::Kendall).unwrap();
        assert_eq!(k.coefficient, Some(-1.0));
    }

    #[test]
    fn zero_variance_is_undefined() {
        let r = correlate(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], CorrelationMethod::Pearson).unwrap();
        assert!(r.coefficient.is_none() && !r.significant_95);
        assert!(correlate(&[1.0, 2.0], &[1.0, 2.0], CorrelationMethod::Pearson).is_err());
    }

    #[test]
    fn pearson_asymptotic_matches_reference() {
        // scipy.stats.pearsonr([1,2,3,4,5,6], [2,1,4,3,7,5]) -> r = 0.7917947, p = 0.0605114
        let r = correlate_with(
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &[2.0, 1.0, 4.0, 3.0, 7.0, 5.0],
            CorrelationMethod::Pearson,
            PValueMethod::Asymptotic,
        )
        .unwrap();
        assert!((r.coefficient.unwrap() - 0.7917946548886297).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 0.06051140336275659).abs() < 1e-9, "{:?}", r.p_value);
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // tau-b for x=[1,2,2,3], y=[1,3,2,2]: S = 2, pairs 6, tx = ty = 1 -> 2/5
        let r = correlate(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0], CorrelationMethod::Kendall).unwrap();
        assert!((r.coefficient.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mahonian_counts() {
        assert_eq!(mahonian(3), vec![1.0, 2.0, 2.0, 1.0]);
        assert_eq!(mahonian(4).iter().sum::<f64>(), 24.0);
    }

    #[test]
    fn paired_t_examples() {
        let a = [1.0, 2.0, 3.0];
        let t = paired_t_test(&a, &a).unwrap();
        assert!(t.degenerate && t.p_value == 1.0);

        let b: Vec<f64> = (0..31).map(|i| (i as f64 * 0.7).sin()).collect();
        let a: Vec<f64> = b.iter().enumerate().map(|(i, v)| v + 10.0 + 0.01 * (i as f64).cos()).collect();
        assert!(paired_t_test(&a, &b).unwrap().p_value < 0.001);

        let x = [1.0, 2.5, 3.0, 4.2];
        let y = [0.5, 2.0, 3.5, 3.0];
        let f = paired_t_test_with(&x, &y, PValueMethod::Asymptotic).unwrap();
        let r = paired_t_test_with(&y, &x, PValueMethod::Asymptotic).unwrap();
        assert_eq!(f.t, -r.t);
        assert_eq!(f.p_value, r.p_value);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_adjust(&[0.049], 0.05), vec![true]);
        assert_eq!(bonferroni_threshold(9, 0.05), 0.05 / 9.0);
        let mut ps = vec![0.001; 9];
        ps[0] = 0.01;
        let rej = bonferroni_adjust(&ps, 0.05);
        assert!(!rej[0] && rej[1..].iter().all(|r| *r));
    }

    #[test]
    fn average_precision_examples() {
        let j = |rel: &[bool]| -> HashMap<String, bool> {
            rel.iter().enumerate().map(|(i, r)| (format!("d{i}"), *r)).collect()
        };
        let ranked: Vec<String> = (0..5).map(|i| format!("d{i}")).collect();
        assert_eq!(average_precision(&ranked, &j(&[true; 5])).unwrap().value, 1.0);
        let one = average_precision(&ranked, &j(&[false, true, false, false, false])).unwrap();
        assert_eq!(one.value, 0.5);
        let none = average_precision(&ranked, &j(&[false; 5])).unwrap();
        assert!(none.no_relevant && none.value == 0.0);
        assert!(average_precision(&["zz"], &j(&[true])).is_err());
        let map = mean_average_precision(&[(ranked.clone(), j(&[true; 5])), (ranked, j(&[false; 5]))]).unwrap();
        assert_eq!(map, 0.5);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[3, 2, 1, 0], 4).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[0, 0, 0], 2).unwrap(), 0.0);
        let v = ndcg_at_k(&[0, 3], 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
        assert!(ndcg_at_k(&[1], 0).is_err());
    }
}
