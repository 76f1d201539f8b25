//! Pointwise and pairwise robustness and stability of ranking functions.
//!
//! For a linear ranker `f(d) = w·d + b` the minimal perturbation that lifts
//! `d2` strictly above `d1` does not exist; its infimum is
//! `max(0, w·(d1 − d2)) / ‖w‖` along `w/‖w‖`, and that is what the analytic
//! routines return, flagged `attained = false`. Black-box rankers get an
//! upper bound from a seeded directional search.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::FeatureVector;
use crate::error::{invalid, Error, Result};
use crate::rankers::{LinearRanker, Ranker};
use crate::rng;
use crate::scalar::{norm, Scalar};

/// Smallest perturbation found (or its infimum) for a robustness question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PerturbationResult<T: Scalar> {
    /// `‖v‖`; the search cap when infeasible, infinity when no perturbation can exist.
    pub norm: T,
    /// Unit direction of `v`.
    pub direction: Option<FeatureVector<T>>,
    /// Whether the strict inequality holds at exactly `norm`.
    pub attained: bool,
    pub feasible: bool,
}

impl<T: Scalar> PerturbationResult<T> {
    fn infeasible(norm: T) -> Self {
        Self { norm, direction: None, attained: false, feasible: false }
    }
}

/// Estimated stability level `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StabilityEstimate<T: Scalar> {
    pub k_hat: T,
    pub probe_count: usize,
}

fn check_dim<T: Scalar>(expected: usize, v: &FeatureVector<T>) -> Result<()> {
    if v.dim() != expected {
        return Err(Error::DimensionMismatch { expected, found: v.dim() });
    }
    Ok(())
}

/// Infimum of `‖v‖` such that `f(d2 + v) > f(d1)`, for `f(d1) ≥ f(d2)`.
pub fn pairwise_robustness_linear<T: Scalar>(
    r: &LinearRanker<T>,
    d1: &FeatureVector<T>,
    d2: &FeatureVector<T>,
) -> Result<PerturbationResult<T>> {
    let s1 = r.score(d1)?;
    let s2 = r.score(d2)?;
    if s1 < s2 {
        return Err(invalid("pairwise robustness needs f(d1) >= f(d2)"));
    }
    let wn = r.w.norm();
    if wn == T::zero() {
        return Ok(PerturbationResult::infeasible(T::infinity()));
    }
    let gap = r.w.dot(&d1.sub(d2)?).max(T::zero());
    Ok(PerturbationResult {
        norm: gap / wn,
        direction: Some(r.w.scale(T::one() / wn)),
        attained: false,
        feasible: true,
    })
}

/// Infimum for raising a single document's score: zero whenever `w ≠ 0`.
pub fn pointwise_robustness_linear<T: Scalar>(
    r: &LinearRanker<T>,
    d: &FeatureVector<T>,
) -> Result<PerturbationResult<T>> {
    pairwise_robustness_linear(r, d, d)
}

/// Mean pairwise robustness over ordered pairs `(d1, d2)`, `d1 ≠ d2` by index,
/// with `f(d1) ≥ f(d2)`, under the uniform pair distribution.
pub fn expected_pairwise_robustness<T: Scalar>(r: &LinearRanker<T>, docs: &[FeatureVector<T>]) -> Result<T> {
    expected_pairwise_robustness_weighted(r, docs, |_, _| 1.0)
}

/// As [`expected_pairwise_robustness`] with a caller-supplied (unnormalized)
/// probability `weight(i, j)` for the ordered pair of document indices.
pub fn expected_pairwise_robustness_weighted<T: Scalar>(
    r: &LinearRanker<T>,
    docs: &[FeatureVector<T>],
    weight: impl Fn(usize, usize) -> f64,
) -> Result<T> {
    if docs.len() < 2 {
        return Err(invalid("expected pairwise robustness needs at least two documents"));
    }
    if r.w.norm() == T::zero() {
        return Err(invalid("‖w‖ = 0: no perturbation changes any score"));
    }
    let scores = docs.iter().map(|d| r.score(d)).collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut mass = 0.0;
    for i in 0..docs.len() {
        for j in 0..docs.len() {
            if i == j || scores[i] < scores[j] {
                continue;
            }
            let p = weight(i, j);
            if p <= 0.0 {
                continue;
            }
            total += p * pairwise_robustness_linear(r, &docs[i], &docs[j])?.norm.as_f64();
            mass += p;
        }
    }
    if mass == 0.0 {
        return Err(invalid("no valid document pair"));
    }
    Ok(T::lit(total / mass))
}

/// What the perturbed document must achieve.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchTarget<T: Scalar> {
    /// `f(d + v) > f(d)`.
    IncreaseOwnScore,
    /// `f(d + v) > f(d1)`.
    Overtake(FeatureVector<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig<T> {
    pub num_directions: usize,
    pub norm_cap: T,
    pub tol: T,
    pub seed: u64,
    /// Evenly spaced feasibility checks along each direction before bisection.
    pub scan_steps: usize,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        Self { num_directions: 64, norm_cap: T::lit(10.0), tol: T::lit(1e-6), seed: 0, scan_steps: 32 }
    }
}

impl<T: Scalar> SearchConfig<T> {
    /// Cap of ten times the diameter of the documents' bounding box.
    pub fn for_documents(docs: &[FeatureVector<T>]) -> Self {
        let mut cfg = Self::default();
        if let Some(first) = docs.first() {
            let m = first.dim();
            let mut lo = first.as_slice().to_vec();
            let mut hi = lo.clone();
            for d in docs {
                for k in 0..m.min(d.dim()) {
                    lo[k] = lo[k].min(d[k]);
                    hi[k] = hi[k].max(d[k]);
                }
            }
            let span: Vec<T> = lo.iter().zip(&hi).map(|(&a, &b)| b - a).collect();
            let diameter = norm(&span);
            if diameter > T::zero() {
                cfg.norm_cap = T::lit(10.0) * diameter;
            }
        }
        cfg
    }
}

/// Upper bound on the minimal perturbation of `d2` meeting `target`.
///
/// Tries the ranker's gradient direction (when exposed) and
/// `num_directions` uniform unit directions; along each, scans for the
/// first feasible norm up to `norm_cap` and bisects to `tol`. The returned
/// norm is verified feasible.
pub fn empirical_min_perturbation<T: Scalar, R: Ranker<T> + ?Sized>(
    ranker: &R,
    d2: &FeatureVector<T>,
    target: &SearchTarget<T>,
    search: &SearchConfig<T>,
) -> Result<PerturbationResult<T>> {
    if !(search.norm_cap > T::zero()) {
        return Err(invalid("norm_cap must be positive"));
    }
    if search.num_directions == 0 {
        return Err(invalid("num_directions must be at least 1"));
    }
    if !(search.tol > T::zero()) {
        return Err(invalid("tol must be positive"));
    }
    let m = ranker.dim();
    check_dim(m, d2)?;
    let threshold = match target {
        SearchTarget::IncreaseOwnScore => ranker.score_slice(d2.as_slice()),
        SearchTarget::Overtake(d1) => {
            check_dim(m, d1)?;
            ranker.score_slice(d1.as_slice())
        }
    };

    let mut directions: Vec<Vec<T>> = Vec::with_capacity(search.num_directions + 1);
    if let Some(g) = ranker.gradient(d2.as_slice()) {
        let gn = norm(&g);
        if gn > T::zero() && gn.is_finite() {
            directions.push(g.iter().map(|&x| x / gn).collect());
        }
    }
    let mut rng = rng::seeded(search.seed);
    while directions.len() < search.num_directions + usize::from(!directions.is_empty()) {
        let raw: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rn = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rn > 0.0 {
            directions.push(raw.iter().map(|x| T::lit(x / rn)).collect());
        }
    }

    let base = d2.as_slice();
    let mut point = vec![T::zero(); m];
    let mut feasible_at = |u: &[T], t: T| {
        for k in 0..m {
            point[k] = base[k] + t * u[k];
        }
        ranker.score_slice(&point) > threshold
    };

    let steps = search.scan_steps.max(1);
    let mut best: Option<(T, usize)> = None;
    for (idx, u) in directions.iter().enumerate() {
        let limit = best.map_or(search.norm_cap, |(n, _)| n);
        let mut lo = T::zero();
        let mut hi = None;
        for s in 1..=steps {
            let t = limit * T::lit(s as f64 / steps as f64);
            if feasible_at(u, t) {
                hi = Some(t);
                break;
            }
            lo = t;
        }
        let Some(mut hi) = hi else { continue };
        while hi - lo > search.tol {
            let mid = lo + (hi - lo) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if feasible_at(u, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if best.is_none_or(|(n, _)| hi < n) {
            best = Some((hi, idx));
        }
    }

    Ok(match best {
        Some((n, idx)) => PerturbationResult {
            norm: n,
            direction: Some(FeatureVector::new(directions[idx].clone())?),
            attained: true,
            feasible: true,
        },
        None => PerturbationResult::infeasible(search.norm_cap),
    })
}

/// `max |f(d + v) − f(d)| / ‖v‖` over the probes.
pub fn stability_level_estimate<T: Scalar, R: Ranker<T> + ?Sized>(
    ranker: &R,
    probes: &[(FeatureVector<T>, FeatureVector<T>)],
) -> Result<StabilityEstimate<T>> {
    if probes.is_empty() {
        return Err(Error::Empty("stability probes"));
    }
    let mut k_hat = T::zero();
    for (d, v) in probes {
        let vn = v.norm();
        if !(vn > T::zero()) {
            return Err(invalid("stability probe with zero perturbation"));
        }
        let moved = ranker.score(&d.add(v)?)?;
        let ratio = (moved - ranker.score(d)?).abs() / vn;
        k_hat = k_hat.max(ratio);
    }
    Ok(StabilityEstimate { k_hat, probe_count: probes.len() })
}

/// `|(f(d2 + v2) − f(d1 + v1)) − (f(d2) − f(d1))|`; `v1 = None` means no change to `d1`.
///
/// Evaluated as `|(f(d2 + v2) − f(d2)) − (f(d1 + v1) − f(d1))|`, which is the
/// same quantity and makes the single-change case equal `|f(d2 + v2) − f(d2)|`
/// bit for bit.
pub fn delta_change<T: Scalar, R: Ranker<T> + ?Sized>(
    ranker: &R,
    d1: &FeatureVector<T>,
    d2: &FeatureVector<T>,
    v1: Option<&FeatureVector<T>>,
    v2: &FeatureVector<T>,
) -> Result<T> {
    let m = ranker.dim();
    check_dim(m, d1)?;
    check_dim(m, d2)?;
    check_dim(m, v2)?;
    let moved2 = ranker.score(&d2.add(v2)?)? - ranker.score(d2)?;
    let moved1 = match v1 {
        Some(v1) => {
            check_dim(m, v1)?;
            ranker.score(&d1.add(v1)?)? - ranker.score(d1)?
        }
        None => T::zero(),
    };
    Ok((moved2 - moved1).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Pass/fail of the four linear-ranker properties for one weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub weight_norm: f64,
    pub checks: Vec<PropertyCheck>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub epsilons: Vec<f64>,
    /// Random documents drawn from `[-scale, scale]^m`.
    pub num_docs: usize,
    pub num_probes: usize,
    pub doc_scale: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { epsilons: vec![1e-1, 1e-3, 1e-6], num_docs: 10, num_probes: 200, doc_scale: 1.0, seed: 0 }
    }
}

/// Score comparison used for strictness probes: `a > b` beyond rounding
/// noise of the scores involved.
fn strictly_above<T: Scalar>(a: T, b: T, scale: T) -> bool {
    a - b > T::default_tol() * (T::one() + scale)
}

/// Checks pointwise robustness vanishing (P1), pairwise ≥ pointwise (P2),
/// the `d1 = −w, d2 = −2w` witness (P3) and the `d1 = 2w, d2 = w` witness
/// against sampled stability levels (P4).
pub fn verify_linear_properties<T: Scalar>(r: &LinearRanker<T>, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let names = ["P1", "P2", "P3", "P4"];
    let wn = r.w.norm();
    let m = r.w.dim();
    if wn == T::zero() || m == 0 {
        return Ok(VerificationReport {
            weight_norm: 0.0,
            checks: names
                .iter()
                .map(|n| PropertyCheck {
                    name: n.to_string(),
                    status: CheckStatus::NotApplicable,
                    detail: "weight vector is zero".into(),
                })
                .collect(),
        });
    }

    let mut g = rng::seeded(cfg.seed);
    let mut random_vec = |scale: f64| -> FeatureVector<T> {
        let raw: Vec<T> = (0..m)
            .map(|_| {
                let u: f64 = rand::Rng::random_range(&mut g, -1.0..1.0);
                T::lit(u * scale)
            })
            .collect();
        FeatureVector::new(raw).expect("finite")
    };
    let docs: Vec<FeatureVector<T>> = (0..cfg.num_docs.max(2)).map(|_| random_vec(cfg.doc_scale)).collect();
    let mut checks = Vec::with_capacity(4);
    let status = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };

    // P1: the single-coordinate construction increases the score at norm ε.
    let (i, wi) = r
        .w
        .as_slice()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, &w)| (i, w))
        .expect("non-empty");
    let mut p1_ok = true;
    let mut worst_eps_ratio = 0.0f64;
    for &eps in &cfg.epsilons {
        let mut v = vec![T::zero(); m];
        v[i] = if wi > T::zero() { T::lit(eps) } else { T::lit(-eps) };
        let v = FeatureVector::new(v)?;
        for d in &docs {
            let moved = r.score(&d.add(&v)?)?;
            p1_ok &= moved > r.score(d)?;
        }
        let found = empirical_min_perturbation(
            r,
            &docs[0],
            &SearchTarget::IncreaseOwnScore,
            &SearchConfig { tol: T::lit(eps), num_directions: 1, seed: cfg.seed, ..SearchConfig::default() },
        )?;
        p1_ok &= found.feasible && found.norm <= T::lit(eps);
        worst_eps_ratio = worst_eps_ratio.max(found.norm.as_f64() / eps);
    }
    checks.push(PropertyCheck {
        name: "P1".into(),
        status: status(p1_ok),
        detail: format!("coordinate {i}; worst found-norm / epsilon = {worst_eps_ratio:.3}"),
    });

    // P2: expected pairwise ≥ expected pointwise (the latter is 0 for linear f).
    let pair = expected_pairwise_robustness(r, &docs)?;
    let point: T = docs
        .iter()
        .map(|d| pointwise_robustness_linear(r, d).map(|p| p.norm))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<T>()
        / T::lit(docs.len() as f64);
    checks.push(PropertyCheck {
        name: "P2".into(),
        status: status(pair >= point),
        detail: format!("pairwise {pair} vs pointwise {point}"),
    });

    // P3: infimum equals ‖d1 − d2‖ and the probe at the infimum does not overtake;
    // for random pairs the infimum never exceeds the distance.
    let d1 = r.w.scale(T::lit(-1.0));
    let d2 = r.w.scale(T::lit(-2.0));
    let res = pairwise_robustness_linear(r, &d1, &d2)?;
    let dist = d1.distance(&d2)?;
    let tol = T::default_tol() * (T::one() + dist);
    let u = res.direction.clone().expect("w ≠ 0");
    let probe = d2.add(&u.scale(res.norm))?;
    let s1 = r.score(&d1)?;
    let overtakes_at_inf = strictly_above(r.score(&probe)?, s1, s1.abs());
    let mut upper_ok = true;
    for a in &docs {
        for b in &docs {
            if a == b || r.score(a)? < r.score(b)? {
                continue;
            }
            let inf = pairwise_robustness_linear(r, a, b)?.norm;
            upper_ok &= inf <= a.distance(b)? * (T::one() + T::default_tol());
        }
    }
    let p3_ok = (res.norm - dist).abs() <= tol && !res.attained && !overtakes_at_inf && upper_ok;
    checks.push(PropertyCheck {
        name: "P3".into(),
        status: status(p3_ok),
        detail: format!("infimum {} vs distance {dist}; overtakes at infimum: {overtakes_at_inf}", res.norm),
    });

    // P4: with d1 = 2w, d2 = w the infimum is ‖w‖, at least every sampled stability level.
    let d1 = r.w.scale(T::lit(2.0));
    let res = pairwise_robustness_linear(r, &d1, &r.w)?;
    let probes: Vec<_> = (0..cfg.num_probes.max(1)).map(|_| (random_vec(cfg.doc_scale), random_vec(1.0))).collect();
    let k_hat = stability_level_estimate(r, &probes)?.k_hat;
    let tol = T::default_tol() * (T::one() + wn);
    let p4_ok = (res.norm - wn).abs() <= tol && res.norm + tol >= k_hat;
    checks.push(PropertyCheck {
        name: "P4".into(),
        status: status(p4_ok),
        detail: format!("infimum {} vs ‖w‖ {wn}; sampled stability level {k_hat}", res.norm),
    });

    Ok(VerificationReport { weight_norm: wn.as_f64(), checks })
}
