//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rank_robustness::io::{quality_feature_score, relevance_grade};
use rank_robustness::measures::{kt_distance, kt_weighted, rbo_ext, evaluate_ranking_robustness, Measure, MeasureConfig, Normalizer};
use rank_robustness::rankers::{
    bootstrap_variance, train_lambdamart_lite, train_ranksvm, BootstrapConfig, FnRanker, LambdaMartConfig, RankSvmConfig,
};
use rank_robustness::robustness::{
    delta_change, empirical_min_perturbation, expected_pairwise_robustness, pairwise_robustness_linear,
    pointwise_robustness_linear, stability_level_estimate, SearchConfig, SearchTarget,
};
use rank_robustness::simulator::{balanced_ranker, simulate_competition, synthetic_training_set, SimConfig, TrainingSetConfig};
use rank_robustness::stats::{bonferroni_adjust, correlate, paired_t_test, CorrelationMethod};
use rank_robustness::sweep::{load_inputs, run_sweep_on, write_report, ReportFormat, SweepGrid, SweepSpec};
use rank_robustness::{Change, Features, Linear, Ranker, Ranking};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Vec<f64> {
    (0..m).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn random_linear(rng: &mut ChaCha8Rng) -> Linear {
    let m = rng.random_range(2..=10);
    loop {
        let scale = rng.random_range(0.1..5.0);
        let w = gaussian(rng, m, scale);
        if l2(&w) > 0.0 {
            return Linear::new(Features::from_f64(&w), rng.random_range(-2.0..2.0));
        }
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed < Duration::from_secs(limit_s), format!("took {elapsed:?}, limit {limit_s}s"))
}

/// Spearman's rho with mid-ranks, written out independently of the library.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| **b < *a).count() as f64;
                let equal = v.iter().filter(|b| **b == *a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }
    pearson(&ranks(x), &ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn c1_stability_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(101);
    let mut violations = 0;
    let mut worst_parallel: f64 = 0.0;
    for _ in 0..50 {
        let r = random_linear(&mut rng);
        let w = r.w.as_slice().to_vec();
        let wn = l2(&w);
        let m = w.len();
        for _ in 0..1000 {
            let d = gaussian(&mut rng, m, 10.0);
            let scale = rng.random_range(1e-3..10.0);
            let v = gaussian(&mut rng, m, scale);
            let fd = r.score(&Features::from_f64(&d)).map_err(|e| e.to_string())?;
            let fdv = r.score(&Features::from_f64(&add(&d, &v))).map_err(|e| e.to_string())?;
            if (fdv - fd).abs() > wn * l2(&v) + 1e-9 {
                violations += 1;
            }
        }
        let alpha = rng.random_range(0.01..3.0);
        let d = Features::from_f64(&gaussian(&mut rng, m, 10.0));
        let v = Features::from_f64(&w.iter().map(|x| alpha * x).collect::<Vec<_>>());
        let est = stability_level_estimate(&r, &[(d, v)]).map_err(|e| e.to_string())?;
        worst_parallel = worst_parallel.max((est.k_hat - wn).abs());
    }
    check(violations == 0, format!("{violations} bound violations"))?;
    check(worst_parallel <= 1e-9, format!("parallel ratio off by {worst_parallel:e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("0 violations in 50000 probes; |ratio - |w|| <= {worst_parallel:.1e}; {:?}", start.elapsed()))
}

fn c2_pointwise_increase() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(202);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    for i in 0..20 {
        let r = random_linear(&mut rng);
        let m = r.dim();
        for j in 0..10 {
            let d = Features::from_f64(&gaussian(&mut rng, m, 5.0));
            let cfg = SearchConfig { num_directions: 16, norm_cap: 10.0, tol: 1e-6, seed: (i * 10 + j) as u64, scan_steps: 32 };
            let res = empirical_min_perturbation(&r, &d, &SearchTarget::IncreaseOwnScore, &cfg).map_err(|e| e.to_string())?;
            check(res.feasible, "search reported infeasible")?;
            // Independent confirmation that the returned perturbation raises the score.
            let u = res.direction.as_ref().ok_or("no direction")?.as_slice().to_vec();
            let moved: Vec<f64> = d.as_slice().iter().zip(&u).map(|(x, ui)| x + res.norm * ui).collect();
            check(dot(r.w.as_slice(), &moved) > dot(r.w.as_slice(), d.as_slice()), "returned perturbation does not increase the score")?;
            worst = worst.max(res.norm);
            tested += 1;
        }
    }
    check(worst <= 1e-6, format!("largest norm {worst:e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("{tested} documents, largest norm {worst:.2e}; {:?}", start.elapsed()))
}

fn c3_pairwise_vs_pointwise() -> Outcome {
    let mut rng = rng(303);
    let mut strict = 0;
    for _ in 0..100 {
        let r = random_linear(&mut rng);
        let m = r.dim();
        let docs: Vec<Features> = (0..10).map(|_| Features::from_f64(&gaussian(&mut rng, m, 3.0))).collect();
        let expected = expected_pairwise_robustness(&r, &docs).map_err(|e| e.to_string())?;
        let pointwise = docs
            .iter()
            .map(|d| pointwise_robustness_linear(&r, d).map(|p| p.norm))
            .sum::<Result<f64, _>>()
            .map_err(|e| e.to_string())?
            / docs.len() as f64;

        // Oracle: mean of (f(di) - f(dj)) / |w| over ordered pairs with f(di) >= f(dj).
        let w = r.w.as_slice();
        let scores: Vec<f64> = docs.iter().map(|d| dot(w, d.as_slice())).collect();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..docs.len() {
            for j in 0..docs.len() {
                if i != j && scores[i] >= scores[j] {
                    total += (scores[i] - scores[j]) / l2(w);
                    count += 1;
                }
            }
        }
        let oracle = total / count as f64;
        check((expected - oracle).abs() <= 1e-9 * oracle.max(1.0), format!("expected {expected} vs oracle {oracle}"))?;
        check(pointwise == 0.0, format!("pointwise {pointwise} != 0"))?;
        check(expected >= pointwise, "pairwise below pointwise")?;
        let some_gap = scores.iter().any(|s| *s != scores[0]);
        if some_gap {
            check(expected > 0.0, "no strict positivity despite a score gap")?;
            strict += 1;
        }
    }
    Ok(format!("100 instances, {strict} with score gaps all strictly positive"))
}

fn c4_witnesses() -> Outcome {
    let mut rng = rng(404);
    let mut worst_p3: f64 = 0.0;
    let mut worst_p4: f64 = 0.0;
    for _ in 0..100 {
        let r = random_linear(&mut rng);
        let w = r.w.as_slice().to_vec();
        let wn = l2(&w);
        let m = w.len();
        let neg = |k: f64| Features::from_f64(&w.iter().map(|x| k * x).collect::<Vec<_>>());

        // d1 = -w, d2 = -2w
        let (d1, d2) = (neg(-1.0), neg(-2.0));
        let res = pairwise_robustness_linear(&r, &d1, &d2).map_err(|e| e.to_string())?;
        let dist = l2(&d1.as_slice().iter().zip(d2.as_slice()).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst_p3 = worst_p3.max((res.norm - dist).abs());
        check(!res.attained, "infimum reported as attained")?;
        let u: Vec<f64> = w.iter().map(|x| x / wn).collect();
        let at_inf: Vec<f64> = d2.as_slice().iter().zip(&u).map(|(x, ui)| x + res.norm * ui).collect();
        // Strictness: at the infimum the score gap closes only up to rounding, it never opens.
        let margin = dot(&w, &at_inf) - dot(&w, d1.as_slice());
        check(margin <= 1e-12 * wn * wn, format!("overtakes at the infimum by {margin:e}"))?;
        let beyond: Vec<f64> = d2.as_slice().iter().zip(&u).map(|(x, ui)| x + res.norm * (1.0 + 1e-6) * ui).collect();
        check(dot(&w, &beyond) > dot(&w, d1.as_slice()), "does not overtake just beyond the infimum")?;

        // d1 = 2w, d2 = w
        let (d1, d2) = (neg(2.0), neg(1.0));
        let res = pairwise_robustness_linear(&r, &d1, &d2).map_err(|e| e.to_string())?;
        worst_p4 = worst_p4.max((res.norm - wn).abs());
        let probes: Vec<(Features, Features)> = (0..50)
            .map(|_| {
                let scale = rng.random_range(0.01..5.0);
                let v = gaussian(&mut rng, m, scale);
                (Features::from_f64(&gaussian(&mut rng, m, 5.0)), Features::from_f64(&v))
            })
            .collect();
        let k_hat = stability_level_estimate(&r, &probes).map_err(|e| e.to_string())?.k_hat;
        check(res.norm + 1e-9 >= k_hat, format!("infimum {} below k_hat {k_hat}", res.norm))?;
    }
    check(worst_p3 <= 1e-9, format!("P3 infimum off by {worst_p3:e}"))?;
    check(worst_p4 <= 1e-9, format!("P4 infimum off by {worst_p4:e}"))?;
    Ok(format!("100 w; |inf - |d1-d2|| <= {worst_p3:.1e}, |inf - |w|| <= {worst_p4:.1e}"))
}

fn c5_simultaneous_bound() -> Outcome {
    let mut rng = rng(505);
    for i in 0..10_000 {
        let r = random_linear(&mut rng);
        let m = r.dim();
        let wn = l2(r.w.as_slice());
        let mut f = |s| Features::from_f64(&gaussian(&mut rng, m, s));
        let (d1, d2, v1, v2) = (f(5.0), f(5.0), f(1.0), f(1.0));
        let delta = delta_change(&r, &d1, &d2, Some(&v1), &v2).map_err(|e| e.to_string())?;
        let bound = wn * (l2(v1.as_slice()) + l2(v2.as_slice()));
        check(delta <= bound + 1e-9, format!("sample {i}: {delta} > {bound}"))?;
    }

    let nonlinear = FnRanker::new(3, |x: &[f64]| (x[0] * x[1]).sin() + x[2].powi(3) - (x[0] - x[2]).abs().sqrt());
    let sim = SimConfig::default();
    let ds = synthetic_training_set::<f64>(&sim, &TrainingSetConfig { num_queries: 8, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let trees = train_lambdamart_lite(&ds, &LambdaMartConfig::with_shape(6, 20)).map_err(|e| e.to_string())?;
    let mut identity_checks = 0;
    for _ in 0..2000 {
        let (d1, d2, v) = (gaussian(&mut rng, 3, 2.0), gaussian(&mut rng, 3, 2.0), gaussian(&mut rng, 3, 0.5));
        let got = delta_change(&nonlinear, &Features::from_f64(&d1), &Features::from_f64(&d2), None, &Features::from_f64(&v))
            .map_err(|e| e.to_string())?;
        let oracle = (nonlinear.score_slice(&add(&d2, &v)) - nonlinear.score_slice(&d2)).abs();
        check(got == oracle, format!("nonlinear identity: {got} vs {oracle}"))?;

        let d1 = gaussian(&mut rng, 4, 0.5);
        let d2 = gaussian(&mut rng, 4, 0.5);
        let v = gaussian(&mut rng, 4, 0.05);
        let got = delta_change(&trees, &Features::from_f64(&d1), &Features::from_f64(&d2), None, &Features::from_f64(&v))
            .map_err(|e| e.to_string())?;
        let oracle = (trees.score_slice(&add(&d2, &v)) - trees.score_slice(&d2)).abs();
        check(got == oracle, format!("tree identity: {got} vs {oracle}"))?;
        identity_checks += 2;
    }
    Ok(format!("10000 bound samples, {identity_checks} exact identity checks"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn c6_measures() -> Outcome {
    let mut checked = 0;
    for n in 2..=6 {
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let base = Ranking::from_order("q", &ids).map_err(|e| e.to_string())?;
        let pairs = (n * (n - 1) / 2) as f64;
        for p in permutations(n) {
            let order: Vec<&String> = p.iter().map(|&i| &ids[i]).collect();
            let other = Ranking::from_order("q", &order).map_err(|e| e.to_string())?;
            let inversions = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
            let kt = kt_distance(&base, &other).map_err(|e| e.to_string())?;
            check((kt * pairs - inversions as f64).abs() < 1e-9, format!("n={n} {p:?}: {kt} vs {inversions}"))?;

            let unchanged: Vec<Change> = ids
                .iter()
                .map(|id| {
                    let x = Features::from_f64(&[1.0, 2.0]);
                    Change::new(id.clone(), x.clone(), x).expect("valid change")
                })
                .collect();
            for mode in [Normalizer::Sum, Normalizer::Diff, Normalizer::Rel] {
                let kw = kt_weighted(&base, &other, &unchanged, mode).map_err(|e| e.to_string())?;
                check(kw == inversions as f64, format!("kt_weighted {kw} vs {inversions}"))?;
            }
            checked += 1;
        }
    }

    let ab = Ranking::from_order("q", &["a", "b"]).map_err(|e| e.to_string())?;
    let ba = Ranking::from_order("q", &["b", "a"]).map_err(|e| e.to_string())?;
    let rbo = rbo_ext(&ab, &ba, 0.7).map_err(|e| e.to_string())?;
    check((rbo - 0.70).abs() <= 1e-12, format!("rbo([a,b],[b,a]) = {rbo}"))?;

    let mut rng = rng(606);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=15);
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let mut a = ids.clone();
        let mut b = ids.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let p = rng.random_range(0.01..0.99);
        let la = Ranking::from_order("q", &a).map_err(|e| e.to_string())?;
        let lb = Ranking::from_order("q", &b).map_err(|e| e.to_string())?;
        let ab = rbo_ext(&la, &lb, p).map_err(|e| e.to_string())?;
        let ba = rbo_ext(&lb, &la, p).map_err(|e| e.to_string())?;
        check((0.0..=1.0).contains(&ab), format!("rbo {ab} outside [0,1]"))?;
        check((ab - ba).abs() <= 1e-12, format!("rbo asymmetric: {ab} vs {ba}"))?;
    }
    Ok(format!("{checked} permutations vs inversion oracle; rbo = {rbo}; 10000 random pairs in [0,1] and symmetric"))
}

fn c_grid() -> Vec<f64> {
    (0..15).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 14.0)).collect()
}

const LADDER: [[usize; 2]; 8] = [[2, 5], [3, 10], [4, 20], [5, 30], [6, 45], [8, 60], [10, 80], [12, 100]];

fn c7_ranksvm_trend() -> Outcome {
    let start = Instant::now();
    let spec = SweepSpec { seed: 7, ..SweepSpec::new(SweepGrid::RankSvm { c_values: c_grid(), trainer: RankSvmConfig::default() }) };
    let (ds, log) = load_inputs(&spec).map_err(|e| e.to_string())?;
    let res = run_sweep_on(&spec, &ds, &log).map_err(|e| e.to_string())?;
    check(res.failures() == 0, format!("{} failed points", res.failures()))?;
    let cs: Vec<f64> = res.points.iter().map(|p| p.c.unwrap()).collect();
    let norms: Vec<f64> = res.points.iter().map(|p| p.weight_norm.unwrap()).collect();
    let kt: Vec<f64> = res.points.iter().map(|p| p.measures[&Measure::Kt]).collect();
    let rbo: Vec<f64> = res.points.iter().map(|p| p.measures[&Measure::Rbo]).collect();
    let (c_w, w_kt, w_rbo) = (spearman(&cs, &norms), spearman(&norms, &kt), spearman(&norms, &rbo));
    let lib = res.correlation("KT", CorrelationMethod::Spearman).and_then(|r| r.coefficient).unwrap_or(f64::NAN);
    check((lib - w_kt).abs() < 1e-9, format!("sweep reports spearman {lib}, oracle {w_kt}"))?;
    check(cs.len() >= 15, "fewer than 15 grid points")?;
    check(w_kt >= 0.5, format!("spearman(|w|, KT) = {w_kt:.3}"))?;
    check(w_rbo <= -0.5, format!("spearman(|w|, RBO) = {w_rbo:.3}"))?;
    check(c_w >= 0.8, format!("spearman(c, |w|) = {c_w:.3}"))?;
    within(start.elapsed(), 180)?;
    Ok(format!(
        "15 c values; spearman(c,|w|) = {c_w:.3}, (|w|,KT) = {w_kt:.3}, (|w|,RBO) = {w_rbo:.3}; {:?}",
        start.elapsed()
    ))
}

fn c8_lambdamart_trend() -> Outcome {
    let start = Instant::now();
    let grid = SweepGrid::LambdaMart { ladder: LADDER.to_vec(), trainer: LambdaMartConfig::default() };
    let spec = SweepSpec { seed: 7, ..SweepSpec::new(grid) };
    let (ds, log) = load_inputs(&spec).map_err(|e| e.to_string())?;
    let res = run_sweep_on(&spec, &ds, &log).map_err(|e| e.to_string())?;
    check(res.failures() == 0, format!("{} failed points", res.failures()))?;
    let idx: Vec<f64> = (0..LADDER.len()).map(|i| i as f64).collect();
    let kt: Vec<f64> = res.points.iter().map(|p| p.measures[&Measure::Kt]).collect();
    let rbo: Vec<f64> = res.points.iter().map(|p| p.measures[&Measure::Rbo]).collect();
    let (i_kt, i_rbo) = (spearman(&idx, &kt), spearman(&idx, &rbo));
    check(i_kt >= 0.4, format!("spearman(index, KT) = {i_kt:.3}"))?;
    check(i_rbo <= -0.4, format!("spearman(index, RBO) = {i_rbo:.3}"))?;
    within(start.elapsed(), 600)?;
    Ok(format!("8 ladder points; spearman(index,KT) = {i_kt:.3}, (index,RBO) = {i_rbo:.3}; {:?}", start.elapsed()))
}

fn c9_variance_ordering() -> Outcome {
    let sim = SimConfig::default();
    let ds = synthetic_training_set::<f64>(&sim, &TrainingSetConfig::default()).map_err(|e| e.to_string())?;
    let log = simulate_competition(&sim, &balanced_ranker::<f64>(&sim)).map_err(|e| e.to_string())?;
    let probes: Vec<Features> = log.snapshots.iter().step_by(7).map(|s| s.features.clone()).collect();
    let cfg = BootstrapConfig { resamples: 20, seed: 11, max_retries: 3 };
    let (strong_c, weak_c) = (0.001, 1.0);
    let var = |c: f64| {
        bootstrap_variance(
            |d: &rank_robustness::Dataset, seed| train_ranksvm(&d.preference_pairs(), &RankSvmConfig { c, seed, ..Default::default() }),
            &ds,
            &probes,
            &cfg,
        )
    };
    let (v_strong, v_weak) = (var(strong_c).map_err(|e| e.to_string())?, var(weak_c).map_err(|e| e.to_string())?);
    let pairs = ds.preference_pairs();
    let kt = |c: f64| -> Result<f64, String> {
        let r = train_ranksvm(&pairs, &RankSvmConfig::with_c(c)).map_err(|e| e.to_string())?;
        let rep = evaluate_ranking_robustness(&r, &log, &MeasureConfig::default()).map_err(|e| e.to_string())?;
        Ok(rep.grand_mean(Measure::Kt))
    };
    let (kt_strong, kt_weak) = (kt(strong_c)?, kt(weak_c)?);
    let summary = format!(
        "c={strong_c}: variance {v_strong:.3e}, KT {kt_strong:.4}; c={weak_c}: variance {v_weak:.3e}, KT {kt_weak:.4}"
    );
    check(v_strong < v_weak, format!("variance ordering violated: {summary}"))?;
    check(kt_strong <= kt_weak, format!("KT ordering violated: {summary}"))?;
    Ok(summary)
}

fn c10_determinism() -> Outcome {
    let mut spec = SweepSpec::new(SweepGrid::RankSvm { c_values: vec![0.001, 0.03, 1.0, 10.0], trainer: RankSvmConfig::default() });
    spec.seed = 42;
    let render = || -> Result<Vec<u8>, String> {
        let (ds, log) = load_inputs(&spec).map_err(|e| e.to_string())?;
        let res = run_sweep_on(&spec, &ds, &log).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_report(&res, ReportFormat::Csv, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let (a, b) = (render()?, render()?);
    check(!a.is_empty() && a == b, "CSV outputs differ")?;
    Ok(format!("two runs, {} identical CSV bytes", a.len()))
}

/// Exact two-sided permutation p-value by full enumeration.
fn permutation_oracle(x: &[f64], y: &[f64], stat: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
    let observed = stat(x, y).abs();
    let perms = permutations(x.len());
    let hits = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
            stat(x, &yp).abs() >= observed - 1e-9 * observed.max(1e-12)
        })
        .count();
    hits as f64 / perms.len() as f64
}

fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let a = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let b = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            s += a * b;
            tx += f64::from(x[i] == x[j]);
            ty += f64::from(y[i] == y[j]);
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    s / ((n0 - tx) * (n0 - ty)).sqrt()
}

fn paired_t(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    m / (sd / n.sqrt())
}

fn c11_stats() -> Outcome {
    let mut rng = rng(1111);
    let mut worst: f64 = 0.0;
    for s in 0..50 {
        let n = 4 + s % 7;
        let ties = s % 2 == 1;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if ties { rng.random_range(0..4) as f64 } else { rng.sample::<f64, _>(StandardNormal) })
                .collect()
        };
        let x = draw(&mut rng);
        let y: Vec<f64> = draw(&mut rng).iter().zip(&x).map(|(e, xi)| 0.6 * xi + e).collect();

        let spearman_stat = |a: &[f64], b: &[f64]| spearman(a, b);
        let oracles: [(CorrelationMethod, &dyn Fn(&[f64], &[f64]) -> f64); 3] = [
            (CorrelationMethod::Pearson, &pearson),
            (CorrelationMethod::Spearman, &spearman_stat),
            (CorrelationMethod::Kendall, &kendall_tau_b),
        ];
        for (method, stat) in oracles {
            let res = correlate(&x, &y, method).map_err(|e| e.to_string())?;
            let Some(p) = res.p_value else {
                continue;
            };
            let exact = permutation_oracle(&x, &y, stat);
            worst = worst.max((p - exact).abs());
            check((p - exact).abs() <= 0.02, format!("series {s} (n={n}) {method:?}: p {p:.4} vs exact {exact:.4}"))?;
            check(res.significant_95 == (p < 0.05), "significance flag disagrees with p")?;
        }

        let a = draw(&mut rng);
        let b: Vec<f64> = a.iter().map(|v| v - 0.4 + 0.8 * rng.random::<f64>()).collect();
        let t = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
        if !t.degenerate {
            let t_obs = paired_t(&a, &b).abs();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let mut hits = 0;
            for mask in 0..(1u32 << n) {
                let flipped: Vec<f64> = d.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).collect();
                let zeros = vec![0.0; n];
                let tf = paired_t(&flipped, &zeros).abs();
                if tf >= t_obs - 1e-9 * t_obs || t_obs.is_nan() {
                    hits += 1;
                }
            }
            let exact = hits as f64 / f64::from(1u32 << n);
            worst = worst.max((t.p_value - exact).abs());
            check((t.p_value - exact).abs() <= 0.02, format!("series {s}: paired t p {:.4} vs exact {exact:.4}", t.p_value))?;
        }
    }

    let threshold = 0.05 / 9.0;
    let mut p_values = vec![0.0001, 0.001, 0.005, threshold, 0.0056, 0.01, 0.04, 0.05, 0.5];
    let mut rng = self::rng(1112);
    for _ in 0..200 {
        let decisions = bonferroni_adjust(&p_values, 0.05);
        for (p, d) in p_values.iter().zip(&decisions) {
            check(*d == (*p < threshold), format!("p = {p}: decision {d}"))?;
        }
        p_values = (0..9).map(|_| rng.random_range(0.0..0.02)).collect();
    }
    Ok(format!("50 series, max |p - exact| = {worst:.4}; bonferroni matches p < 0.05/9 on 201 sets"))
}

fn c12_mappings() -> Outcome {
    let mut combos = 0;
    for k in 0..=5u32 {
        for s in 0..=5u32 {
            for example in [false, true] {
                let got = quality_feature_score(k, s, example);
                if k + s > 5 {
                    check(got.is_err(), format!("k={k}, s={s} accepted"))?;
                    continue;
                }
                let want = if example { 100.0 } else { 100.0 - 20.0 * f64::from(k + s) };
                check(got.as_ref().ok() == Some(&want), format!("k={k}, s={s}, example={example}: {got:?}"))?;
                combos += 1;
            }
        }
    }
    check(combos == 42, format!("{combos} valid combinations"))?;
    let table: HashMap<u32, u8> = [(0, 0), (1, 0), (2, 0), (3, 1), (4, 2), (5, 3)].into_iter().collect();
    for count in 0..=5 {
        let got = relevance_grade(count).map_err(|e| e.to_string())?;
        check(got == table[&count], format!("count {count} -> {got}"))?;
    }
    check(relevance_grade(6).is_err(), "count 6 accepted")?;
    Ok("21 (k,s) combos x override, 6 label counts, out-of-range rejected".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("1 linear stability bound", c1_stability_bound),
        ("2 pointwise increase within 1e-6", c2_pointwise_increase),
        ("3 pairwise >= pointwise", c3_pairwise_vs_pointwise),
        ("4 infimum witnesses", c4_witnesses),
        ("5 simultaneous change bound", c5_simultaneous_bound),
        ("6 measures vs oracles", c6_measures),
        ("7 RankSVM regularization trend", c7_ranksvm_trend),
        ("8 LambdaMART ladder trend", c8_lambdamart_trend),
        ("9 bootstrap variance ordering", c9_variance_ordering),
        ("10 sweep determinism", c10_determinism),
        ("11 p-values vs exact permutation", c11_stats),
        ("12 mapping formulas", c12_mappings),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
