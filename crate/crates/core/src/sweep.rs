//! Regularization sweeps: train one ranker per grid point, evaluate ranking
//! robustness and effectiveness on a competition log, and correlate the
//! regularization proxy with every measure.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GradedDataset, MinMaxScaler};
use crate::domain::{rank, CompetitionLog, FeatureVector};
use crate::error::{invalid, Error, Result};
use crate::io::{is_relevant, parse_svmlight, read_log_file};
use crate::measures::{evaluate_ranking_robustness, Measure, MeasureConfig};
use crate::rankers::{
    fit_lambdamart_lite, fit_ranksvm, weight_norm, AnyRanker, LambdaMartConfig, LinearRanker, RankSvmConfig, Ranker,
};
use crate::rng::derive_seed;
use crate::simulator::{balanced_ranker, simulate_competition, synthetic_training_set, SimConfig, TrainingSetConfig};
use crate::stats::{average_precision, correlate, ndcg_at_k, CorrelationMethod, CorrelationResult};

/// Ranker family and its regularization grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SweepGrid {
    /// One point per `c`; the proxy is ‖w‖.
    #[serde(rename = "ranksvm")]
    RankSvm {
        c_values: Vec<f64>,
        #[serde(default)]
        trainer: RankSvmConfig,
    },
    /// One point per `[num_leaves, num_trees]`; the proxy is the ladder index.
    #[serde(rename = "lambdamart")]
    LambdaMart {
        ladder: Vec<[usize; 2]>,
        #[serde(default)]
        trainer: LambdaMartConfig,
    },
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        match self {
            SweepGrid::RankSvm { c_values, .. } => c_values.len(),
            SweepGrid::LambdaMart { ladder, .. } => ladder.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self) -> &'static str {
        match self {
            SweepGrid::RankSvm { .. } => "ranksvm",
            SweepGrid::LambdaMart { .. } => "lambdamart",
        }
    }

    pub fn proxy_name(&self) -> &'static str {
        match self {
            SweepGrid::RankSvm { .. } => "weight_norm",
            SweepGrid::LambdaMart { .. } => "ladder_index",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TrainingSource {
    Synthetic(TrainingSetConfig),
    Svmlight { path: PathBuf, dim: Option<usize> },
}

impl Default for TrainingSource {
    fn default() -> Self {
        TrainingSource::Synthetic(TrainingSetConfig::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSource {
    pub sim: SimConfig,
    /// Weights of the linear ranker driving the competition; defaults to
    /// [`balanced_ranker`].
    pub driver_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CompetitionSource {
    Simulate(SimulateSource),
    Jsonl { path: PathBuf },
}

impl Default for CompetitionSource {
    fn default() -> Self {
        CompetitionSource::Simulate(SimulateSource::default())
    }
}

fn default_ndcg_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    #[serde(default)]
    pub training: TrainingSource,
    #[serde(default)]
    pub competition: CompetitionSource,
    #[serde(default)]
    pub measures: MeasureConfig,
    /// Points with ‖w‖ at or above the cap stay in the table but not in the
    /// correlations.
    #[serde(default)]
    pub weight_norm_cap: Option<f64>,
    /// Fit a min-max scaler on the training data and apply it to both inputs.
    #[serde(default)]
    pub min_max_scale: bool,
    #[serde(default = "default_ndcg_k")]
    pub ndcg_k: usize,
    /// Trainer seeds are derived from this per grid point.
    #[serde(default)]
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(grid: SweepGrid) -> Self {
        Self {
            grid,
            training: TrainingSource::default(),
            competition: CompetitionSource::default(),
            measures: MeasureConfig::default(),
            weight_norm_cap: None,
            min_max_scale: false,
            ndcg_k: default_ndcg_k(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        match &self.grid {
            SweepGrid::RankSvm { c_values, .. } => {
                if let Some(c) = c_values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                    return Err(invalid(format!("c values must be finite and positive, got {c}")));
                }
            }
            SweepGrid::LambdaMart { ladder, .. } => {
                if let Some([l, t]) = ladder.iter().find(|[l, t]| *l < 2 || *t < 1) {
                    return Err(invalid(format!("ladder point ({l}, {t}) needs >= 2 leaves and >= 1 tree")));
                }
            }
        }
        if let Some(cap) = self.weight_norm_cap {
            if !(cap > 0.0) {
                return Err(invalid(format!("weight norm cap must be positive, got {cap}")));
            }
        }
        if self.ndcg_k == 0 {
            return Err(invalid("ndcg_k must be at least 1"));
        }
        Ok(())
    }
}

/// Loads (or generates) the training set and competition log of a spec.
pub fn load_inputs(spec: &SweepSpec) -> Result<(GradedDataset<f64>, CompetitionLog<f64>)> {
    let sim_for_training = match &spec.competition {
        CompetitionSource::Simulate(s) => s.sim.clone(),
        CompetitionSource::Jsonl { .. } => SimConfig::default(),
    };
    let dataset = match &spec.training {
        TrainingSource::Synthetic(cfg) => synthetic_training_set(&sim_for_training, cfg)?,
        TrainingSource::Svmlight { path, dim } => parse_svmlight(path, *dim)?,
    };
    let log = match &spec.competition {
        CompetitionSource::Simulate(s) => {
            let driver = match &s.driver_weights {
                Some(w) => LinearRanker::new(FeatureVector::new(w.clone())?, 0.0),
                None => balanced_ranker(&s.sim),
            };
            simulate_competition(&s.sim, &driver)?
        }
        CompetitionSource::Jsonl { path } => read_log_file(path)?,
    };
    Ok((dataset, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    /// ‖w‖ reached the configured cap.
    Capped,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub c: Option<f64>,
    pub num_leaves: Option<usize>,
    pub num_trees: Option<usize>,
    pub status: PointStatus,
    pub proxy: Option<f64>,
    pub weight_norm: Option<f64>,
    pub measures: BTreeMap<Measure, f64>,
    pub map: Option<f64>,
    pub ndcg: Option<f64>,
    #[serde(skip)]
    pub ranker: Option<AnyRanker<f64>>,
}

impl SweepPoint {
    pub fn included(&self) -> bool {
        self.status == PointStatus::Ok
    }

    /// Value of a correlation target: a measure name, `MAP` or `NDCG`.
    pub fn value(&self, target: &str) -> Option<f64> {
        match target {
            "MAP" => self.map,
            "NDCG" => self.ndcg,
            m => self.measures.get(&m.parse::<Measure>().ok()?).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Measure name, `MAP`, `NDCG`, or `c` for the parameter-vs-proxy check.
    pub target: String,
    pub method: CorrelationMethod,
    pub n: usize,
    pub coefficient: Option<f64>,
    pub p_value: Option<f64>,
    pub significant_95: bool,
}

impl CorrelationRow {
    fn from_series(target: &str, method: CorrelationMethod, x: &[f64], y: &[f64]) -> Result<Self> {
        let res = if x.len() >= 3 {
            correlate(x, y, method)?
        } else {
            CorrelationResult { method, coefficient: None, p_value: None, significant_95: false }
        };
        Ok(Self {
            target: target.to_string(),
            method,
            n: x.len(),
            coefficient: res.coefficient,
            p_value: res.p_value,
            significant_95: res.significant_95,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: String,
    pub proxy_name: String,
    pub seed: u64,
    pub ndcg_k: usize,
    pub points: Vec<SweepPoint>,
    /// Proxy against every measure plus MAP and NDCG, three methods each.
    pub correlations: Vec<CorrelationRow>,
    /// For RankSVM, `c` against ‖w‖.
    pub parameter_correlations: Vec<CorrelationRow>,
}

/// Observation row shared by the CSV and JSON renderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub label: String,
    pub status: String,
    pub proxy: Option<f64>,
    pub target: String,
    pub value: f64,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| matches!(p.status, PointStatus::Failed { .. })).count()
    }

    /// More than 10% of grid points failed to train or evaluate.
    pub fn partial_failure(&self) -> bool {
        self.failures() * 10 > self.points.len()
    }

    pub fn correlation(&self, target: &str, method: CorrelationMethod) -> Option<&CorrelationRow> {
        self.correlations.iter().find(|r| r.target == target && r.method == method)
    }

    pub fn included_points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.included())
    }

    pub fn observations(&self) -> Vec<Observation> {
        let mut out = Vec::new();
        for p in &self.points {
            let status = match &p.status {
                PointStatus::Ok => "ok",
                PointStatus::Capped => "capped",
                PointStatus::Failed { .. } => continue,
            };
            for t in targets() {
                if let Some(value) = p.value(&t) {
                    out.push(Observation {
                        index: p.index,
                        label: p.label.clone(),
                        status: status.into(),
                        proxy: p.proxy,
                        target: t,
                        value,
                    });
                }
            }
        }
        out
    }
}

fn targets() -> Vec<String> {
    Measure::ALL.iter().map(|m| m.name().to_string()).chain(["MAP".into(), "NDCG".into()]).collect()
}

/// MAP (binary relevance = grade ≥ 1) and NDCG@k of the ranker's lists,
/// averaged over rounds within a query and then over queries.
pub fn effectiveness<R: Ranker<f64> + ?Sized>(ranker: &R, log: &CompetitionLog<f64>, k: usize) -> Result<(f64, f64)> {
    if log.queries.is_empty() {
        return Err(Error::Empty("competition log"));
    }
    let mut map = 0.0;
    let mut ndcg = 0.0;
    for q in &log.queries {
        let (mut ap_sum, mut nd_sum) = (0.0, 0.0);
        let rounds = log.query_rounds(q);
        for r in 1..=rounds {
            let snaps = log.round_snapshots(q, r);
            let ranking = rank(ranker, &snaps)?;
            let grades: HashMap<&str, u8> = snaps.iter().map(|s| (s.doc_id.as_str(), s.relevance_grade)).collect();
            let judgments: HashMap<String, bool> =
                grades.iter().map(|(id, g)| (id.to_string(), is_relevant(*g))).collect();
            let ids: Vec<&str> = ranking.ids().collect();
            ap_sum += average_precision(&ids, &judgments)?.value;
            let ranked_grades: Vec<u8> = ids.iter().map(|id| grades[id]).collect();
            nd_sum += ndcg_at_k(&ranked_grades, k)?;
        }
        map += ap_sum / rounds as f64;
        ndcg += nd_sum / rounds as f64;
    }
    let n = log.queries.len() as f64;
    Ok((map / n, ndcg / n))
}

fn evaluate_point(
    spec: &SweepSpec,
    index: usize,
    dataset: &GradedDataset<f64>,
    log: &CompetitionLog<f64>,
) -> SweepPoint {
    let seed = derive_seed(spec.seed, index as u64);
    let (label, c, shape) = match &spec.grid {
        SweepGrid::RankSvm { c_values, .. } => (format!("c={}", c_values[index]), Some(c_values[index]), None),
        SweepGrid::LambdaMart { ladder, .. } => {
            let [l, t] = ladder[index];
            (format!("leaves={l},trees={t}"), None, Some((l, t)))
        }
    };
    let mut point = SweepPoint {
        index,
        label,
        c,
        num_leaves: shape.map(|s| s.0),
        num_trees: shape.map(|s| s.1),
        status: PointStatus::Ok,
        proxy: None,
        weight_norm: None,
        measures: BTreeMap::new(),
        map: None,
        ndcg: None,
        ranker: None,
    };

    let trained: Result<AnyRanker<f64>> = match &spec.grid {
        SweepGrid::RankSvm { c_values, trainer } => {
            let cfg = RankSvmConfig { c: c_values[index], seed, ..trainer.clone() };
            fit_ranksvm(&dataset.preference_pairs(), &cfg).map(|f| AnyRanker::Linear(f.ranker))
        }
        SweepGrid::LambdaMart { ladder, trainer } => {
            let [l, t] = ladder[index];
            let cfg = LambdaMartConfig { num_leaves: l, num_trees: t, seed, ..trainer.clone() };
            fit_lambdamart_lite(dataset, &cfg).map(|f| AnyRanker::Trees(f.ranker))
        }
    };
    let evaluated = trained.and_then(|ranker| {
        let report = evaluate_ranking_robustness(&ranker, log, &spec.measures)?;
        let (map, ndcg) = effectiveness(&ranker, log, spec.ndcg_k)?;
        Ok((ranker, report, map, ndcg))
    });
    match evaluated {
        Ok((ranker, report, map, ndcg)) => {
            if let AnyRanker::Linear(lin) = &ranker {
                let norm = weight_norm(lin);
                point.weight_norm = Some(norm);
                point.proxy = Some(norm);
                if spec.weight_norm_cap.is_some_and(|cap| norm >= cap) {
                    point.status = PointStatus::Capped;
                }
            } else {
                point.proxy = Some(index as f64);
            }
            point.measures = report.grand_means;
            point.map = Some(map);
            point.ndcg = Some(ndcg);
            point.ranker = Some(ranker);
        }
        Err(e) => {
            log::warn!("sweep point {} ({}) failed: {e}", index, point.label);
            point.status = PointStatus::Failed { error: e.to_string() };
        }
    }
    point
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let (dataset, log) = load_inputs(spec)?;
    run_sweep_on(spec, &dataset, &log)
}

/// Evaluates the grid in parallel; rows come back in grid order and each
/// point is deterministic, so the result depends only on the inputs.
pub fn run_sweep_on(spec: &SweepSpec, dataset: &GradedDataset<f64>, log: &CompetitionLog<f64>) -> Result<SweepResult> {
    spec.validate()?;
    let scaled;
    let (dataset, log) = if spec.min_max_scale {
        let scaler = MinMaxScaler::fit(dataset)?;
        scaled = (scaler.transform_dataset(dataset)?, scaler.transform_log(log)?);
        (&scaled.0, &scaled.1)
    } else {
        (dataset, log)
    };

    let points: Vec<SweepPoint> =
        (0..spec.grid.len()).into_par_iter().map(|i| evaluate_point(spec, i, dataset, log)).collect();

    let included: Vec<&SweepPoint> = points.iter().filter(|p| p.included()).collect();
    let proxy: Vec<f64> = included.iter().map(|p| p.proxy.expect("included points have a proxy")).collect();
    let mut correlations = Vec::new();
    for target in targets() {
        let y: Vec<f64> = included.iter().map(|p| p.value(&target).unwrap_or(f64::NAN)).collect();
        for method in CorrelationMethod::ALL {
            correlations.push(CorrelationRow::from_series(&target, method, &proxy, &y)?);
        }
    }
    let mut parameter_correlations = Vec::new();
    if let SweepGrid::RankSvm { .. } = spec.grid {
        let cs: Vec<f64> = included.iter().map(|p| p.c.expect("ranksvm point has c")).collect();
        for method in CorrelationMethod::ALL {
            parameter_correlations.push(CorrelationRow::from_series("c", method, &cs, &proxy)?);
        }
    }

    Ok(SweepResult {
        family: spec.grid.family().into(),
        proxy_name: spec.grid.proxy_name().into(),
        seed: spec.seed,
        ndcg_k: spec.ndcg_k,
        points,
        correlations,
        parameter_correlations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-scatter" => Ok(ReportFormat::Svg),
            other => Err(invalid(format!("unknown report format `{other}` (json, csv, svg)"))),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    result: &'a SweepResult,
    observations: Vec<Observation>,
}

/// Renders a sweep result. CSV has one row per observation; JSON carries the
/// full result plus the same observation rows; SVG is a grid of scatter plots
/// of the proxy against each measure.
pub fn write_report<W: Write>(result: &SweepResult, format: ReportFormat, mut out: W) -> Result<()> {
    if result.points.is_empty() {
        return Err(Error::Empty("sweep results"));
    }
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &JsonReport { result, observations: result.observations() })?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["index", "label", "status", "proxy", "target", "value"])?;
            for o in result.observations() {
                w.write_record([
                    o.index.to_string(),
                    o.label,
                    o.status,
                    o.proxy.map(|p| p.to_string()).unwrap_or_default(),
                    o.target,
                    o.value.to_string(),
                ])?;
            }
            w.flush()?;
        }
        ReportFormat::Svg => out.write_all(scatter_svg(result).as_bytes())?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_report_file(result: &SweepResult, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    write_report(result, format, BufWriter::new(File::create(path)?))
}

/// One row per correlation (proxy and parameter checks).
pub fn write_correlations_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "target", "method", "n", "coefficient", "p_value", "significant_95"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows = result
        .correlations
        .iter()
        .map(|r| (result.proxy_name.as_str(), r.target.as_str(), r))
        .chain(result.parameter_correlations.iter().map(|r| ("c", result.proxy_name.as_str(), r)));
    for (x, target, row) in rows {
        w.write_record([
            x,
            target,
            row.method.name(),
            &row.n.to_string(),
            &opt(row.coefficient),
            &opt(row.p_value),
            &row.significant_95.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn scatter_svg(result: &SweepResult) -> String {
    const PANEL: f64 = 220.0;
    const PAD: f64 = 36.0;
    let cols = 3;
    let rows = Measure::ALL.len().div_ceil(cols);
    let (width, height) = (cols as f64 * PANEL, rows as f64 * PANEL);
    let pts: Vec<&SweepPoint> = result.included_points().collect();
    let xs: Vec<f64> = pts.iter().filter_map(|p| p.proxy).collect();
    let range = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
            _ => (0.0, 1.0),
        }
    };
    let (x0, x1) = range(&xs);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (i, m) in Measure::ALL.iter().enumerate() {
        let ox = (i % cols) as f64 * PANEL;
        let oy = (i / cols) as f64 * PANEL;
        let ys: Vec<f64> = pts.iter().filter_map(|p| p.measures.get(m).copied()).collect();
        let (y0, y1) = range(&ys);
        let inner = PANEL - 2.0 * PAD;
        let _ = writeln!(
            s,
            r#"<g transform="translate({ox},{oy})"><rect x="{PAD}" y="{PAD}" width="{inner}" height="{inner}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, PANEL / 2.0, PAD - 8.0, m.name());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            PANEL / 2.0,
            PANEL - 8.0,
            result.proxy_name
        );
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}" text-anchor="start">{x0:.3}</text>"#, PANEL - PAD + 12.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1:.3}</text>"#, PANEL - PAD, PANEL - PAD + 12.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#, PAD - 2.0, PAD + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#, PAD - 2.0, PANEL - PAD);
        for p in &pts {
            if let (Some(x), Some(y)) = (p.proxy, p.measures.get(m)) {
                let cx = PAD + (x - x0) / (x1 - x0) * inner;
                let cy = PANEL - PAD - (y - y0) / (y1 - y0) * inner;
                let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"/>"#);
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
