//! Engine dispatch, counterexample certification, verdict merging, and
//! reports.
//!
//! Every Unsafe verdict, whichever engine produced it, is replayed here
//! before it counts; failed replays are demoted to Unknown. Per query the
//! engine verdicts merge as certified Unsafe > Safe > Unknown, and a Safe
//! next to a certified Unsafe aborts the property as a soundness conflict.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::babverify::{self, BabConfig, Budget, Counterexample, Status, UnknownReason, Verdict};
use crate::encoder::{generate_queries, CheckFailure, CoupledSystem, EncodeError, InputConstraint, InvalidPair, OutputConstraint, Query, QueryTarget};
use crate::interval::Interval;
use crate::json;
use crate::propspec::{InputDomain, PropertySpec, SlackSpec};
use crate::tensornet::{Network, NetworkError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance for replaying counterexamples from any engine.
pub const DEFAULT_CERT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("no engines configured")]
    NoEngines,
    #[error("query {query_id}: engine {safe_engine} proved Safe but engine {unsafe_engine} produced a certified counterexample")]
    Conflict {
        query_id: String,
        safe_engine: String,
        unsafe_engine: String,
        safe: Box<Verdict>,
        unsafe_verdict: Box<Verdict>,
    },
    #[error("no result for query {0}")]
    MissingQuery(String),
    #[error("result for unexpected or duplicate query {0}")]
    UnexpectedQuery(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    Native,
    ExternalExport,
}

/// A verification engine. External engines only ever report back through
/// imported result files.
pub trait Engine: Send + Sync {
    fn name(&self) -> &str;
    fn capability(&self) -> Capability;
    fn verify(&self, query: &Query, budget: Budget) -> Verdict;
}

/// The in-process branch-and-bound engine.
#[derive(Debug, Clone, Default)]
pub struct NativeEngine {
    pub config: BabConfig,
}

impl NativeEngine {
    pub fn new(config: BabConfig) -> Self {
        Self { config }
    }
}

impl Engine for NativeEngine {
    fn name(&self) -> &str {
        babverify::ENGINE_NAME
    }

    fn capability(&self) -> Capability {
        Capability::Native
    }

    fn verify(&self, query: &Query, budget: Budget) -> Verdict {
        babverify::verify_query_with(query, budget, &self.config)
    }
}

/// Writes each query as a bundle into `dir` and picks up a result file
/// (`<stem>.result`) if an external solver has left one there.
#[derive(Debug, Clone)]
pub struct ExportEngine {
    dir: PathBuf,
    name: String,
}

impl ExportEngine {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        let name = format!("export:{}", dir.display());
        Self { dir, name }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Engine for ExportEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn capability(&self) -> Capability {
        Capability::ExternalExport
    }

    fn verify(&self, query: &Query, _budget: Budget) -> Verdict {
        let start = Instant::now();
        let mut v = match export_query(query, &self.dir) {
            Err(e) => Verdict::new(&self.name, Status::Unknown(UnknownReason::EngineError(e.to_string()))),
            Ok(bundle) => {
                if bundle.result.exists() {
                    match import_result(&bundle.result, query) {
                        Ok(mut v) => {
                            v.engine = self.name.clone();
                            v
                        }
                        Err(e) => Verdict::new(&self.name, Status::Unknown(UnknownReason::EngineError(e.to_string()))),
                    }
                } else {
                    Verdict::new(&self.name, Status::Unknown(UnknownReason::NoResult))
                }
            }
        };
        v.wall_time_s = start.elapsed().as_secs_f64();
        v
    }
}

/// Per-query verdicts from every engine.
#[derive(Debug, Clone)]
pub struct QueryVerdicts {
    pub id: String,
    pub verdicts: Vec<Verdict>,
    pub time_s: f64,
}

/// Rayon pool capped by `DIFFRL_THREADS` when set.
fn worker_pool() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var("DIFFRL_THREADS").ok()?.trim().parse().ok()?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()
}

/// Runs every engine on every query, in parallel across queries. Panicking
/// engines yield Unknown; every Unsafe verdict is re-certified and demoted
/// to Unknown if replay fails.
pub fn dispatch(queries: &[Query], engines: &[Box<dyn Engine>], budget: Budget) -> Result<Vec<QueryVerdicts>, OrchestratorError> {
    if engines.is_empty() {
        return Err(OrchestratorError::NoEngines);
    }
    let run = || {
        queries
            .par_iter()
            .map(|q| {
                let start = Instant::now();
                let verdicts = engines
                    .iter()
                    .map(|e| {
                        let v = catch_unwind(AssertUnwindSafe(|| e.verify(q, budget))).unwrap_or_else(|p| {
                            let msg = p
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| p.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "engine panicked".into());
                            Verdict::new(e.name(), Status::Unknown(UnknownReason::EngineError(msg)))
                        });
                        recertify(q, v)
                    })
                    .collect();
                QueryVerdicts {
                    id: q.id.clone(),
                    verdicts,
                    time_s: start.elapsed().as_secs_f64(),
                }
            })
            .collect()
    };
    Ok(match worker_pool() {
        Some(pool) => pool.install(run),
        None => run(),
    })
}

fn recertify(query: &Query, v: Verdict) -> Verdict {
    let Status::Unsafe(cex) = &v.status else {
        return v;
    };
    match certify_counterexample(query, cex, DEFAULT_CERT_TOLERANCE) {
        Ok(()) => v,
        Err(rej) => Verdict {
            status: Status::Unknown(UnknownReason::Uncertified(rej.to_string())),
            ..v
        },
    }
}

/// Why a counterexample was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("counterexample belongs to query {got}, not {expected}")]
    WrongQuery { expected: String, got: String },
    #[error(transparent)]
    Check(#[from] CheckFailure),
}

/// Replays `cex` through both copies of the query's network and checks
/// bounds, input constraints, and the output target.
pub fn certify_counterexample(query: &Query, cex: &Counterexample, tol: f64) -> Result<(), Rejection> {
    if cex.query_id != query.id {
        return Err(Rejection::WrongQuery {
            expected: query.id.clone(),
            got: cex.query_id.clone(),
        });
    }
    query.check_point(&cex.x, &cex.s, tol)?;
    Ok(())
}

/// Certified Unsafe beats Safe beats Unknown. Unsafe inputs must already be
/// certified, as [`dispatch`] guarantees.
pub fn merge_engine_verdicts(query_id: &str, verdicts: &[Verdict]) -> Result<Verdict, OrchestratorError> {
    let safe = verdicts.iter().find(|v| v.status == Status::Safe);
    let unsafe_ = verdicts.iter().find(|v| matches!(v.status, Status::Unsafe(_)));
    match (safe, unsafe_) {
        (Some(s), Some(u)) => Err(OrchestratorError::Conflict {
            query_id: query_id.to_string(),
            safe_engine: s.engine.clone(),
            unsafe_engine: u.engine.clone(),
            safe: Box::new(s.clone()),
            unsafe_verdict: Box::new(u.clone()),
        }),
        (_, Some(u)) => Ok(u.clone()),
        (Some(s), None) => Ok(s.clone()),
        (None, None) => verdicts
            .first()
            .cloned()
            .ok_or_else(|| OrchestratorError::MissingQuery(query_id.to_string())),
    }
}

/// Writes both sides of a conflict to `dir` for inspection.
pub fn dump_conflict(err: &OrchestratorError, dir: &Path) -> Result<Vec<PathBuf>, OrchestratorError> {
    let OrchestratorError::Conflict {
        query_id,
        safe,
        unsafe_verdict,
        ..
    } = err
    else {
        return Ok(Vec::new());
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = file_stem(query_id);
    let mut paths = Vec::new();
    for (tag, v) in [("safe", safe), ("unsafe", unsafe_verdict)] {
        let path = dir.join(format!("{stem}.conflict.{tag}.json"));
        let body = serde_json::json!({
            "query": query_id,
            "verdict": v,
            "counterexample": v.counterexample(),
        });
        let text = serde_json::to_string_pretty(&body).expect("verdicts serialize");
        json::write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Safe,
    Violated,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub safe: usize,
    pub unsafe_: usize,
    pub unknown: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.safe + self.unsafe_ + self.unknown
    }
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub id: String,
    pub engine_verdicts: Vec<Verdict>,
    pub merged: Verdict,
    pub time_s: f64,
}

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub property: String,
    pub coverage_pct: f64,
    pub queries: Vec<QueryResult>,
    pub counts: Counts,
    pub aggregate: Aggregate,
}

impl PropertyResult {
    pub fn counterexamples(&self) -> impl Iterator<Item = &Counterexample> {
        self.queries.iter().filter_map(|q| q.merged.counterexample())
    }

    /// Zeroes every wall-clock field so reports are byte-stable.
    pub fn strip_timing(&mut self) {
        for q in &mut self.queries {
            q.time_s = 0.0;
            q.merged.wall_time_s = 0.0;
            q.engine_verdicts.iter_mut().for_each(|v| v.wall_time_s = 0.0);
        }
    }
}

/// Folds merged per-query results into the property verdict: Violated iff
/// some query is Unsafe, Safe iff all are Safe, Unknown otherwise. Results
/// are reordered to follow `expected_ids`.
pub fn aggregate_property(
    property: &str,
    coverage_pct: f64,
    expected_ids: &[String],
    results: Vec<QueryResult>,
) -> Result<PropertyResult, OrchestratorError> {
    let mut by_id: HashMap<String, QueryResult> = HashMap::with_capacity(results.len());
    for r in results {
        if !expected_ids.contains(&r.id) || by_id.contains_key(&r.id) {
            return Err(OrchestratorError::UnexpectedQuery(r.id));
        }
        by_id.insert(r.id.clone(), r);
    }
    let mut queries = Vec::with_capacity(expected_ids.len());
    let mut counts = Counts::default();
    for id in expected_ids {
        let r = by_id.remove(id).ok_or_else(|| OrchestratorError::MissingQuery(id.clone()))?;
        match r.merged.status {
            Status::Safe => counts.safe += 1,
            Status::Unsafe(_) => counts.unsafe_ += 1,
            Status::Unknown(_) => counts.unknown += 1,
        }
        queries.push(r);
    }
    let aggregate = if counts.unsafe_ > 0 {
        Aggregate::Violated
    } else if counts.unknown == 0 {
        Aggregate::Safe
    } else {
        Aggregate::Unknown
    };
    Ok(PropertyResult {
        property: property.to_string(),
        coverage_pct,
        queries,
        counts,
        aggregate,
    })
}

/// Decomposes, dispatches, merges, and aggregates one property.
pub fn verify_property(
    net: &Network,
    prop: &PropertySpec,
    engines: &[Box<dyn Engine>],
    budget: Budget,
) -> Result<PropertyResult, OrchestratorError> {
    let queries = generate_queries(net, prop)?;
    verify_queries(&prop.name, prop.coverage_pct, &queries, engines, budget)
}

pub fn verify_queries(
    property: &str,
    coverage_pct: f64,
    queries: &[Query],
    engines: &[Box<dyn Engine>],
    budget: Budget,
) -> Result<PropertyResult, OrchestratorError> {
    let dispatched = dispatch(queries, engines, budget)?;
    let mut results = Vec::with_capacity(dispatched.len());
    for d in dispatched {
        let merged = merge_engine_verdicts(&d.id, &d.verdicts)?;
        results.push(QueryResult {
            id: d.id,
            engine_verdicts: d.verdicts,
            merged,
            time_s: d.time_s,
        });
    }
    let ids: Vec<String> = queries.iter().map(|q| q.id.clone()).collect();
    aggregate_property(property, coverage_pct, &ids, results)
}

#[derive(Serialize)]
struct ReportCounterexample<'a> {
    #[serde(flatten)]
    cex: &'a Counterexample,
    action1: Option<f64>,
    action2: Option<f64>,
}

#[derive(Serialize)]
struct ReportQuery<'a> {
    id: &'a str,
    engine_verdicts: &'a [Verdict],
    merged: &'a Verdict,
    time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<ReportCounterexample<'a>>,
}

#[derive(Serialize)]
struct ReportCounts {
    safe: usize,
    #[serde(rename = "unsafe")]
    unsafe_: usize,
    unknown: usize,
    total: usize,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    tool_version: &'a str,
    model: &'a str,
    property: &'a str,
    coverage: f64,
    queries: Vec<ReportQuery<'a>>,
    counts: ReportCounts,
    aggregate: Aggregate,
}

/// JSON report for one property at one coverage level. Counterexamples
/// carry the actions the deployed agent takes in each copy.
pub fn report_json(model: &str, net: &Network, result: &PropertyResult) -> String {
    let doc = ReportDoc {
        tool_version: TOOL_VERSION,
        model,
        property: &result.property,
        coverage: result.coverage_pct,
        queries: result
            .queries
            .iter()
            .map(|q| ReportQuery {
                id: &q.id,
                engine_verdicts: &q.engine_verdicts,
                merged: &q.merged,
                time_s: q.time_s,
                counterexample: q.merged.counterexample().map(|cex| ReportCounterexample {
                    cex,
                    action1: net.decode_action(&cex.logits1).ok(),
                    action2: net.decode_action(&cex.logits2).ok(),
                }),
            })
            .collect(),
        counts: ReportCounts {
            safe: result.counts.safe,
            unsafe_: result.counts.unsafe_,
            unknown: result.counts.unknown,
            total: result.counts.total(),
        },
        aggregate: result.aggregate,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// One CSV row per query.
pub fn report_csv(result: &PropertyResult) -> String {
    let mut s = String::from("property,coverage,query,merged,engine,time_s,subdomains,reason\n");
    for q in &result.queries {
        let reason = match &q.merged.status {
            Status::Unknown(r) => r.to_string().replace(',', ";"),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            result.property,
            result.coverage_pct,
            q.id,
            q.merged.status.label(),
            q.merged.engine,
            q.time_s,
            q.merged.subdomains_explored,
            reason
        );
    }
    s
}

/// File-system friendly form of a query id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Paths written for one exported query.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub network: PathBuf,
    pub constraints: PathBuf,
    /// Where an external solver is expected to leave its answer.
    pub result: PathBuf,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the coupled network and the constraint file for `query` into `dir`.
pub fn export_query(query: &Query, dir: &Path) -> Result<Bundle, OrchestratorError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = file_stem(&query.id);
    let net_name = format!("{stem}.net.json");
    let network = dir.join(&net_name);
    query.system.flat().save(&network)?;

    let mut text = String::from("diffq 1\n");
    let _ = writeln!(text, "id {}", query.id);
    let _ = writeln!(text, "net {net_name}");
    if let QueryTarget::Pair(p) = &query.target {
        let _ = writeln!(text, "pair {} {}", p.i1, p.i2);
    }
    for (k, iv) in query.z_box().iter().enumerate() {
        let _ = writeln!(text, "input {k} {} {}", fmt_f(iv.lo()), fmt_f(iv.hi()));
    }
    for c in &query.output_constraints {
        let coeffs: Vec<String> = c.coeffs.iter().map(|v| fmt_f(*v)).collect();
        let _ = writeln!(text, "lin {} <= {}", coeffs.join(" "), fmt_f(c.rhs));
    }
    for c in &query.input_constraints {
        let coeffs: Vec<String> = c.coeffs.iter().map(|v| fmt_f(*v)).collect();
        let _ = writeln!(text, "inlin {} <= {}", coeffs.join(" "), fmt_f(c.rhs));
    }
    let constraints = dir.join(format!("{stem}.diffq"));
    json::write_atomic(&constraints, text.as_bytes()).map_err(io_err(&constraints))?;
    Ok(Bundle {
        network,
        constraints,
        result: dir.join(format!("{stem}.result")),
    })
}

/// A constraint file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuery {
    pub id: Option<String>,
    pub net: PathBuf,
    pub pair: Option<InvalidPair>,
    pub inputs: Vec<Interval>,
    pub outputs: Vec<OutputConstraint>,
    pub input_constraints: Vec<InputConstraint>,
}

fn parse_linear(tokens: &[&str], path: &str, line: usize) -> Result<(Vec<f64>, f64), OrchestratorError> {
    let bad = |reason: String| OrchestratorError::Malformed {
        path: path.to_string(),
        line,
        reason,
    };
    if tokens.len() < 3 {
        return Err(bad("expected coefficients, a relation, and a right-hand side".into()));
    }
    let (coeffs, tail) = tokens.split_at(tokens.len() - 2);
    let mut c: Vec<f64> = coeffs
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
        .collect::<Result<_, _>>()?;
    let mut rhs: f64 = tail[1].parse().map_err(|_| bad(format!("bad number `{}`", tail[1])))?;
    match tail[0] {
        "<=" => {}
        ">=" => {
            c.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
        }
        op => return Err(bad(format!("unknown relation `{op}`"))),
    }
    Ok((c, rhs))
}

pub fn parse_query_file(path: &Path) -> Result<ParsedQuery, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let p = path.display().to_string();
    let bad = |line: usize, reason: String| OrchestratorError::Malformed {
        path: p.clone(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, "diffq 1")) => {}
        Some((n, l)) => return Err(bad(n, format!("expected header `diffq 1`, found `{l}`"))),
        None => return Err(bad(0, "empty file".into())),
    }
    let mut q = ParsedQuery {
        id: None,
        net: PathBuf::new(),
        pair: None,
        inputs: Vec::new(),
        outputs: Vec::new(),
        input_constraints: Vec::new(),
    };
    let mut net = None;
    let mut inputs: Vec<(usize, Interval)> = Vec::new();
    for (n, line) in lines {
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        match head {
            "id" => q.id = Some(rest.trim().to_string()),
            "net" => net = Some(PathBuf::from(rest.trim())),
            "pair" => {
                let [a, b] = tokens[..] else {
                    return Err(bad(n, "pair takes two indices".into()));
                };
                let parse = |t: &str| t.parse::<usize>().map_err(|_| bad(n, format!("bad index `{t}`")));
                q.pair = Some(InvalidPair { i1: parse(a)?, i2: parse(b)? });
            }
            "input" => {
                let [k, lo, hi] = tokens[..] else {
                    return Err(bad(n, "input takes an index and two bounds".into()));
                };
                let k: usize = k.parse().map_err(|_| bad(n, format!("bad index `{k}`")))?;
                let lo: f64 = lo.parse().map_err(|_| bad(n, format!("bad number `{lo}`")))?;
                let hi: f64 = hi.parse().map_err(|_| bad(n, format!("bad number `{hi}`")))?;
                let iv = Interval::new(lo, hi).map_err(|e| bad(n, e.to_string()))?;
                inputs.push((k, iv));
            }
            "lin" => {
                let (coeffs, rhs) = parse_linear(&tokens, &p, n)?;
                q.outputs.push(OutputConstraint { coeffs, rhs });
            }
            "inlin" => {
                let (coeffs, rhs) = parse_linear(&tokens, &p, n)?;
                q.input_constraints.push(InputConstraint { coeffs, rhs });
            }
            other => return Err(bad(n, format!("unknown directive `{other}`"))),
        }
    }
    q.net = net.ok_or_else(|| bad(0, "missing `net` line".into()))?;
    inputs.sort_by_key(|(k, _)| *k);
    for (expect, (k, _)) in inputs.iter().enumerate() {
        if *k != expect {
            return Err(bad(0, format!("input bounds must cover indices 0..{} exactly once", inputs.len())));
        }
    }
    q.inputs = inputs.into_iter().map(|(_, iv)| iv).collect();
    Ok(q)
}

impl ParsedQuery {
    /// Rebuilds a query against `net` (the single-copy network). The
    /// flattened input width must be twice the network's input width.
    pub fn into_query(self, net: Arc<Network>, fallback_id: &str) -> Result<Query, OrchestratorError> {
        let n = net.input_width();
        let m = net.output_width();
        let structural = |reason: String| OrchestratorError::Malformed {
            path: self.net.display().to_string(),
            line: 0,
            reason,
        };
        if self.inputs.len() != 2 * n {
            return Err(structural(format!("{} input bounds for a coupled width of {}", self.inputs.len(), 2 * n)));
        }
        if let Some(c) = self.outputs.iter().find(|c| c.coeffs.len() != 2 * m) {
            return Err(structural(format!("output constraint with {} coefficients, expected {}", c.coeffs.len(), 2 * m)));
        }
        if let Some(c) = self.input_constraints.iter().find(|c| c.coeffs.len() != 2 * n) {
            return Err(structural(format!("input constraint with {} coefficients, expected {}", c.coeffs.len(), 2 * n)));
        }
        if let Some(p) = self.pair {
            if p.i1 >= m || p.i2 >= m {
                return Err(structural(format!("pair ({}, {}) out of range for {m} outputs", p.i1, p.i2)));
            }
        }
        let id = self.id.clone().unwrap_or_else(|| fallback_id.to_string());
        let property = id.split('/').next().unwrap_or(&id).to_string();
        let target = match self.pair {
            Some(p) => QueryTarget::Pair(p),
            None => QueryTarget::Linear,
        };
        let mut q = Query::new(
            id,
            property,
            CoupledSystem::new(net),
            target,
            InputDomain::new(self.inputs[..n].to_vec()),
            SlackSpec {
                per_feature: self.inputs[n..].to_vec(),
            },
            self.input_constraints,
        );
        if matches!(q.target, QueryTarget::Linear) {
            q.output_constraints = self.outputs;
        }
        Ok(q)
    }
}

/// Reads a result file and turns it into a verdict for `query`. A `sat`
/// assignment is replayed and demoted to Unknown if it fails.
pub fn import_result(path: &Path, query: &Query) -> Result<Verdict, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let p = path.display().to_string();
    let bad = |line: usize, reason: String| OrchestratorError::Malformed {
        path: p.clone(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let engine = "import";
    let status = match lines.next() {
        Some((_, "unsat")) => Status::Safe,
        Some((_, "timeout")) => Status::Unknown(UnknownReason::Timeout),
        Some((_, "sat")) => {
            let width = 2 * query.system.input_width();
            let mut z: Vec<Option<f64>> = vec![None; width];
            for (n, line) in lines {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let ["x", k, v] = tokens[..] else {
                    return Err(bad(n, format!("expected `x <k> <value>`, found `{line}`")));
                };
                let k: usize = k.parse().map_err(|_| bad(n, format!("bad index `{k}`")))?;
                let v: f64 = v.parse().map_err(|_| bad(n, format!("bad number `{v}`")))?;
                if k >= width {
                    return Err(bad(n, format!("index {k} out of range for {width} inputs")));
                }
                z[k] = Some(v);
            }
            let z: Vec<f64> = z
                .into_iter()
                .enumerate()
                .map(|(k, v)| v.ok_or_else(|| bad(0, format!("assignment misses input {k}"))))
                .collect::<Result<_, _>>()?;
            let (x, s) = z.split_at(width / 2);
            match query.check_point(x, s, DEFAULT_CERT_TOLERANCE) {
                Ok(replay) => Status::Unsafe(Box::new(Counterexample::from_replay(query, x.to_vec(), s.to_vec(), replay))),
                Err(e) => Status::Unknown(UnknownReason::Uncertified(e.to_string())),
            }
        }
        Some((n, l)) => return Err(bad(n, format!("expected sat, unsat, or timeout, found `{l}`"))),
        None => return Err(bad(0, "empty result file".into())),
    };
    Ok(Verdict::new(engine, status))
}

/// Writes a verdict in result-file form. Unknown verdicts of any kind are
/// written as `timeout`.
pub fn write_result(path: &Path, verdict: &Verdict) -> Result<(), OrchestratorError> {
    let mut text = String::new();
    match &verdict.status {
        Status::Safe => text.push_str("unsat\n"),
        Status::Unknown(_) => text.push_str("timeout\n"),
        Status::Unsafe(cex) => {
            text.push_str("sat\n");
            for (k, v) in cex.x.iter().chain(&cex.s).enumerate() {
                let _ = writeln!(text, "x {k} {}", fmt_f(*v));
            }
        }
    }
    json::write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babverify::Achieved;

    fn cex(id: &str) -> Box<Counterexample> {
        Box::new(Counterexample {
            query_id: id.into(),
            x: vec![0.0],
            s: vec![0.0],
            logits1: vec![0.0],
            logits2: vec![0.0],
            achieved: Achieved::Outputs,
        })
    }

    fn v(engine: &str, status: Status) -> Verdict {
        Verdict::new(engine, status)
    }

    fn unknown() -> Status {
        Status::Unknown(UnknownReason::Timeout)
    }

    fn result(id: &str, status: Status) -> QueryResult {
        QueryResult {
            id: id.into(),
            engine_verdicts: vec![],
            merged: v("e", status),
            time_s: 0.0,
        }
    }

    #[test]
    fn merge_truth_table() {
        let m = merge_engine_verdicts("q", &[v("a", Status::Safe), v("b", unknown())]).unwrap();
        assert_eq!(m.status, Status::Safe);
        let m = merge_engine_verdicts("q", &[v("a", unknown()), v("b", Status::Unsafe(cex("q")))]).unwrap();
        assert!(matches!(m.status, Status::Unsafe(_)));
        assert_eq!(m.engine, "b");
        let m = merge_engine_verdicts("q", &[v("a", unknown()), v("b", Status::Unknown(UnknownReason::NoResult))]).unwrap();
        assert_eq!(m.status, unknown());
        let err = merge_engine_verdicts("q", &[v("a", Status::Safe), v("b", Status::Unsafe(cex("q")))]).unwrap_err();
        assert!(matches!(err, OrchestratorError::Conflict { .. }));
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(dump_conflict(&err, dir.path()).unwrap().len(), 2);
        assert!(merge_engine_verdicts("q", &[]).is_err());
    }

    #[test]
    fn aggregate_truth_table() {
        let ids: Vec<String> = (0..3).map(|i| format!("p/{i}")).collect();
        let all = |s: Status| ids.iter().map(|i| result(i, s.clone())).collect::<Vec<_>>();
        let r = aggregate_property("p", 100.0, &ids, all(Status::Safe)).unwrap();
        assert_eq!(r.aggregate, Aggregate::Safe);
        assert_eq!(r.counts.total(), 3);

        let mut mixed = all(Status::Safe);
        mixed[1] = result(&ids[1], unknown());
        let r = aggregate_property("p", 100.0, &ids, mixed.clone()).unwrap();
        assert_eq!(r.aggregate, Aggregate::Unknown);

        mixed[2] = result(&ids[2], Status::Unsafe(cex(&ids[2])));
        let r = aggregate_property("p", 100.0, &ids, mixed).unwrap();
        assert_eq!(r.aggregate, Aggregate::Violated);
        assert_eq!((r.counts.safe, r.counts.unsafe_, r.counts.unknown), (1, 1, 1));

        let mut missing = all(Status::Safe);
        missing.pop();
        assert!(matches!(
            aggregate_property("p", 100.0, &ids, missing),
            Err(OrchestratorError::MissingQuery(_))
        ));
        let r = aggregate_property("p", 100.0, &[], vec![]).unwrap();
        assert_eq!(r.aggregate, Aggregate::Safe);
    }

    #[test]
    fn result_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::new(
            "n",
            1,
            vec![crate::tensornet::Layer::Affine(
                crate::tensornet::AffineLayer::from_rows(vec![vec![1.0], vec![0.0]], vec![0.0, 0.5]).unwrap(),
            )],
            crate::tensornet::ActionDecoder::Discrete {
                action_values: vec![0.0, 1.0],
            },
        )
        .unwrap();
        let prop = crate::propspec::make_robustness(InputDomain::uniform(1, Interval::new(0.0, 1.0).unwrap()), 0.1, 1.0).unwrap();
        let q = &generate_queries(&net, &prop).unwrap()[0]; // copy 1 → 0 (x ≥ 0.5), copy 2 → 1
        let path = dir.path().join("r");
        fs::write(&path, "unsat\n").unwrap();
        assert_eq!(import_result(&path, q).unwrap().status, Status::Safe);
        fs::write(&path, "timeout\n").unwrap();
        assert_eq!(import_result(&path, q).unwrap().status, unknown());
        fs::write(&path, "sat\nx 0 0.55\nx 1 -0.1\n").unwrap();
        assert!(matches!(import_result(&path, q).unwrap().status, Status::Unsafe(_)));
        fs::write(&path, "sat\nx 0 0.9\nx 1 0.0\n").unwrap();
        assert!(matches!(
            import_result(&path, q).unwrap().status,
            Status::Unknown(UnknownReason::Uncertified(_))
        ));
        fs::write(&path, "sat\nx 0 0.9\n").unwrap();
        assert!(import_result(&path, q).is_err());
        fs::write(&path, "maybe\n").unwrap();
        assert!(import_result(&path, q).is_err());
    }
}
