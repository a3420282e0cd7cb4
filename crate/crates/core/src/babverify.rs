//! Native complete engine: falsification search followed by input-domain
//! branch-and-bound over `z = (x, s)`.
//!
//! Each subdomain is bounded with [`QueryBounder`]; subdomains whose output
//! constraints are provably unsatisfiable are pruned, the rest are split at
//! the midpoint of their widest dimension. A query is Safe once every
//! subdomain is pruned and Unsafe as soon as a replay-checked point is found.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{QueryBounder, Tightened};
use crate::encoder::{Query, QueryTarget, Replay};
use crate::interval::Interval;
use crate::propspec::{InputDomain, SlackSpec};

pub const ENGINE_NAME: &str = "native-bab";

/// Tolerance used when the engine replays its own candidate points.
pub const CERT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub timeout_s: f64,
    pub max_subdomains: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            timeout_s: 600.0,
            max_subdomains: 100_000,
        }
    }
}

/// Search parameters of the native engine.
#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    pub seed: u64,
    pub falsify_samples: usize,
    pub descent_steps: usize,
    /// x dimensions narrower than this fraction of their root width are
    /// left alone while any s dimension can still be split.
    pub x_split_fraction: f64,
    /// Subdomains with every width below this are decided by their center.
    pub closure_width: f64,
    pub tightening_rounds: usize,
}

impl Default for BabConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            falsify_samples: 4096,
            descent_steps: 200,
            x_split_fraction: 1e-4,
            closure_width: 1e-9,
            tightening_rounds: 4,
        }
    }
}

/// What the counterexample achieves.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Achieved {
    Pair { i1: usize, i2: usize },
    Means { mean1: f64, mean2: f64 },
    Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub query_id: String,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub logits1: Vec<f64>,
    pub logits2: Vec<f64>,
    pub achieved: Achieved,
}

impl Counterexample {
    pub fn from_replay(query: &Query, x: Vec<f64>, s: Vec<f64>, replay: Replay) -> Self {
        let achieved = match &query.target {
            QueryTarget::Pair(p) => Achieved::Pair { i1: p.i1, i2: p.i2 },
            QueryTarget::Continuous { mean_index, .. } => Achieved::Means {
                mean1: replay.logits1[*mean_index],
                mean2: replay.logits2[*mean_index],
            },
            QueryTarget::Linear => Achieved::Outputs,
        };
        Self {
            query_id: query.id.clone(),
            x,
            s,
            logits1: replay.logits1,
            logits2: replay.logits2,
            achieved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum UnknownReason {
    Timeout,
    BudgetExhausted,
    /// A claimed counterexample failed replay.
    Uncertified(String),
    EngineError(String),
    /// An external engine has not produced a result file yet.
    NoResult,
}

impl std::fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnknownReason::Timeout => f.write_str("timeout"),
            UnknownReason::BudgetExhausted => f.write_str("budget exhausted"),
            UnknownReason::Uncertified(d) => write!(f, "uncertified: {d}"),
            UnknownReason::EngineError(d) => write!(f, "engine error: {d}"),
            UnknownReason::NoResult => f.write_str("no result"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Safe,
    Unsafe(Box<Counterexample>),
    Unknown(UnknownReason),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Safe => "safe",
            Status::Unsafe(_) => "unsafe",
            Status::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub wall_time_s: f64,
    pub subdomains_explored: usize,
    pub engine: String,
    pub note: Option<String>,
}

impl Verdict {
    pub fn new(engine: impl Into<String>, status: Status) -> Self {
        Self {
            status,
            wall_time_s: 0.0,
            subdomains_explored: 0,
            engine: engine.into(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match &self.status {
            Status::Unsafe(c) => Some(c),
            _ => None,
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Record<'a> {
            engine: &'a str,
            status: &'static str,
            #[serde(skip_serializing_if = "Option::is_none")]
            unknown: Option<&'a UnknownReason>,
            wall_time_s: f64,
            subdomains_explored: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            note: Option<&'a str>,
        }
        Record {
            engine: &self.engine,
            status: self.status.label(),
            unknown: match &self.status {
                Status::Unknown(r) => Some(r),
                _ => None,
            },
            wall_time_s: self.wall_time_s,
            subdomains_explored: self.subdomains_explored,
            note: self.note.as_deref(),
        }
        .serialize(serializer)
    }
}

/// A box over `(x, s)` awaiting a decision.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDomain {
    pub x_box: InputDomain,
    pub s_box: SlackSpec,
    pub depth: usize,
    /// Upper bound on the best achievable constraint margin; larger is
    /// explored first.
    pub score: f64,
}

impl SubDomain {
    pub fn root(query: &Query) -> Self {
        Self {
            x_box: query.x_bounds.clone(),
            s_box: query.s_bounds.clone(),
            depth: 0,
            score: f64::INFINITY,
        }
    }

    fn z_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let it = self.x_box.per_feature.iter().chain(&self.s_box.per_feature);
        (it.clone().map(Interval::lo).collect(), it.map(Interval::hi).collect())
    }

    fn from_z(lo: &[f64], hi: &[f64], n: usize, depth: usize, score: f64) -> Self {
        let iv = |k: usize| Interval::new(lo[k], hi[k].max(lo[k])).expect("finite box");
        Self {
            x_box: InputDomain::new((0..n).map(iv).collect()),
            s_box: SlackSpec {
                per_feature: (n..2 * n).map(iv).collect(),
            },
            depth,
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BranchError {
    #[error("every interval of the subdomain is degenerate")]
    Degenerate,
}

/// Splits the widest interval at its midpoint: x dimensions first, then s
/// dimensions, ties to the lowest index.
pub fn branch(sub: &SubDomain) -> Result<(SubDomain, SubDomain), BranchError> {
    let widths: Vec<f64> = sub.x_box.per_feature.iter().map(Interval::width).collect();
    branch_with(sub, &widths, 0.0)
}

/// Like [`branch`], but x dimensions whose width is at most
/// `x_min_fraction × root_x_widths[i]` are skipped while an s dimension can
/// still be split.
pub fn branch_with(sub: &SubDomain, root_x_widths: &[f64], x_min_fraction: f64) -> Result<(SubDomain, SubDomain), BranchError> {
    let widest = |ivs: &[Interval], min: &dyn Fn(usize) -> f64| {
        let mut best: Option<(usize, f64)> = None;
        for (i, iv) in ivs.iter().enumerate() {
            let w = iv.width();
            if w > 0.0 && w > min(i) && best.is_none_or(|(_, bw)| w > bw) {
                best = Some((i, w));
            }
        }
        best.map(|(i, _)| i)
    };
    let x = &sub.x_box.per_feature;
    let s = &sub.s_box.per_feature;
    let choice = widest(x, &|i| x_min_fraction * root_x_widths.get(i).copied().unwrap_or(0.0))
        .map(|i| (true, i))
        .or_else(|| widest(s, &|_| 0.0).map(|i| (false, i)))
        .or_else(|| widest(x, &|_| 0.0).map(|i| (true, i)))
        .ok_or(BranchError::Degenerate)?;
    let mut a = sub.clone();
    let mut b = sub.clone();
    a.depth += 1;
    b.depth += 1;
    let (ia, ib) = match choice {
        (true, i) => (&mut a.x_box.per_feature[i], &mut b.x_box.per_feature[i]),
        (false, i) => (&mut a.s_box.per_feature[i], &mut b.s_box.per_feature[i]),
    };
    let (lo_half, hi_half) = ia.bisect();
    *ia = lo_half;
    *ib = hi_half;
    Ok((a, b))
}

/// Margin by which `z` satisfies the query: the minimum slack over all
/// output and input constraints (non-negative iff all hold).
fn margin(query: &Query, z: &[f64]) -> f64 {
    let y = match query.system.flat().forward(z) {
        Ok(y) => y,
        Err(_) => return f64::NEG_INFINITY,
    };
    let out = query.output_constraints.iter().map(|c| c.rhs - c.value(&y));
    let inp = query.input_constraints.iter().map(|c| c.rhs - c.value(z));
    let m = out.chain(inp).fold(f64::INFINITY, f64::min);
    if m.is_nan() {
        f64::NEG_INFINITY
    } else {
        m
    }
}

fn certify_z(query: &Query, z: &[f64]) -> Option<Counterexample> {
    let n = query.system.input_width();
    let (x, s) = z.split_at(n);
    query
        .check_point(x, s, CERT_TOLERANCE)
        .ok()
        .map(|r| Counterexample::from_replay(query, x.to_vec(), s.to_vec(), r))
}

/// Random sampling in the query box followed by coordinate descent on the
/// constraint margin from the best samples. Any returned point has passed
/// replay.
pub fn falsify(query: &Query, samples: usize, descent_steps: usize, seed: u64) -> Option<Counterexample> {
    falsify_until(query, samples, descent_steps, seed, None)
}

fn falsify_until(
    query: &Query,
    samples: usize,
    descent_steps: usize,
    seed: u64,
    deadline: Option<Instant>,
) -> Option<Counterexample> {
    let zb = query.z_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        zb.iter()
            .map(|iv| if iv.is_degenerate() { iv.lo() } else { rng.random_range(iv.lo()..=iv.hi()) })
            .collect()
    };
    let expired = || deadline.is_some_and(|d| Instant::now() >= d);

    const STARTS: usize = 4;
    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(STARTS + 1);
    let consider = |m: f64, z: Vec<f64>, best: &mut Vec<(f64, Vec<f64>)>| {
        best.push((m, z));
        best.sort_by(|a, b| b.0.total_cmp(&a.0));
        best.truncate(STARTS);
    };
    let center: Vec<f64> = zb.iter().map(Interval::mid).collect();
    for i in 0..=samples {
        if i % 256 == 0 && expired() {
            return None;
        }
        let z = if i == 0 { center.clone() } else { draw(&mut rng) };
        let m = margin(query, &z);
        if m >= 0.0 {
            if let Some(c) = certify_z(query, &z) {
                return Some(c);
            }
        }
        consider(m, z, &mut best);
    }

    for (mut m, mut z) in best {
        let mut step: Vec<f64> = zb.iter().map(|iv| 0.1 * iv.width()).collect();
        for _ in 0..descent_steps {
            if expired() {
                return None;
            }
            let mut improved = false;
            for k in 0..z.len() {
                if step[k] <= 0.0 {
                    continue;
                }
                for dir in [1.0, -1.0] {
                    let mut cand = z.clone();
                    cand[k] = (z[k] + dir * step[k]).clamp(zb[k].lo(), zb[k].hi());
                    let cm = margin(query, &cand);
                    if cm > m {
                        m = cm;
                        z = cand;
                        improved = true;
                        break;
                    }
                }
            }
            if m >= 0.0 {
                if let Some(c) = certify_z(query, &z) {
                    return Some(c);
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
                if step.iter().all(|&s| s < 1e-12) {
                    break;
                }
            }
        }
    }
    None
}

/// True when the slack box is `{0}` and the query asks the two copies to
/// behave differently, which identical inputs cannot do.
fn identical_copies_rule(query: &Query) -> bool {
    if !query.s_bounds.is_zero() {
        return false;
    }
    match &query.target {
        QueryTarget::Pair(p) => p.i1 != p.i2,
        QueryTarget::Continuous { copy1, copy2, .. } => {
            // Falling: copy1 ≥ a and copy2 ≤ b with b < a (and the mirror).
            let falling = matches!((copy1.0, copy2.1), (Some(a), Some(b)) if b < a);
            let rising = matches!((copy1.1, copy2.0), (Some(a), Some(b)) if b > a);
            falling || rising
        }
        QueryTarget::Linear => false,
    }
}

#[derive(Debug)]
struct Entry {
    score: f64,
    seq: u64,
    sub: SubDomain,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest score first, then earliest insertion.
        self.score.total_cmp(&other.score).then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Outcome {
    Pruned { closure: bool },
    Found(Box<Counterexample>),
    Split(SubDomain, SubDomain),
    Skipped,
}

struct Search<'a> {
    query: &'a Query,
    bounder: QueryBounder,
    config: &'a BabConfig,
    root_x_widths: Vec<f64>,
    n: usize,
}

impl Search<'_> {
    fn process(&self, sub: &SubDomain) -> Outcome {
        let (lo, hi) = sub.z_bounds();
        if lo.iter().zip(&hi).all(|(l, h)| h - l < self.config.closure_width) {
            let c: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + 0.5 * (h - l)).collect();
            return match certify_z(self.query, &c) {
                Some(cex) => Outcome::Found(Box::new(cex)),
                None => Outcome::Pruned { closure: true },
            };
        }
        let (lo, hi, lower) = match self.bounder.tighten(&lo, &hi) {
            Tightened::Infeasible(_) => return Outcome::Pruned { closure: false },
            Tightened::Feasible {
                lo,
                hi,
                constraint_lower,
            } => (lo, hi, constraint_lower),
        };
        let score = self
            .query
            .output_constraints
            .iter()
            .zip(&lower)
            .map(|(c, l)| c.rhs - l)
            .fold(f64::INFINITY, f64::min);
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + 0.5 * (h - l)).collect();
        if let Some(cex) = certify_z(self.query, &center) {
            return Outcome::Found(Box::new(cex));
        }
        let tightened = SubDomain::from_z(&lo, &hi, self.n, sub.depth, score);
        match branch_with(&tightened, &self.root_x_widths, self.config.x_split_fraction) {
            Ok((a, b)) => Outcome::Split(a, b),
            // Fully degenerate after tightening and the center failed replay.
            Err(BranchError::Degenerate) => Outcome::Pruned { closure: true },
        }
    }
}

/// [`verify_query_with`] under the default configuration.
pub fn verify_query(query: &Query, budget: Budget) -> Verdict {
    verify_query_with(query, budget, &BabConfig::default())
}

pub fn verify_query_with(query: &Query, budget: Budget, config: &BabConfig) -> Verdict {
    let start = Instant::now();
    let finish = |status: Status, explored: usize, note: Option<String>| Verdict {
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        subdomains_explored: explored,
        engine: ENGINE_NAME.to_string(),
        note,
    };
    if !(budget.timeout_s > 0.0) {
        return finish(Status::Unknown(UnknownReason::Timeout), 0, None);
    }
    let deadline = start + Duration::from_secs_f64(budget.timeout_s.min(1e9));

    if identical_copies_rule(query) {
        return finish(Status::Safe, 0, Some("zero slack: both copies see the same input".into()));
    }

    let n = query.system.input_width();
    let search = Search {
        query,
        bounder: QueryBounder::new(query).with_rounds(config.tightening_rounds),
        config,
        root_x_widths: query.x_bounds.per_feature.iter().map(Interval::width).collect(),
        n,
    };
    // Falsification is wasted effort on queries the root bounds already refute.
    let (root_lo, root_hi) = SubDomain::root(query).z_bounds();
    if budget.max_subdomains > 0 && matches!(search.bounder.tighten(&root_lo, &root_hi), Tightened::Infeasible(_)) {
        return finish(Status::Safe, 1, None);
    }

    if let Some(cex) = falsify_until(query, config.falsify_samples, config.descent_steps, config.seed, Some(deadline)) {
        return finish(Status::Unsafe(Box::new(cex)), 0, Some("falsification".into()));
    }
    if Instant::now() >= deadline {
        return finish(Status::Unknown(UnknownReason::Timeout), 0, None);
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Entry {
        score: f64::INFINITY,
        seq,
        sub: SubDomain::root(query),
    });
    let mut explored = 0usize;
    let mut closures = 0usize;
    let batch_size = 16 * rayon::current_num_threads();

    while !heap.is_empty() {
        if Instant::now() >= deadline {
            return finish(Status::Unknown(UnknownReason::Timeout), explored, None);
        }
        if explored >= budget.max_subdomains {
            return finish(Status::Unknown(UnknownReason::BudgetExhausted), explored, None);
        }
        let take = batch_size.min(budget.max_subdomains - explored).min(heap.len());
        let batch: Vec<SubDomain> = (0..take).map(|_| heap.pop().unwrap().sub).collect();
        let found_at = AtomicUsize::new(usize::MAX);
        let outcomes: Vec<Outcome> = batch
            .par_iter()
            .enumerate()
            .map(|(i, sub)| {
                if found_at.load(AtomicOrdering::Relaxed) < i {
                    return Outcome::Skipped;
                }
                let o = search.process(sub);
                if matches!(o, Outcome::Found(_)) {
                    found_at.fetch_min(i, AtomicOrdering::Relaxed);
                }
                o
            })
            .collect();
        // Merge in batch order so the result does not depend on scheduling.
        for o in outcomes {
            explored += 1;
            match o {
                Outcome::Found(cex) => {
                    let note = (closures > 0).then(|| format!("{closures} subdomains closed at tolerance"));
                    return finish(Status::Unsafe(cex), explored, note);
                }
                Outcome::Pruned { closure } => closures += usize::from(closure),
                Outcome::Split(a, b) => {
                    for sub in [a, b] {
                        seq += 1;
                        heap.push(Entry {
                            score: sub.score,
                            seq,
                            sub,
                        });
                    }
                }
                Outcome::Skipped => explored -= 1,
            }
        }
    }
    let note = (closures > 0).then(|| format!("tolerance-closure on {closures} subdomains"));
    finish(Status::Safe, explored, note)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::generate_queries;
    use crate::propspec::{make_robustness, PropertySpec};
    use crate::tensornet::{ActionDecoder, AffineLayer, Layer, Network};

    fn one_input_two_actions() -> Network {
        // logits (x, 0.5): action 1 below x = 0.5, action 0 above.
        Network::new(
            "cross",
            1,
            vec![Layer::Affine(AffineLayer::from_rows(vec![vec![1.0], vec![0.0]], vec![0.0, 0.5]).unwrap())],
            ActionDecoder::Discrete {
                action_values: vec![0.0, 1.0],
            },
        )
        .unwrap()
    }

    fn robustness(width: usize, eps: f64, d: f64) -> PropertySpec {
        make_robustness(InputDomain::uniform(width, Interval::new(0.0, 1.0).unwrap()), eps, d).unwrap()
    }

    #[test]
    fn branch_widest_first() {
        let sub = SubDomain {
            x_box: InputDomain::new(vec![Interval::new(0.0, 1.0).unwrap(), Interval::new(0.0, 4.0).unwrap()]),
            s_box: SlackSpec::zero(2),
            depth: 0,
            score: 0.0,
        };
        let (a, b) = branch(&sub).unwrap();
        assert_eq!(a.x_box.per_feature[1], Interval::new(0.0, 2.0).unwrap());
        assert_eq!(b.x_box.per_feature[1], Interval::new(2.0, 4.0).unwrap());
        assert_eq!(a.x_box.per_feature[0], sub.x_box.per_feature[0]);

        let flat = SubDomain {
            x_box: InputDomain::new(vec![Interval::point(0.5)]),
            s_box: SlackSpec::zero(1),
            depth: 0,
            score: 0.0,
        };
        assert_eq!(branch(&flat), Err(BranchError::Degenerate));
    }

    #[test]
    fn branch_moves_to_slack_once_x_is_narrow() {
        let sub = SubDomain {
            x_box: InputDomain::new(vec![Interval::new(0.0, 1e-5).unwrap()]),
            s_box: SlackSpec::symmetric(1, 1e-6).unwrap(),
            depth: 0,
            score: 0.0,
        };
        let (a, _) = branch_with(&sub, &[1.0], 1e-4).unwrap();
        assert_eq!(a.s_box.per_feature[0], Interval::new(-1e-6, 0.0).unwrap());
    }

    #[test]
    fn planted_crossing_is_found() {
        let net = one_input_two_actions();
        let qs = generate_queries(&net, &robustness(1, 0.05, 1.0)).unwrap();
        for q in &qs {
            let v = verify_query(q, Budget::default());
            let cex = v.counterexample().expect("crossing at x = 0.5 is reachable");
            let x = cex.x[0];
            assert!((x - 0.5).abs() <= 0.05 + 1e-9);
            assert!(q.check_point(&cex.x, &cex.s, 1e-9).is_ok());
        }
    }

    #[test]
    fn constant_network_is_safe() {
        let net = Network::new(
            "const",
            2,
            vec![
                Layer::Affine(AffineLayer::from_rows(vec![vec![0.0; 2]; 3], vec![0.0; 3]).unwrap()),
                Layer::Relu,
                Layer::Affine(AffineLayer::from_rows(vec![vec![0.0; 3]; 3], vec![0.1, 0.3, 0.2]).unwrap()),
            ],
            ActionDecoder::Discrete {
                action_values: vec![0.0, 1.0, 2.0],
            },
        )
        .unwrap();
        for q in generate_queries(&net, &robustness(2, 0.1, 1.0)).unwrap() {
            let v = verify_query(&q, Budget::default());
            assert_eq!(v.status, Status::Safe, "{}", q.id);
        }
    }

    #[test]
    fn zero_budget_and_timeout() {
        let net = one_input_two_actions();
        // Slack too small to cross from far away: restrict x so the query is
        // undecided by sampling but needs branching.
        let p = make_robustness(InputDomain::new(vec![Interval::new(0.0, 0.4).unwrap()]), 0.05, 1.0).unwrap();
        let q = &generate_queries(&net, &p).unwrap()[0];
        let v = verify_query(
            q,
            Budget {
                timeout_s: 600.0,
                max_subdomains: 0,
            },
        );
        assert_eq!(v.status, Status::Unknown(UnknownReason::BudgetExhausted));
        let v = verify_query(
            q,
            Budget {
                timeout_s: 0.0,
                max_subdomains: 10,
            },
        );
        assert_eq!(v.status, Status::Unknown(UnknownReason::Timeout));
        assert_eq!(verify_query(q, Budget::default()).status, Status::Safe);
    }

    #[test]
    fn zero_slack_is_safe() {
        let net = one_input_two_actions();
        let mut p = robustness(1, 0.05, 1.0);
        p.slack = SlackSpec::zero(1);
        for q in generate_queries(&net, &p).unwrap() {
            assert_eq!(verify_query(&q, Budget::default()).status, Status::Safe);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let net = one_input_two_actions();
        let q = &generate_queries(&net, &robustness(1, 0.05, 1.0)).unwrap()[0];
        let a = falsify(q, 100, 50, 7);
        let b = falsify(q, 100, 50, 7);
        assert_eq!(a, b);
    }
}
