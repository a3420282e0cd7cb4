//! Two-copy encoding of a property and its decomposition into queries.
//!
//! Copy 1 of the network sees the base input `x`, copy 2 sees `x + s`. For a
//! discrete agent every invalid action pair `(i1, i2)` becomes one query
//! asserting that copy 1 picks `i1` and copy 2 picks `i2`; the property is
//! violated exactly when some query is satisfiable. Each query is a
//! conjunction of linear constraints over the flattened coupled network whose
//! inputs are `z = (x, s)` and whose outputs are `[logits(x); logits(x + s)]`.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::interval::Interval;
use crate::propspec::{
    apply_coverage, ComparisonSpec, ContinuousAnchor, Criterion, DistanceMetric, InputDomain, LinearInputConstraint,
    PropertyError, PropertySpec, Relation, Reversal, SlackSpec,
};
use crate::tensornet::{ActionDecoder, AffineLayer, Layer, Network, NetworkError, Segment};

/// Copy-1 and copy-2 argmax targets are accepted if they are within this
/// distance of the maximum logit.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Property(#[from] PropertyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Both copies share one set of weights; `flat` is the materialized coupled
/// network over `(x, s)`.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    net: Arc<Network>,
    flat: Arc<Network>,
}

impl CoupledSystem {
    pub fn new(net: Arc<Network>) -> Self {
        let flat = Arc::new(flatten_coupled(&net));
        Self { net, flat }
    }

    pub fn net(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn flat(&self) -> &Arc<Network> {
        &self.flat
    }

    /// Width `n` of `x` (and of `s`).
    pub fn input_width(&self) -> usize {
        self.net.input_width()
    }

    /// Width `m` of one copy's logits.
    pub fn output_width(&self) -> usize {
        self.net.output_width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InvalidPair {
    pub i1: usize,
    pub i2: usize,
}

/// `coeffs · y ≤ rhs` over the flattened outputs `y` (length `2m`).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl OutputConstraint {
    pub fn value(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

/// `coeffs · z ≤ rhs` over the flattened inputs `z = (x, s)` (length `2n`).
#[derive(Debug, Clone, PartialEq)]
pub struct InputConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl InputConstraint {
    pub fn from_linear(c: &LinearInputConstraint) -> Self {
        let mut coeffs: Vec<f64> = c.coeffs_x.iter().chain(&c.coeffs_s).copied().collect();
        let mut rhs = c.rhs;
        if c.relation == Relation::Ge {
            coeffs.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
        }
        Self { coeffs, rhs }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().zip(z).map(|(c, v)| c * v).sum()
    }
}

/// What a query asserts about the outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryTarget {
    /// Copy 1 selects `i1`, copy 2 selects `i2`.
    Pair(InvalidPair),
    /// Mean-output bounds of a continuous agent.
    Continuous {
        reversal: Reversal,
        mean_index: usize,
        copy1: (Option<f64>, Option<f64>),
        copy2: (Option<f64>, Option<f64>),
    },
    /// Bare output constraints with no action semantics (imported bundles).
    Linear,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub id: String,
    pub property: String,
    pub system: CoupledSystem,
    pub target: QueryTarget,
    pub x_bounds: InputDomain,
    pub s_bounds: SlackSpec,
    /// Conjunctive constraints over `z`: the property's extra constraints,
    /// the chosen disjunct, and the optional `x + s ∈ X` clamp.
    pub input_constraints: Vec<InputConstraint>,
    pub output_constraints: Vec<OutputConstraint>,
    pub metric: Option<DistanceMetric>,
}

impl Query {
    /// Builds a query from parts, deriving the output constraints from the target.
    pub fn new(
        id: impl Into<String>,
        property: impl Into<String>,
        system: CoupledSystem,
        target: QueryTarget,
        x_bounds: InputDomain,
        s_bounds: SlackSpec,
        input_constraints: Vec<InputConstraint>,
    ) -> Self {
        let output_constraints = target_constraints(&target, system.output_width());
        Self {
            id: id.into(),
            property: property.into(),
            system,
            target,
            x_bounds,
            s_bounds,
            input_constraints,
            output_constraints,
            metric: None,
        }
    }

    /// The root box over `z = (x, s)`.
    pub fn z_box(&self) -> Vec<Interval> {
        self.x_bounds
            .per_feature
            .iter()
            .chain(&self.s_bounds.per_feature)
            .copied()
            .collect()
    }

    /// Replays `(x, s)` through both copies and checks every constraint of the
    /// query. Bounds, input constraints and continuous/linear output
    /// constraints are checked within `tol`; argmax targets within
    /// [`TIE_TOLERANCE`].
    pub fn check_point(&self, x: &[f64], s: &[f64], tol: f64) -> Result<Replay, CheckFailure> {
        let n = self.system.input_width();
        if x.len() != n || s.len() != n {
            return Err(CheckFailure::Width {
                expected: n,
                x: x.len(),
                s: s.len(),
            });
        }
        if let Some(i) = x.iter().chain(s).position(|v| !v.is_finite()) {
            return Err(CheckFailure::NonFinite { index: i });
        }
        for (i, (v, b)) in x.iter().zip(&self.x_bounds.per_feature).enumerate() {
            if !b.contains_within(*v, tol) {
                return Err(CheckFailure::OutOfBounds {
                    var: Var::X,
                    index: i,
                    value: *v,
                    bound: *b,
                });
            }
        }
        for (i, (v, b)) in s.iter().zip(&self.s_bounds.per_feature).enumerate() {
            if !b.contains_within(*v, tol) {
                return Err(CheckFailure::OutOfBounds {
                    var: Var::S,
                    index: i,
                    value: *v,
                    bound: *b,
                });
            }
        }
        let z: Vec<f64> = x.iter().chain(s).copied().collect();
        for (i, c) in self.input_constraints.iter().enumerate() {
            let lhs = c.value(&z);
            if lhs > c.rhs + tol {
                return Err(CheckFailure::InputConstraint { index: i, lhs, rhs: c.rhs });
            }
        }

        let (logits1, logits2) = match self.target {
            QueryTarget::Linear => {
                let y = self.system.flat.forward(&z).map_err(|_| CheckFailure::Width {
                    expected: n,
                    x: x.len(),
                    s: s.len(),
                })?;
                let m = self.system.output_width();
                (y[..m].to_vec(), y[m..].to_vec())
            }
            _ => {
                let xs: Vec<f64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
                let l1 = self.system.net.forward(x).expect("width checked");
                let l2 = self.system.net.forward(&xs).expect("width checked");
                (l1, l2)
            }
        };
        if let Some(i) = logits1.iter().chain(&logits2).position(|v| !v.is_finite()) {
            return Err(CheckFailure::NonFinite { index: 2 * n + i });
        }

        match &self.target {
            QueryTarget::Pair(p) => {
                for (copy, logits, target) in [(1, &logits1, p.i1), (2, &logits2, p.i2)] {
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if logits[target] < max - TIE_TOLERANCE {
                        return Err(CheckFailure::NotArgmax {
                            copy,
                            target,
                            value: logits[target],
                            max,
                        });
                    }
                }
                // Identical logits mean the deployed agent takes the same
                // action in both copies, whatever the tie tolerance admits.
                if p.i1 != p.i2 && logits1 == logits2 {
                    return Err(CheckFailure::IdenticalCopies);
                }
            }
            QueryTarget::Continuous { .. } | QueryTarget::Linear => {
                let y: Vec<f64> = logits1.iter().chain(&logits2).copied().collect();
                for (i, c) in self.output_constraints.iter().enumerate() {
                    let lhs = c.value(&y);
                    if lhs > c.rhs + tol {
                        return Err(CheckFailure::OutputConstraint { index: i, lhs, rhs: c.rhs });
                    }
                }
            }
        }
        Ok(Replay { logits1, logits2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub logits1: Vec<f64>,
    pub logits2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    S,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Var::X => "x",
            Var::S => "s",
        })
    }
}

/// The first check a candidate point failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckFailure {
    #[error("point has widths ({x}, {s}), query expects {expected}")]
    Width { expected: usize, x: usize, s: usize },
    #[error("non-finite value at flattened position {index}")]
    NonFinite { index: usize },
    #[error("{var}[{index}] = {value} lies outside {bound}")]
    OutOfBounds {
        var: Var,
        index: usize,
        value: f64,
        bound: Interval,
    },
    #[error("input constraint {index} violated: {lhs} > {rhs}")]
    InputConstraint { index: usize, lhs: f64, rhs: f64 },
    #[error("copy {copy} does not select output {target}: logit {value} below max {max}")]
    NotArgmax {
        copy: usize,
        target: usize,
        value: f64,
        max: f64,
    },
    #[error("both copies produce identical logits, so they select the same action")]
    IdenticalCopies,
    #[error("output constraint {index} violated: {lhs} > {rhs}")]
    OutputConstraint { index: usize, lhs: f64, rhs: f64 },
}

/// All ordered output pairs `(i1, i2)` whose actions violate `comparison`,
/// sorted by `(i1, i2)`.
pub fn enumerate_invalid_pairs(action_values: &[f64], comparison: &ComparisonSpec) -> Vec<InvalidPair> {
    let value = |i: usize| match comparison.metric {
        DistanceMetric::Levels => i as f64,
        DistanceMetric::Values => action_values[i],
    };
    let m = action_values.len();
    let mut pairs = Vec::new();
    for i1 in 0..m {
        for i2 in 0..m {
            if i1 != i2 && comparison.violates(value(i1), value(i2)) {
                pairs.push(InvalidPair { i1, i2 });
            }
        }
    }
    pairs
}

fn target_constraints(target: &QueryTarget, m: usize) -> Vec<OutputConstraint> {
    let unit = |idx: usize, coef: f64| {
        let mut coeffs = vec![0.0; 2 * m];
        coeffs[idx] = coef;
        coeffs
    };
    match target {
        QueryTarget::Pair(p) => {
            let mut out = Vec::with_capacity(2 * (m - 1));
            for (base, target) in [(0, p.i1), (m, p.i2)] {
                for t in (0..m).filter(|&t| t != target) {
                    let mut coeffs = vec![0.0; 2 * m];
                    coeffs[base + t] = 1.0;
                    coeffs[base + target] = -1.0;
                    out.push(OutputConstraint { coeffs, rhs: 0.0 });
                }
            }
            out
        }
        QueryTarget::Continuous {
            mean_index,
            copy1,
            copy2,
            ..
        } => {
            let mut out = Vec::new();
            for (base, (lo, hi)) in [(0, copy1), (m, copy2)] {
                if let Some(lo) = lo {
                    out.push(OutputConstraint {
                        coeffs: unit(base + mean_index, -1.0),
                        rhs: -lo,
                    });
                }
                if let Some(hi) = hi {
                    out.push(OutputConstraint {
                        coeffs: unit(base + mean_index, 1.0),
                        rhs: *hi,
                    });
                }
            }
            out
        }
        QueryTarget::Linear => Vec::new(),
    }
}

fn continuous_target(anchor: &ContinuousAnchor, reversal: Reversal, mean_index: usize) -> QueryTarget {
    let (lo, hi, d) = (anchor.mean_lo, anchor.mean_hi, anchor.separation_d);
    let (copy1, copy2) = match reversal {
        Reversal::Falling => ((Some(lo), hi), (None, Some(lo - d))),
        Reversal::Rising => ((hi.map(|h| -h), Some(-lo)), (Some(-lo + d), None)),
    };
    QueryTarget::Continuous {
        reversal,
        mean_index,
        copy1,
        copy2,
    }
}

fn reversal_name(r: Reversal) -> &'static str {
    match r {
        Reversal::Falling => "falling",
        Reversal::Rising => "rising",
    }
}

/// Expands `prop` into its queries against `net`: one per invalid pair (or
/// per reversal for continuous agents), times one per disjunct.
pub fn generate_queries(net: &Network, prop: &PropertySpec) -> Result<Vec<Query>, EncodeError> {
    prop.validate_for(net)?;
    let n = net.input_width();
    let system = CoupledSystem::new(Arc::new(net.clone()));
    let x_bounds = apply_coverage(&prop.domain, prop.coverage_pct)?;

    let mut base: Vec<InputConstraint> = prop.extra_constraints.iter().map(InputConstraint::from_linear).collect();
    if prop.clamp_perturbed {
        for (i, b) in x_bounds.per_feature.iter().enumerate() {
            let mut coeffs = vec![0.0; 2 * n];
            coeffs[i] = 1.0;
            coeffs[n + i] = 1.0;
            base.push(InputConstraint {
                coeffs: coeffs.clone(),
                rhs: b.hi(),
            });
            coeffs.iter_mut().for_each(|v| *v = -*v);
            base.push(InputConstraint { coeffs, rhs: -b.lo() });
        }
    }
    let variants: Vec<Vec<InputConstraint>> = if prop.disjunctive_constraints.is_empty() {
        vec![base]
    } else {
        prop.disjunctive_constraints
            .iter()
            .map(|d| {
                let mut v = base.clone();
                v.push(InputConstraint::from_linear(d));
                v
            })
            .collect()
    };

    let targets: Vec<(String, QueryTarget)> = match (&prop.criterion, net.decoder()) {
        (Criterion::Discrete(c), ActionDecoder::Discrete { action_values }) => enumerate_invalid_pairs(action_values, c)
            .into_iter()
            .map(|p| (format!("{}-{}", p.i1, p.i2), QueryTarget::Pair(p)))
            .collect(),
        (Criterion::Continuous(a), ActionDecoder::ContinuousMean { mean_index, .. }) => a
            .reversals
            .iter()
            .map(|&r| (reversal_name(r).to_string(), continuous_target(a, r, *mean_index)))
            .collect(),
        _ => unreachable!("validate_for checks decoder consistency"),
    };
    let metric = match &prop.criterion {
        Criterion::Discrete(c) => Some(c.metric),
        Criterion::Continuous(_) => None,
    };

    let mut queries = Vec::with_capacity(targets.len() * variants.len());
    for (label, target) in targets {
        for (v, constraints) in variants.iter().enumerate() {
            let mut q = Query::new(
                format!("{}/{}/{}", prop.name, label, v),
                prop.name.clone(),
                system.clone(),
                target.clone(),
                x_bounds.clone(),
                prop.slack.clone(),
                constraints.clone(),
            );
            q.metric = metric;
            queries.push(q);
        }
    }
    Ok(queries)
}

/// Materializes both copies as one network over `(x, s)` producing
/// `[logits(x); logits(x + s)]`. Results match separate forward passes
/// bitwise: the leading mixing layer computes `x + s` exactly as a plain
/// addition, and every later layer is block-diagonal so zero off-block
/// weights never enter a sum.
pub fn flatten_coupled(net: &Network) -> Network {
    let n = net.input_width();
    let mut mix = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        mix[[i, i]] = 1.0;
        mix[[n + i, i]] = 1.0;
        mix[[n + i, n + i]] = 1.0;
    }
    let mut layers = vec![Layer::Affine(
        AffineLayer::new(mix, Array1::zeros(2 * n)).expect("square mixing layer"),
    )];
    let mut width = n;
    for layer in net.layers() {
        match layer {
            Layer::Affine(a) => {
                let (o, i) = (a.out_width(), a.in_width());
                let mut w = Array2::<f64>::zeros((2 * o, 2 * i));
                w.slice_mut(ndarray::s![..o, ..i]).assign(a.weights());
                w.slice_mut(ndarray::s![o.., i..]).assign(a.weights());
                let mut b = Array1::<f64>::zeros(2 * o);
                b.slice_mut(ndarray::s![..o]).assign(a.bias());
                b.slice_mut(ndarray::s![o..]).assign(a.bias());
                layers.push(Layer::Affine(AffineLayer::new(w, b).expect("block-diagonal shapes agree")));
                width = o;
            }
            Layer::Relu => layers.push(Layer::Relu),
            Layer::SplitEmbedConcat(segs) => {
                let mut both = segs.clone();
                both.extend(segs.iter().map(|s| Segment {
                    offset: s.offset + width,
                    length: s.length,
                    embed: s.embed.clone(),
                }));
                width = segs.iter().map(|s| s.embed.out_width()).sum();
                layers.push(Layer::SplitEmbedConcat(both));
            }
        }
    }
    Network::new(format!("{}.coupled", net.name()), 2 * n, layers, ActionDecoder::Raw)
        .expect("coupled network of a valid network is valid")
}
