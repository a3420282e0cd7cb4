//! Symbolic property declarations.
//!
//! A property relates the action at a base input `x ∈ X` to the action at a
//! perturbed input `x + s`, with `s` drawn from a per-feature slack box. The
//! property holds when every such pair of actions stays within the comparison
//! threshold. Discrete-action agents are compared through a
//! [`ComparisonSpec`]; continuous (Gaussian-mean) agents through a
//! [`ContinuousAnchor`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{Interval, IntervalError};
use crate::json;
use crate::tensornet::{ActionDecoder, Network};

#[derive(Debug, Error)]
pub enum PropertyError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("feature index set is empty")]
    EmptyFeatureSet,
    #[error("feature index {index} out of range for {width} inputs")]
    FeatureOutOfRange { index: usize, width: usize },
    #[error("coverage must lie in (0, 100], got {0}")]
    CoverageOutOfRange(f64),
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("separation must be positive, got {0}")]
    NonPositiveSeparation(f64),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error("property `{property}` does not fit network `{network}`: {reason}")]
    Mismatch {
        property: String,
        network: String,
        reason: String,
    },
    #[error("failed to read or write property file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed property file: {0}")]
    Parse(#[from] serde_json::Error),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> PropertyError {
    PropertyError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// Operational range `X` of the base input, one interval per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputDomain {
    pub per_feature: Vec<Interval>,
}

impl InputDomain {
    pub fn new(per_feature: Vec<Interval>) -> Self {
        Self { per_feature }
    }

    pub fn uniform(width: usize, range: Interval) -> Self {
        Self {
            per_feature: vec![range; width],
        }
    }

    pub fn width(&self) -> usize {
        self.per_feature.len()
    }

    /// Featurewise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &InputDomain) -> bool {
        self.width() == other.width()
            && self.per_feature.iter().zip(&other.per_feature).all(|(a, b)| a.is_subset_of(b))
    }
}

/// Bounds on the perturbation `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlackSpec {
    pub per_feature: Vec<Interval>,
}

impl SlackSpec {
    pub fn zero(width: usize) -> Self {
        Self {
            per_feature: vec![Interval::ZERO; width],
        }
    }

    pub fn symmetric(width: usize, epsilon: f64) -> Result<Self, PropertyError> {
        check_epsilon(epsilon)?;
        Ok(Self {
            per_feature: vec![Interval::new(-epsilon, epsilon)?; width],
        })
    }

    /// `[0, ε]` (Plus) or `[-ε, 0]` (Minus) on `features`, zero elsewhere.
    pub fn one_sided(width: usize, features: &[usize], direction: Sign, epsilon: f64) -> Result<Self, PropertyError> {
        check_epsilon(epsilon)?;
        if features.is_empty() {
            return Err(PropertyError::EmptyFeatureSet);
        }
        let side = match direction {
            Sign::Plus => Interval::new(0.0, epsilon)?,
            Sign::Minus => Interval::new(-epsilon, 0.0)?,
        };
        let mut per_feature = vec![Interval::ZERO; width];
        for &i in features {
            if i >= width {
                return Err(PropertyError::FeatureOutOfRange { index: i, width });
            }
            per_feature[i] = side;
        }
        Ok(Self { per_feature })
    }

    pub fn width(&self) -> usize {
        self.per_feature.len()
    }

    pub fn is_zero(&self) -> bool {
        self.per_feature.iter().all(|i| i.lo() == 0.0 && i.hi() == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// `coeffs_x · x + coeffs_s · s  (≤ | ≥)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearInputConstraint {
    pub coeffs_x: Vec<f64>,
    pub coeffs_s: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearInputConstraint {
    /// `x[hi] - x[lo] ≥ 0`, i.e. feature `hi` is at least feature `lo`.
    pub fn at_least(width: usize, hi: usize, lo: usize) -> Self {
        let mut coeffs_x = vec![0.0; width];
        coeffs_x[hi] += 1.0;
        coeffs_x[lo] -= 1.0;
        Self {
            coeffs_x,
            coeffs_s: vec![0.0; width],
            relation: Relation::Ge,
            rhs: 0.0,
        }
    }

    pub fn holds(&self, x: &[f64], s: &[f64], tol: f64) -> bool {
        let lhs = dot(&self.coeffs_x, x) + dot(&self.coeffs_s, s);
        match self.relation {
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Ge => lhs >= self.rhs - tol,
        }
    }

    fn check(&self, width: usize, field: &str) -> Result<(), PropertyError> {
        if self.coeffs_x.len() != width || self.coeffs_s.len() != width {
            return Err(invalid(
                field,
                format!(
                    "coefficient lengths ({}, {}) do not match input width {width}",
                    self.coeffs_x.len(),
                    self.coeffs_s.len()
                ),
            ));
        }
        if !self.coeffs_x.iter().chain(&self.coeffs_s).chain([&self.rhs]).all(|v| v.is_finite()) {
            return Err(invalid(field, "non-finite coefficient"));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Disjunctive refinement excluding a strictly rising history.
///
/// For history features ordered oldest-last (`history[0]` is the most recent
/// sample), the excluded region is `x[h_{k}] < x[h_{k-1}] < … < x[h_1]`; its
/// complement is the disjunction of `x[h_{j+1}] ≥ x[h_j]`, one constraint per
/// adjacent pair. Each disjunct spawns its own query variant.
pub fn trend_exclusion(width: usize, history: &[usize]) -> Vec<LinearInputConstraint> {
    history
        .windows(2)
        .map(|w| LinearInputConstraint::at_least(width, w[1], w[0]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComparisonKind {
    /// `|a₂ - a₁|`.
    AbsDiff,
    /// Signed change against the expected response. `Plus` expects the action
    /// not to fall (violation measured as `a₁ - a₂`), `Minus` expects it not
    /// to rise (`a₂ - a₁`).
    Directional { sign: Sign },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    /// Invalid when the change reaches the threshold.
    #[default]
    AtLeast,
    /// Invalid when the change exceeds the threshold.
    StrictlyGreater,
}

/// How action distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Difference of output indices (bitrate levels, allocation steps).
    #[default]
    Levels,
    /// Difference of decoded action values.
    Values,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    #[serde(flatten)]
    pub kind: ComparisonKind,
    pub threshold_d: f64,
    #[serde(default)]
    pub violation_rule: ViolationRule,
    #[serde(default)]
    pub metric: DistanceMetric,
}

impl ComparisonSpec {
    /// Violation amount for a copy-1 action `a1` and copy-2 action `a2`.
    pub fn change(&self, a1: f64, a2: f64) -> f64 {
        match self.kind {
            ComparisonKind::AbsDiff => (a2 - a1).abs(),
            ComparisonKind::Directional { sign: Sign::Plus } => a1 - a2,
            ComparisonKind::Directional { sign: Sign::Minus } => a2 - a1,
        }
    }

    /// Whether the pair of distinct actions violates the property. Identical
    /// actions never violate.
    pub fn violates(&self, a1: f64, a2: f64) -> bool {
        if a1 == a2 {
            return false;
        }
        let f = self.change(a1, a2);
        match self.violation_rule {
            ViolationRule::AtLeast => f >= self.threshold_d,
            ViolationRule::StrictlyGreater => f > self.threshold_d,
        }
    }
}

/// Direction reversal flagged for a continuous-mean agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reversal {
    /// Copy-1 mean in `[lo, hi]`, copy-2 mean at most `lo - d`.
    Falling,
    /// Mirror image: copy-1 mean in `[-hi, -lo]`, copy-2 mean at least `-lo + d`.
    Rising,
}

/// Anchor bound on copy 1's mean plus the separation that flags a violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAnchor {
    pub mean_lo: f64,
    /// `None` is an unbounded upper end.
    #[serde(default)]
    pub mean_hi: Option<f64>,
    pub separation_d: f64,
    pub reversals: Vec<Reversal>,
}

impl ContinuousAnchor {
    /// Copy-1 mean `≥ μ` and copy-2 mean `≤ -μ` (separation `2μ`).
    pub fn sign_flip(mu: f64, reversals: Vec<Reversal>) -> Result<Self, PropertyError> {
        let anchor = Self {
            mean_lo: mu,
            mean_hi: None,
            separation_d: 2.0 * mu,
            reversals,
        };
        anchor.check()?;
        Ok(anchor)
    }

    fn check(&self) -> Result<(), PropertyError> {
        if !(self.separation_d.is_finite() && self.separation_d > 0.0) {
            return Err(PropertyError::NonPositiveSeparation(self.separation_d));
        }
        if !self.mean_lo.is_finite() {
            return Err(invalid("anchor.mean_lo", "must be finite"));
        }
        if let Some(hi) = self.mean_hi {
            if !hi.is_finite() || hi < self.mean_lo {
                return Err(invalid("anchor.mean_hi", format!("{hi} is not a valid upper end")));
            }
        }
        if self.reversals.is_empty() {
            return Err(invalid("anchor.reversals", "at least one reversal is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Robustness,
    Monotonicity,
    ContinuousAnchor,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    Discrete(ComparisonSpec),
    Continuous(ContinuousAnchor),
}

/// A complete symbolic property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PropertyFile", into = "PropertyFile")]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
    pub domain: InputDomain,
    pub slack: SlackSpec,
    /// Conjunctive linear constraints over `(x, s)`.
    pub extra_constraints: Vec<LinearInputConstraint>,
    /// At least one must hold; expanded into one query variant each.
    pub disjunctive_constraints: Vec<LinearInputConstraint>,
    pub criterion: Criterion,
    pub coverage_pct: f64,
    /// Also require `x + s ∈ X`.
    pub clamp_perturbed: bool,
}

fn check_epsilon(epsilon: f64) -> Result<(), PropertyError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(PropertyError::NonPositiveEpsilon(epsilon));
    }
    Ok(())
}

fn check_threshold(d: f64) -> Result<(), PropertyError> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(PropertyError::NegativeThreshold(d));
    }
    Ok(())
}

/// Robustness: every feature perturbed within `[-ε, ε]`, action change
/// measured as `|a₂ - a₁|` against threshold `d`.
pub fn make_robustness(domain: InputDomain, epsilon: f64, d: f64) -> Result<PropertySpec, PropertyError> {
    check_threshold(d)?;
    let slack = SlackSpec::symmetric(domain.width(), epsilon)?;
    Ok(PropertySpec {
        name: "robustness".into(),
        kind: PropertyKind::Robustness,
        domain,
        slack,
        extra_constraints: Vec::new(),
        disjunctive_constraints: Vec::new(),
        criterion: Criterion::Discrete(ComparisonSpec {
            kind: ComparisonKind::AbsDiff,
            threshold_d: d,
            violation_rule: ViolationRule::AtLeast,
            metric: DistanceMetric::Levels,
        }),
        coverage_pct: 100.0,
        clamp_perturbed: false,
    })
}

/// Monotonicity: the listed features move by up to `ε` in `direction`
/// (slack `[0, ε]` or `[-ε, 0]`), all others stay fixed, and the action must
/// not fall by `d` or more. Use [`PropertySpec::expecting`] for properties
/// where the action must not rise instead.
pub fn make_monotonicity(
    domain: InputDomain,
    features: &[usize],
    direction: Sign,
    epsilon: f64,
    d: f64,
) -> Result<PropertySpec, PropertyError> {
    check_threshold(d)?;
    let slack = SlackSpec::one_sided(domain.width(), features, direction, epsilon)?;
    Ok(PropertySpec {
        name: "monotonicity".into(),
        kind: PropertyKind::Monotonicity,
        domain,
        slack,
        extra_constraints: Vec::new(),
        disjunctive_constraints: Vec::new(),
        criterion: Criterion::Discrete(ComparisonSpec {
            kind: ComparisonKind::Directional { sign: Sign::Plus },
            threshold_d: d,
            violation_rule: ViolationRule::AtLeast,
            metric: DistanceMetric::Levels,
        }),
        coverage_pct: 100.0,
        clamp_perturbed: false,
    })
}

/// Continuous-mean property over an explicit slack box.
pub fn make_continuous(
    domain: InputDomain,
    slack: SlackSpec,
    anchor: ContinuousAnchor,
) -> Result<PropertySpec, PropertyError> {
    anchor.check()?;
    let spec = PropertySpec {
        name: "continuous".into(),
        kind: PropertyKind::ContinuousAnchor,
        domain,
        slack,
        extra_constraints: Vec::new(),
        disjunctive_constraints: Vec::new(),
        criterion: Criterion::Continuous(anchor),
        coverage_pct: 100.0,
        clamp_perturbed: false,
    };
    spec.validate()?;
    Ok(spec)
}

/// Shrinks each `[a, b]` to `[a + m(b-a), b - m(b-a)]` with
/// `m = (100 - pct) / 200`, keeping the centred `pct`% of every range.
pub fn apply_coverage(domain: &InputDomain, coverage_pct: f64) -> Result<InputDomain, PropertyError> {
    if !(coverage_pct > 0.0 && coverage_pct <= 100.0) {
        return Err(PropertyError::CoverageOutOfRange(coverage_pct));
    }
    let m = (100.0 - coverage_pct) / 200.0;
    let per_feature = domain
        .per_feature
        .iter()
        .map(|i| {
            let w = i.width();
            let lo = i.lo() + m * w;
            let hi = i.hi() - m * w;
            // Rounding can cross the endpoints of very narrow ranges.
            Interval::new(lo.min(hi), hi.max(lo))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(InputDomain { per_feature })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    let mut z = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..3 {
        let pdf = normal_pdf(z);
        if pdf <= 0.0 {
            break;
        }
        z -= (normal_cdf(z) - p) / pdf;
    }
    z
}

/// Probability that Gaussian actions with means `μ` and `-μ` (common `σ`)
/// land on opposite sides of zero: `Φ(μ/σ)²`.
pub fn sign_flip_probability(mu: f64, sigma: f64) -> Result<f64, PropertyError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(PropertyError::NonPositiveSigma(sigma));
    }
    Ok(normal_cdf(mu / sigma).powi(2))
}

/// The anchor `μ = σ Φ⁻¹(√q)` that yields sign-flip probability `q`.
pub fn mu_for_confidence(q: f64, sigma: f64) -> Result<f64, PropertyError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PropertyError::ProbabilityOutOfRange(q));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(PropertyError::NonPositiveSigma(sigma));
    }
    Ok(sigma * normal_quantile(q.sqrt()))
}

impl PropertySpec {
    pub fn width(&self) -> usize {
        self.domain.width()
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_coverage(mut self, coverage_pct: f64) -> Result<Self, PropertyError> {
        if !(coverage_pct > 0.0 && coverage_pct <= 100.0) {
            return Err(PropertyError::CoverageOutOfRange(coverage_pct));
        }
        self.coverage_pct = coverage_pct;
        Ok(self)
    }

    pub fn with_clamp_perturbed(mut self, clamp: bool) -> Self {
        self.clamp_perturbed = clamp;
        self
    }

    /// Sets the violation rule; no effect on continuous properties.
    pub fn with_violation_rule(mut self, rule: ViolationRule) -> Self {
        if let Criterion::Discrete(c) = &mut self.criterion {
            c.violation_rule = rule;
        }
        self
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        if let Criterion::Discrete(c) = &mut self.criterion {
            c.metric = metric;
        }
        self
    }

    /// Sets the expected response of a directional comparison: `Plus` means
    /// the action must not fall, `Minus` that it must not rise.
    pub fn expecting(mut self, response: Sign) -> Self {
        if let Criterion::Discrete(ComparisonSpec {
            kind: ComparisonKind::Directional { sign },
            ..
        }) = &mut self.criterion
        {
            *sign = response;
        }
        self
    }

    /// Pins the listed features: zero slack on each.
    pub fn without_slack_on(mut self, features: &[usize]) -> Self {
        for &i in features {
            if let Some(s) = self.slack.per_feature.get_mut(i) {
                *s = Interval::ZERO;
            }
        }
        self
    }

    pub fn with_extra_constraint(mut self, c: LinearInputConstraint) -> Self {
        self.extra_constraints.push(c);
        self
    }

    pub fn with_disjunction(mut self, cs: Vec<LinearInputConstraint>) -> Self {
        self.disjunctive_constraints.extend(cs);
        self
    }

    pub fn validate(&self) -> Result<(), PropertyError> {
        let n = self.domain.width();
        if n == 0 {
            return Err(invalid("domain", "no input features"));
        }
        if self.slack.width() != n {
            return Err(invalid(
                "slack",
                format!("{} slack intervals for {n} input features", self.slack.width()),
            ));
        }
        if !(self.coverage_pct > 0.0 && self.coverage_pct <= 100.0) {
            return Err(PropertyError::CoverageOutOfRange(self.coverage_pct));
        }
        for (i, c) in self.extra_constraints.iter().enumerate() {
            c.check(n, &format!("extra_constraints[{i}]"))?;
        }
        for (i, c) in self.disjunctive_constraints.iter().enumerate() {
            c.check(n, &format!("disjunctive_constraints[{i}]"))?;
        }
        match &self.criterion {
            Criterion::Discrete(c) => check_threshold(c.threshold_d)?,
            Criterion::Continuous(a) => a.check()?,
        }
        match self.kind {
            PropertyKind::Robustness => {
                let symmetric = self.slack.per_feature.iter().all(|s| s.lo() == -s.hi());
                if !symmetric {
                    return Err(invalid("slack", "robustness slack must be symmetric"));
                }
                if !matches!(
                    self.criterion,
                    Criterion::Discrete(ComparisonSpec {
                        kind: ComparisonKind::AbsDiff,
                        ..
                    })
                ) {
                    return Err(invalid("comparison", "robustness compares |a2 - a1|"));
                }
            }
            PropertyKind::Monotonicity => {
                let one_sided = self.slack.per_feature.iter().all(|s| s.lo() == 0.0 || s.hi() == 0.0);
                if !one_sided {
                    return Err(invalid("slack", "monotonicity slack needs a zero endpoint per feature"));
                }
                if !matches!(
                    self.criterion,
                    Criterion::Discrete(ComparisonSpec {
                        kind: ComparisonKind::Directional { .. },
                        ..
                    })
                ) {
                    return Err(invalid("comparison", "monotonicity uses a directional comparison"));
                }
            }
            PropertyKind::ContinuousAnchor => {
                if !matches!(self.criterion, Criterion::Continuous(_)) {
                    return Err(invalid("anchor", "continuous_anchor properties need an anchor"));
                }
            }
            PropertyKind::Custom => {}
        }
        Ok(())
    }

    /// Checks that this property can be posed against `net`.
    pub fn validate_for(&self, net: &Network) -> Result<(), PropertyError> {
        self.validate()?;
        let mismatch = |reason: String| PropertyError::Mismatch {
            property: self.name.clone(),
            network: net.name().to_string(),
            reason,
        };
        if self.width() != net.input_width() {
            return Err(mismatch(format!(
                "property has {} features, network takes {} inputs",
                self.width(),
                net.input_width()
            )));
        }
        match (&self.criterion, net.decoder()) {
            (Criterion::Discrete(_), ActionDecoder::Discrete { .. }) => Ok(()),
            (Criterion::Continuous(_), ActionDecoder::ContinuousMean { .. }) => Ok(()),
            (Criterion::Discrete(_), _) => Err(mismatch("discrete comparison needs a discrete decoder".into())),
            (Criterion::Continuous(_), _) => Err(mismatch("continuous anchor needs a continuous-mean decoder".into())),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PropertyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PropertyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PropertyError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        json::write_atomic(path, text.as_bytes()).map_err(|source| PropertyError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk shape: the criterion is split into optional `comparison` and
/// `anchor` fields, exactly one of which must be present.
#[derive(Serialize, Deserialize)]
struct PropertyFile {
    name: String,
    kind: PropertyKind,
    input_bounds: InputDomain,
    slack_bounds: SlackSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extra_constraints: Vec<LinearInputConstraint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    disjunctive_constraints: Vec<LinearInputConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comparison: Option<ComparisonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<ContinuousAnchor>,
    #[serde(default = "full_coverage")]
    coverage_pct: f64,
    #[serde(default)]
    clamp_perturbed: bool,
}

fn full_coverage() -> f64 {
    100.0
}

impl TryFrom<PropertyFile> for PropertySpec {
    type Error = PropertyError;

    fn try_from(f: PropertyFile) -> Result<Self, Self::Error> {
        let criterion = match (f.comparison, f.anchor) {
            (Some(c), None) => Criterion::Discrete(c),
            (None, Some(a)) => Criterion::Continuous(a),
            _ => return Err(invalid("comparison/anchor", "exactly one must be present")),
        };
        let spec = PropertySpec {
            name: f.name,
            kind: f.kind,
            domain: f.input_bounds,
            slack: f.slack_bounds,
            extra_constraints: f.extra_constraints,
            disjunctive_constraints: f.disjunctive_constraints,
            criterion,
            coverage_pct: f.coverage_pct,
            clamp_perturbed: f.clamp_perturbed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<PropertySpec> for PropertyFile {
    fn from(p: PropertySpec) -> Self {
        let (comparison, anchor) = match p.criterion {
            Criterion::Discrete(c) => (Some(c), None),
            Criterion::Continuous(a) => (None, Some(a)),
        };
        PropertyFile {
            name: p.name,
            kind: p.kind,
            input_bounds: p.domain,
            slack_bounds: p.slack,
            extra_constraints: p.extra_constraints,
            disjunctive_constraints: p.disjunctive_constraints,
            comparison,
            anchor,
            coverage_pct: p.coverage_pct,
            clamp_perturbed: p.clamp_perturbed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(width: usize) -> InputDomain {
        InputDomain::uniform(width, Interval::new(0.0, 1.0).unwrap())
    }

    #[test]
    fn robustness_slack_is_symmetric_epsilon() {
        let p = make_robustness(unit(25), 0.01, 3.0).unwrap();
        assert_eq!(p.slack.width(), 25);
        assert!(p.slack.per_feature.iter().all(|s| s.lo() == -0.01 && s.hi() == 0.01));
        let p = make_robustness(unit(4), 0.001, 1.0).unwrap();
        assert!(p.slack.per_feature.iter().all(|s| s.lo() == -0.001 && s.hi() == 0.001));
        assert!(matches!(make_robustness(unit(2), 0.0, 1.0), Err(PropertyError::NonPositiveEpsilon(_))));
        assert!(matches!(make_robustness(unit(2), 0.1, -1.0), Err(PropertyError::NegativeThreshold(_))));
    }

    #[test]
    fn zero_threshold_flags_any_change_but_not_identity() {
        let p = make_robustness(unit(1), 0.01, 0.0).unwrap();
        let Criterion::Discrete(c) = p.criterion else { unreachable!() };
        assert!(c.violates(0.0, 1.0));
        assert!(c.violates(1.0, 0.0));
        assert!(!c.violates(1.0, 1.0));
    }

    #[test]
    fn monotonicity_slack_shapes() {
        let throughput: Vec<usize> = (1..9).collect();
        let p = make_monotonicity(unit(25), &throughput, Sign::Plus, 0.01, 3.0).unwrap();
        let nonzero: Vec<_> = p.slack.per_feature.iter().filter(|s| !s.is_degenerate()).collect();
        assert_eq!(nonzero.len(), 8);
        assert!(nonzero.iter().all(|s| s.lo() == 0.0 && s.hi() == 0.01));

        let p = make_monotonicity(unit(19), &[1], Sign::Minus, 0.01, 8.0).unwrap();
        assert_eq!(p.slack.per_feature[1], Interval::new(-0.01, 0.0).unwrap());
        assert!(p.slack.per_feature.iter().enumerate().all(|(i, s)| i == 1 || s.is_degenerate()));

        let all: Vec<usize> = (0..5).collect();
        let p = make_monotonicity(unit(5), &all, Sign::Plus, 0.1, 1.0).unwrap();
        assert!(p.slack.per_feature.iter().all(|s| s.lo() == 0.0 && s.hi() == 0.1));

        assert!(matches!(
            make_monotonicity(unit(5), &[], Sign::Plus, 0.1, 1.0),
            Err(PropertyError::EmptyFeatureSet)
        ));
        assert!(matches!(
            make_monotonicity(unit(5), &[5], Sign::Plus, 0.1, 1.0),
            Err(PropertyError::FeatureOutOfRange { index: 5, width: 5 })
        ));
    }

    #[test]
    fn coverage_examples() {
        let d = InputDomain::new(vec![Interval::new(0.0, 1.0).unwrap(), Interval::new(-1.0, 3.0).unwrap()]);
        let c = apply_coverage(&d, 60.0).unwrap();
        assert!((c.per_feature[0].lo() - 0.2).abs() < 1e-15);
        assert!((c.per_feature[0].hi() - 0.8).abs() < 1e-15);
        let c = apply_coverage(&d, 80.0).unwrap();
        assert!((c.per_feature[1].lo() - -0.6).abs() < 1e-15);
        assert!((c.per_feature[1].hi() - 2.6).abs() < 1e-15);
        assert_eq!(apply_coverage(&d, 100.0).unwrap(), d);
        assert!(apply_coverage(&d, 0.0).is_err());
        assert!(apply_coverage(&d, 100.5).is_err());
    }

    #[test]
    fn sign_flip_examples() {
        assert!((sign_flip_probability(0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        // Φ(0.5) = 0.691462461274013...
        let p = sign_flip_probability(0.25, 0.5).unwrap();
        assert!((p - 0.691_462_461_274_013_1f64.powi(2)).abs() < 1e-12, "{p}");
        assert!(sign_flip_probability(40.0, 1.0).unwrap() > 1.0 - 1e-12);
        assert!(sign_flip_probability(0.1, 0.0).is_err());
    }

    #[test]
    fn mu_examples() {
        assert!(mu_for_confidence(0.25, 1.0).unwrap().abs() < 1e-12);
        assert!(mu_for_confidence(0.0, 1.0).is_err());
        assert!(mu_for_confidence(1.0, 1.0).is_err());
        assert!(mu_for_confidence(0.5, -1.0).is_err());
    }

    #[test]
    fn property_file_round_trip() {
        let p = make_monotonicity(unit(3), &[1], Sign::Minus, 0.01, 2.0)
            .unwrap()
            .named("channel")
            .expecting(Sign::Plus)
            .with_disjunction(trend_exclusion(3, &[0, 1, 2]));
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"kind\":\"monotonicity\""), "{text}");
        let back: PropertySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let bad = text.replace("\"slack_bounds\":[[0.0,0.0],[-0.01,0.0]", "\"slack_bounds\":[[0.0,0.0],[-0.01,0.02]");
        assert!(serde_json::from_str::<PropertySpec>(&bad).is_err());
    }

    #[test]
    fn trend_exclusion_builds_adjacent_orderings() {
        let cs = trend_exclusion(4, &[0, 1, 2, 3]);
        assert_eq!(cs.len(), 3);
        // x1 >= x0
        assert!(cs[0].holds(&[0.1, 0.2, 0.0, 0.0], &[0.0; 4], 0.0));
        assert!(!cs[0].holds(&[0.3, 0.2, 0.0, 0.0], &[0.0; 4], 0.0));
    }

    proptest! {
        #[test]
        fn coverage_nests(lo in -10.0f64..10.0, w in 0.0f64..20.0, p1 in 1.0f64..100.0, p2 in 1.0f64..100.0) {
            let d = InputDomain::new(vec![Interval::new(lo, lo + w).unwrap()]);
            let (a, b) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let small = apply_coverage(&d, a).unwrap();
            let big = apply_coverage(&d, b).unwrap();
            prop_assert!(small.is_subset_of(&big));
            prop_assert!(big.is_subset_of(&d));
        }

        #[test]
        fn mu_round_trips(q in 0.001f64..0.999, sigma in 0.01f64..10.0) {
            let mu = mu_for_confidence(q, sigma).unwrap();
            let back = sign_flip_probability(mu, sigma).unwrap();
            prop_assert!((back - q).abs() < 1e-9, "{} vs {}", back, q);
        }
    }
}
