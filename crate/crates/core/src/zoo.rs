//! Seeded stand-ins for the three case-study agents and their properties.
//!
//! Weights are drawn uniformly from `±1/√fan_in` with a ChaCha8 generator, so
//! a `(family, seed)` pair always yields the same network. Real checkpoints
//! can be converted to the network file format and used in their place.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::interval::Interval;
use crate::propspec::{
    make_continuous, make_monotonicity, make_robustness, ContinuousAnchor, DistanceMetric, InputDomain, PropertyError,
    PropertyKind, PropertySpec, Reversal, Sign, SlackSpec,
};
use crate::tensornet::{ActionDecoder, AffineLayer, Layer, Network, Segment};

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameters { family: &'static str, reason: String },
    #[error("unknown family `{0}` (expected pensieve, cmars, or aurora)")]
    UnknownFamily(String),
    #[error("unknown property `{property}` for {family}; available: {available}")]
    UnknownProperty {
        family: &'static str,
        property: String,
        available: String,
    },
    #[error(transparent)]
    Property(#[from] PropertyError),
}

/// Input layout of the adaptive-bitrate agent.
pub mod pensieve {
    use std::ops::Range;

    pub const INPUTS: usize = 25;
    pub const LAST_BITRATE: usize = 0;
    pub const THROUGHPUT: Range<usize> = 1..9;
    pub const DOWNLOAD_TIME: Range<usize> = 9..17;
    pub const BUFFER: usize = 17;
    pub const REMAINING_CHUNKS: usize = 18;
    /// One flag per bitrate; all bitrates are assumed available (fixed 1.0).
    pub const AVAILABILITY: Range<usize> = 19..25;
    pub const SPLIT: [usize; 6] = [1, 8, 8, 1, 1, 6];
    pub const BITRATES_KBPS: [f64; 6] = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0];
}

/// Input layout of the radio-resource allocation agent. Only the SNR and
/// other-slice demand positions matter to the presets; the layout of the
/// remaining target-slice statistics is an assumption of this builder.
pub mod cmars {
    use std::ops::Range;

    pub const INPUTS: usize = 19;
    pub const HIDDEN: usize = 32;
    pub const SLA_VIOLATION: usize = 0;
    pub const SNR: usize = 1;
    pub const AVAILABLE_RESOURCES: usize = 2;
    pub const TARGET_SLICE_STATS: Range<usize> = 3..16;
    /// IoT users, constant-bitrate traffic, variable-bitrate traffic.
    pub const OTHER_SLICE_DEMAND: Range<usize> = 16..19;
}

/// Input layout of the congestion-control agent: `k` steps of three
/// features, step-major (`3t + f`).
pub mod aurora {
    pub const FEATURES_PER_STEP: usize = 3;
    pub const LATENCY_RATIO: usize = 0;
    pub const ACK_RATIO: usize = 1;
    pub const LATENCY_GRADIENT: usize = 2;
    pub const SIGMA: f64 = 0.5;

    pub fn indices(history: usize, feature: usize) -> Vec<usize> {
        (0..history).map(|t| FEATURES_PER_STEP * t + feature).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pensieve { hidden: usize },
    Cmars { depth: usize, actions: usize },
    Aurora { history: usize, hidden: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Pensieve { .. } => "pensieve",
            Family::Cmars { .. } => "cmars",
            Family::Aurora { .. } => "aurora",
        }
    }

    fn validate(&self) -> Result<(), ZooError> {
        let bad = |reason: &str| ZooError::InvalidParameters {
            family: self.name(),
            reason: reason.to_string(),
        };
        match *self {
            Family::Pensieve { hidden: 0 } => Err(bad("hidden size must be positive")),
            Family::Cmars { depth, .. } if !(depth == 2 || depth == 3) => Err(bad("depth must be 2 or 3")),
            Family::Cmars { actions, .. } if !(actions == 15 || actions == 30) => Err(bad("M must be 15 or 30")),
            Family::Aurora { history: 0, .. } => Err(bad("history length must be positive")),
            Family::Aurora { hidden: 0, .. } => Err(bad("hidden size must be positive")),
            _ => Ok(()),
        }
    }

    pub fn input_width(&self) -> usize {
        match *self {
            Family::Pensieve { .. } => pensieve::INPUTS,
            Family::Cmars { .. } => cmars::INPUTS,
            Family::Aurora { history, .. } => aurora::FEATURES_PER_STEP * history,
        }
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        match *self {
            // Six embeddings (25 weights + 6 biases per unit), FC(H), FC(6).
            Family::Pensieve { hidden: h } => 31 * h + (6 * h * h + h) + (6 * h + 6),
            Family::Cmars { depth, actions } => {
                let h = cmars::HIDDEN;
                (cmars::INPUTS + 1) * h + (depth - 1) * (h + 1) * h + (h + 1) * actions
            }
            Family::Aurora { history, hidden: h } => (3 * history + 1) * h + (h + 1) * h + (h + 1),
        }
    }

    /// The family's property parameters recovered from a network's shape.
    /// Hidden sizes do not affect presets and are reported as found.
    pub fn infer(name: &str, net: &Network) -> Result<Self, ZooError> {
        let bad = |family: &'static str, reason: String| ZooError::InvalidParameters { family, reason };
        match name {
            "pensieve" => {
                if net.input_width() != pensieve::INPUTS || net.output_width() != 6 {
                    return Err(bad("pensieve", format!("expected 25 inputs and 6 outputs, found {} and {}", net.input_width(), net.output_width())));
                }
                Ok(Family::Pensieve { hidden: 0 })
            }
            "cmars" => {
                if net.input_width() != cmars::INPUTS {
                    return Err(bad("cmars", format!("expected 19 inputs, found {}", net.input_width())));
                }
                let f = Family::Cmars {
                    depth: 2,
                    actions: net.output_width(),
                };
                f.validate()?;
                Ok(f)
            }
            "aurora" => {
                if !net.input_width().is_multiple_of(aurora::FEATURES_PER_STEP) || net.output_width() != 1 {
                    return Err(bad("aurora", format!("expected 3k inputs and 1 output, found {} and {}", net.input_width(), net.output_width())));
                }
                Ok(Family::Aurora {
                    history: net.input_width() / aurora::FEATURES_PER_STEP,
                    hidden: 0,
                })
            }
            other => Err(ZooError::UnknownFamily(other.to_string())),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Pensieve { hidden } => write!(f, "pensieve:{hidden}"),
            Family::Cmars { depth, actions } => write!(f, "cmars:{depth}:{actions}"),
            Family::Aurora { history, hidden } => write!(f, "aurora:{history}:{hidden}"),
        }
    }
}

/// `pensieve:H`, `cmars:DEPTH:M`, or `aurora:K:H`.
impl FromStr for Family {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |family: &'static str, t: &str| {
            t.parse::<usize>().map_err(|_| ZooError::InvalidParameters {
                family,
                reason: format!("`{t}` is not a non-negative integer"),
            })
        };
        let arity = |family: &'static str, want: &str| ZooError::InvalidParameters {
            family,
            reason: format!("expected {want}"),
        };
        let f = match parts[0] {
            "pensieve" => match parts[1..] {
                [h] => Family::Pensieve { hidden: num("pensieve", h)? },
                _ => return Err(arity("pensieve", "pensieve:H")),
            },
            "cmars" => match parts[1..] {
                [d, m] => Family::Cmars {
                    depth: num("cmars", d)?,
                    actions: num("cmars", m)?,
                },
                _ => return Err(arity("cmars", "cmars:DEPTH:M")),
            },
            "aurora" => match parts[1..] {
                [k, h] => Family::Aurora {
                    history: num("aurora", k)?,
                    hidden: num("aurora", h)?,
                },
                _ => return Err(arity("aurora", "aurora:K:H")),
            },
            other => return Err(ZooError::UnknownFamily(other.to_string())),
        };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZooSpec {
    pub family: Family,
    pub seed: u64,
}

fn fc(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> AffineLayer {
    let bound = 1.0 / (inputs as f64).sqrt();
    let mut draw = || rng.random_range(-bound..bound);
    let rows: Vec<Vec<f64>> = (0..outputs).map(|_| (0..inputs).map(|_| draw()).collect()).collect();
    let bias: Vec<f64> = (0..outputs).map(|_| draw()).collect();
    AffineLayer::from_rows(rows, bias).expect("shapes are consistent by construction")
}

pub fn build(spec: ZooSpec) -> Result<Network, ZooError> {
    spec.family.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (name, input_width, layers, decoder) = match spec.family {
        Family::Pensieve { hidden: h } => {
            let mut offset = 0;
            let segments = pensieve::SPLIT
                .iter()
                .map(|&len| {
                    let s = Segment {
                        offset,
                        length: len,
                        embed: fc(&mut rng, len, h),
                    };
                    offset += len;
                    s
                })
                .collect();
            let layers = vec![
                Layer::SplitEmbedConcat(segments),
                Layer::Relu,
                Layer::Affine(fc(&mut rng, 6 * h, h)),
                Layer::Relu,
                Layer::Affine(fc(&mut rng, h, 6)),
            ];
            (
                format!("pensieve_h{h}_s{}", spec.seed),
                pensieve::INPUTS,
                layers,
                ActionDecoder::Discrete {
                    action_values: pensieve::BITRATES_KBPS.to_vec(),
                },
            )
        }
        Family::Cmars { depth, actions } => {
            let mut layers = Vec::new();
            let mut width = cmars::INPUTS;
            for _ in 0..depth {
                layers.push(Layer::Affine(fc(&mut rng, width, cmars::HIDDEN)));
                layers.push(Layer::Relu);
                width = cmars::HIDDEN;
            }
            layers.push(Layer::Affine(fc(&mut rng, width, actions)));
            (
                format!("cmars_d{depth}_m{actions}_s{}", spec.seed),
                cmars::INPUTS,
                layers,
                ActionDecoder::Discrete {
                    action_values: (0..actions).map(|i| i as f64).collect(),
                },
            )
        }
        Family::Aurora { history, hidden: h } => {
            let n = aurora::FEATURES_PER_STEP * history;
            let layers = vec![
                Layer::Affine(fc(&mut rng, n, h)),
                Layer::Relu,
                Layer::Affine(fc(&mut rng, h, h)),
                Layer::Relu,
                Layer::Affine(fc(&mut rng, h, 1)),
            ];
            (
                format!("aurora_k{history}_h{h}_s{}", spec.seed),
                n,
                layers,
                ActionDecoder::ContinuousMean {
                    mean_index: 0,
                    sigma: aurora::SIGMA,
                },
            )
        }
    };
    Ok(Network::new(name, input_width, layers, decoder).expect("zoo architectures are valid"))
}

/// Operational range of every input: `[0, 1]`, with Pensieve's bitrate
/// availability flags pinned to 1.
pub fn default_domain(family: Family) -> InputDomain {
    let unit = Interval::new(0.0, 1.0).unwrap();
    let mut d = InputDomain::uniform(family.input_width(), unit);
    if let Family::Pensieve { .. } = family {
        for i in pensieve::AVAILABILITY {
            d.per_feature[i] = Interval::point(1.0);
        }
    }
    d
}

pub const EPSILON: f64 = 0.01;

/// Names of the preset properties of `family`, in preset order.
pub fn preset_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::Pensieve { .. } => &["capacity_utilization", "rebuffering_avoidance", "robustness"],
        Family::Cmars { .. } => &["contention_aware_allocation", "channel_compensation", "robustness"],
        Family::Aurora { .. } => &["ack_driven_capacity_utilization", "latency_aware_capacity_utilization", "robustness"],
    }
}

/// The case-study properties with their published parameters
/// (`ε = 0.01`; `d = 3` levels, `d = 8 / 16` units, or `μ = σ/2`), at full
/// coverage.
pub fn preset_properties(family: Family) -> Result<Vec<PropertySpec>, ZooError> {
    preset_names(family).iter().map(|n| preset(family, n)).collect()
}

pub fn preset(family: Family, name: &str) -> Result<PropertySpec, ZooError> {
    let domain = default_domain(family);
    let n = family.input_width();
    let p = match (family, name) {
        (Family::Pensieve { .. }, "capacity_utilization") => {
            let tput: Vec<usize> = pensieve::THROUGHPUT.collect();
            make_monotonicity(domain, &tput, Sign::Plus, EPSILON, 3.0)?
        }
        (Family::Pensieve { .. }, "rebuffering_avoidance") => {
            make_monotonicity(domain, &[pensieve::BUFFER], Sign::Plus, EPSILON, 3.0)?
        }
        (Family::Pensieve { .. }, "robustness") => {
            let fixed: Vec<usize> = pensieve::AVAILABILITY.collect();
            make_robustness(domain, EPSILON, 3.0)?.without_slack_on(&fixed)
        }
        (Family::Cmars { actions, .. }, _) => {
            let d = if actions == 15 { 8.0 } else { 16.0 };
            let p = match name {
                "contention_aware_allocation" => {
                    let demand: Vec<usize> = cmars::OTHER_SLICE_DEMAND.collect();
                    make_monotonicity(domain, &demand, Sign::Plus, EPSILON, d)?.expecting(Sign::Minus)
                }
                "channel_compensation" => make_monotonicity(domain, &[cmars::SNR], Sign::Minus, EPSILON, d)?,
                "robustness" => make_robustness(domain, EPSILON, d)?,
                _ => return Err(unknown_property(family, name)),
            };
            p.with_metric(DistanceMetric::Values)
        }
        (Family::Aurora { history, .. }, _) => {
            let mu = aurora::SIGMA / 2.0;
            let (slack, reversals) = match name {
                "ack_driven_capacity_utilization" => (
                    SlackSpec::one_sided(n, &aurora::indices(history, aurora::ACK_RATIO), Sign::Plus, EPSILON)?,
                    vec![Reversal::Falling],
                ),
                "latency_aware_capacity_utilization" => (
                    SlackSpec::one_sided(n, &aurora::indices(history, aurora::LATENCY_RATIO), Sign::Minus, EPSILON)?,
                    vec![Reversal::Falling],
                ),
                "robustness" => (SlackSpec::symmetric(n, EPSILON)?, vec![Reversal::Falling, Reversal::Rising]),
                _ => return Err(unknown_property(family, name)),
            };
            let mut p = make_continuous(domain, slack, ContinuousAnchor::sign_flip(mu, reversals)?)?;
            p.kind = PropertyKind::ContinuousAnchor;
            p
        }
        _ => return Err(unknown_property(family, name)),
    };
    Ok(p.named(name))
}

fn unknown_property(family: Family, name: &str) -> ZooError {
    ZooError::UnknownProperty {
        family: family.name(),
        property: name.to_string(),
        available: preset_names(family).join(", "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::generate_queries;

    #[test]
    fn parameter_counts_match_closed_form() {
        for family in [
            Family::Pensieve { hidden: 8 },
            Family::Pensieve { hidden: 128 },
            Family::Cmars { depth: 2, actions: 15 },
            Family::Cmars { depth: 3, actions: 30 },
            Family::Aurora { history: 3, hidden: 16 },
        ] {
            let net = build(ZooSpec { family, seed: 1 }).unwrap();
            assert_eq!(net.param_count(), family.param_count(), "{family}");
        }
        assert_eq!(Family::Pensieve { hidden: 128 }.param_count(), 103_174);
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let f = Family::Cmars { depth: 2, actions: 15 };
        let a = build(ZooSpec { family: f, seed: 5 }).unwrap();
        let b = build(ZooSpec { family: f, seed: 5 }).unwrap();
        let c = build(ZooSpec { family: f, seed: 6 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn aurora_input_width() {
        let net = build(ZooSpec {
            family: Family::Aurora { history: 3, hidden: 128 },
            seed: 0,
        })
        .unwrap();
        assert_eq!(net.input_width(), 9);
        assert_eq!(net.output_width(), 1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!("cmars:4:15".parse::<Family>().is_err());
        assert!("cmars:2:16".parse::<Family>().is_err());
        assert!("pensieve:0".parse::<Family>().is_err());
        assert!("atari:3".parse::<Family>().is_err());
        assert_eq!("aurora:3:128".parse::<Family>().unwrap(), Family::Aurora { history: 3, hidden: 128 });
    }

    #[test]
    fn presets_produce_expected_query_counts() {
        let cases = [
            (Family::Pensieve { hidden: 4 }, vec![6, 6, 12]),
            (Family::Cmars { depth: 2, actions: 15 }, vec![28, 28, 56]),
            (Family::Cmars { depth: 2, actions: 30 }, vec![105, 105, 210]),
            (Family::Aurora { history: 3, hidden: 4 }, vec![1, 1, 2]),
        ];
        for (family, counts) in cases {
            let net = build(ZooSpec { family, seed: 0 }).unwrap();
            let props = preset_properties(family).unwrap();
            let got: Vec<usize> = props.iter().map(|p| generate_queries(&net, p).unwrap().len()).collect();
            assert_eq!(got, counts, "{family}");
        }
    }

    #[test]
    fn pensieve_availability_is_pinned() {
        let f = Family::Pensieve { hidden: 4 };
        for p in preset_properties(f).unwrap() {
            for i in pensieve::AVAILABILITY {
                assert_eq!(p.domain.per_feature[i], Interval::point(1.0));
                assert!(p.slack.per_feature[i].is_degenerate() && p.slack.per_feature[i].lo() == 0.0);
            }
        }
    }
}
