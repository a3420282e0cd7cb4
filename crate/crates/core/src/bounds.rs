//! Sound output bounds for a network restricted to an input box.
//!
//! Two techniques are combined: interval propagation, and backward linear
//! propagation with the triangle ReLU relaxation. For backward propagation
//! the network is first lowered to an alternating sequence of dense affine
//! stages and ReLUs; every pre-activation is bounded by both methods and the
//! intersection is kept.
//!
//! All concretized scalar bounds are padded outward by a tiny relative
//! amount so that floating-point rounding in the bound computation cannot
//! cut off a value the forward pass actually produces.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::encoder::{InputConstraint, OutputConstraint, Query, TIE_TOLERANCE};
use crate::interval::Interval;
use crate::propspec::InputDomain;
use crate::tensornet::{Layer, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("box has {got} intervals, network takes {expected} inputs")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bound computation overflowed at layer {layer}")]
    NonFinite { layer: usize },
}

fn pad(v: f64) -> f64 {
    1e-12 * (1.0 + v.abs())
}

/// `coeffs · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    pub fn min_over(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.offset + concretize_row(self.coeffs.iter().copied(), lo, hi, false)
    }

    pub fn max_over(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.offset + concretize_row(self.coeffs.iter().copied(), lo, hi, true)
    }
}

/// Affine envelopes of one neuron, valid on the box they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBound {
    pub lower: AffineForm,
    pub upper: AffineForm,
}

/// Interval bounds on the outputs of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub layer_index: usize,
    pub per_neuron: Vec<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReluState {
    AlwaysActive,
    AlwaysInactive,
    Unstable,
}

impl ReluState {
    pub fn classify(lo: f64, hi: f64) -> Self {
        if lo >= 0.0 {
            ReluState::AlwaysActive
        } else if hi <= 0.0 {
            ReluState::AlwaysInactive
        } else {
            ReluState::Unstable
        }
    }
}

/// Per-neuron stability of one ReLU layer (indexed as in the network).
#[derive(Debug, Clone, PartialEq)]
pub struct ReluMask {
    pub layer_index: usize,
    pub states: Vec<ReluState>,
}

fn concretize_row(coeffs: impl Iterator<Item = f64>, lo: &[f64], hi: &[f64], upper: bool) -> f64 {
    coeffs
        .zip(lo.iter().zip(hi))
        .map(|(c, (&l, &h))| {
            if (c >= 0.0) == upper {
                c * h
            } else {
                c * l
            }
        })
        .sum()
}

fn split_box(b: &[Interval]) -> (Vec<f64>, Vec<f64>) {
    (b.iter().map(Interval::lo).collect(), b.iter().map(Interval::hi).collect())
}

fn to_intervals(lo: &[f64], hi: &[f64], layer: usize) -> Result<Vec<Interval>, BoundsError> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| Interval::new(l, h.max(l)).map_err(|_| BoundsError::NonFinite { layer }))
        .collect()
}

/// Interval image of an affine map `w·x + b` over `[lo, hi]`.
fn affine_interval(w: ArrayView2<f64>, b: &[f64], lo: &[f64], hi: &[f64], padded: bool) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = Vec::with_capacity(w.nrows());
    let mut out_hi = Vec::with_capacity(w.nrows());
    for (row, &bias) in w.axis_iter(Axis(0)).zip(b) {
        let mut l = bias + concretize_row(row.iter().copied(), lo, hi, false);
        let mut h = bias + concretize_row(row.iter().copied(), lo, hi, true);
        if padded {
            l -= pad(l);
            h += pad(h);
        }
        out_lo.push(l);
        out_hi.push(h);
    }
    (out_lo, out_hi)
}

/// Interval bounds on the output of every layer over `input`.
pub fn interval_bounds(net: &Network, input: &InputDomain) -> Result<Vec<BoxBounds>, BoundsError> {
    if input.width() != net.input_width() {
        return Err(BoundsError::DimensionMismatch {
            expected: net.input_width(),
            got: input.width(),
        });
    }
    let (mut lo, mut hi) = split_box(&input.per_feature);
    let padded = lo != hi;
    let mut out = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Affine(a) => {
                (lo, hi) = affine_interval(a.weights().view(), a.bias().as_slice().unwrap(), &lo, &hi, padded);
            }
            Layer::Relu => {
                lo.iter_mut().for_each(|v| *v = v.max(0.0));
                hi.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            Layer::SplitEmbedConcat(segs) => {
                let mut nl = Vec::new();
                let mut nh = Vec::new();
                for s in segs {
                    let r = s.offset..s.offset + s.length;
                    let (l, h) = affine_interval(
                        s.embed.weights().view(),
                        s.embed.bias().as_slice().unwrap(),
                        &lo[r.clone()],
                        &hi[r],
                        padded,
                    );
                    nl.extend(l);
                    nh.extend(h);
                }
                (lo, hi) = (nl, nh);
            }
        }
        out.push(BoxBounds {
            layer_index: i,
            per_neuron: to_intervals(&lo, &hi, i)?,
        });
    }
    Ok(out)
}

/// Triangle relaxation of `relu` on `[l, u]`:
/// `lower_slope · v ≤ relu(v) ≤ upper_slope · v + upper_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    pub lower_slope: f64,
    pub upper_slope: f64,
    pub upper_offset: f64,
}

impl ReluRelaxation {
    pub fn new(l: f64, u: f64) -> Self {
        if l >= 0.0 {
            Self {
                lower_slope: 1.0,
                upper_slope: 1.0,
                upper_offset: 0.0,
            }
        } else if u <= 0.0 {
            Self {
                lower_slope: 0.0,
                upper_slope: 0.0,
                upper_offset: 0.0,
            }
        } else {
            let slope = u / (u - l);
            // The identity lower line cuts off less area when u > -l; on a
            // tie both lines enclose the same area and zero is kept.
            Self {
                lower_slope: if u > -l { 1.0 } else { 0.0 },
                upper_slope: slope,
                upper_offset: -slope * l,
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Stage {
    w: Array2<f64>,
    b: Array1<f64>,
}

/// The network as `A_0, relu, A_1, relu, …, A_K` with dense affine stages.
#[derive(Debug, Clone)]
pub struct Lowered {
    input_width: usize,
    stages: Vec<Stage>,
    /// Original indices of the ReLU layers that follow stage `j`.
    relu_origin: Vec<Vec<usize>>,
}

/// Pre-activation bounds for every stage (the last entry bounds the outputs).
#[derive(Debug, Clone)]
pub struct StageBounds {
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
}

impl StageBounds {
    pub fn output(&self) -> (&[f64], &[f64]) {
        (self.lo.last().unwrap(), self.hi.last().unwrap())
    }
}

/// Backward-propagated linear bounds of `spec · output` over the input.
#[derive(Debug, Clone)]
pub struct SpecBounds {
    pub lower_coeffs: Array2<f64>,
    pub lower_offset: Array1<f64>,
    pub upper: Option<(Array2<f64>, Array1<f64>)>,
}

impl Lowered {
    pub fn new(net: &Network) -> Self {
        let mut stages: Vec<Stage> = Vec::new();
        let mut relu_origin: Vec<Vec<usize>> = Vec::new();
        let mut pending: Option<Stage> = None;
        let mut width = net.input_width();
        for (i, layer) in net.layers().iter().enumerate() {
            let next = match layer {
                Layer::Affine(a) => Stage {
                    w: a.weights().clone(),
                    b: a.bias().clone(),
                },
                Layer::SplitEmbedConcat(segs) => {
                    let out: usize = segs.iter().map(|s| s.embed.out_width()).sum();
                    let mut w = Array2::zeros((out, width));
                    let mut b = Array1::zeros(out);
                    let mut row = 0;
                    for s in segs {
                        let o = s.embed.out_width();
                        w.slice_mut(ndarray::s![row..row + o, s.offset..s.offset + s.length])
                            .assign(s.embed.weights());
                        b.slice_mut(ndarray::s![row..row + o]).assign(s.embed.bias());
                        row += o;
                    }
                    Stage { w, b }
                }
                Layer::Relu => {
                    match pending.take() {
                        Some(st) => {
                            stages.push(st);
                            relu_origin.push(vec![i]);
                        }
                        None if stages.is_empty() => {
                            stages.push(Stage {
                                w: Array2::eye(width),
                                b: Array1::zeros(width),
                            });
                            relu_origin.push(vec![i]);
                        }
                        // relu ∘ relu = relu
                        None => relu_origin.last_mut().unwrap().push(i),
                    }
                    continue;
                }
            };
            width = next.w.nrows();
            pending = Some(match pending.take() {
                None => next,
                Some(prev) => Stage {
                    b: next.w.dot(&prev.b) + &next.b,
                    w: next.w.dot(&prev.w),
                },
            });
        }
        stages.push(pending.expect("networks end in an affine layer"));
        Self {
            input_width: net.input_width(),
            stages,
            relu_origin,
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.stages.last().unwrap().w.nrows()
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        let mut v = Array1::from(z.to_vec());
        for (k, st) in self.stages.iter().enumerate() {
            if k > 0 {
                v.mapv_inplace(|x| x.max(0.0));
            }
            v = st.w.dot(&v) + &st.b;
        }
        v.to_vec()
    }

    /// Bounds on every stage's pre-activation over `[lo, hi]`.
    pub fn propagate(&self, lo: &[f64], hi: &[f64]) -> StageBounds {
        let k_max = self.stages.len();
        let mut out = StageBounds {
            lo: Vec::with_capacity(k_max),
            hi: Vec::with_capacity(k_max),
        };
        if lo == hi {
            let mut v = Array1::from(lo.to_vec());
            for (k, st) in self.stages.iter().enumerate() {
                if k > 0 {
                    v.mapv_inplace(|x| x.max(0.0));
                }
                v = st.w.dot(&v) + &st.b;
                out.lo.push(v.to_vec());
                out.hi.push(v.to_vec());
            }
            return out;
        }
        let (mut post_lo, mut post_hi) = (lo.to_vec(), hi.to_vec());
        for (k, st) in self.stages.iter().enumerate() {
            let (mut l, mut h) = affine_interval(st.w.view(), st.b.as_slice().unwrap(), &post_lo, &post_hi, true);
            if k > 0 {
                let eye = Array2::eye(st.w.nrows());
                let sb = self.backward(&out, k, eye.view(), true);
                let (cl, ch) = concretize(&sb, lo, hi);
                for i in 0..l.len() {
                    l[i] = l[i].max(cl[i]);
                    h[i] = h[i].min(ch[i]);
                    if l[i] > h[i] {
                        // Only reachable through rounding when both bounds
                        // pin the neuron; collapse onto the midpoint.
                        let m = 0.5 * (l[i] + h[i]);
                        l[i] = m;
                        h[i] = m;
                    }
                }
            }
            post_lo = l.iter().map(|v| v.max(0.0)).collect();
            post_hi = h.iter().map(|v| v.max(0.0)).collect();
            out.lo.push(l);
            out.hi.push(h);
        }
        out
    }

    /// Backward propagation of `spec` (rows over the outputs of stage `k`)
    /// down to the input, relaxing each ReLU with the bounds in `pre`.
    pub fn backward(&self, pre: &StageBounds, k: usize, spec: ArrayView2<f64>, want_upper: bool) -> SpecBounds {
        let rows = spec.nrows();
        let mut lam_l = spec.to_owned();
        let mut off_l = Array1::<f64>::zeros(rows);
        let mut up = want_upper.then(|| (spec.to_owned(), Array1::<f64>::zeros(rows)));
        for j in (0..=k).rev() {
            let st = &self.stages[j];
            off_l += &lam_l.dot(&st.b);
            lam_l = lam_l.dot(&st.w);
            if let Some((lam_u, off_u)) = up.as_mut() {
                *off_u += &lam_u.dot(&st.b);
                *lam_u = lam_u.dot(&st.w);
            }
            if j == 0 {
                break;
            }
            let (pl, ph) = (&pre.lo[j - 1], &pre.hi[j - 1]);
            for i in 0..pl.len() {
                let r = ReluRelaxation::new(pl[i], ph[i]);
                for row in 0..rows {
                    let v = lam_l[[row, i]];
                    if v >= 0.0 {
                        lam_l[[row, i]] = v * r.lower_slope;
                    } else {
                        lam_l[[row, i]] = v * r.upper_slope;
                        off_l[row] += v * r.upper_offset;
                    }
                }
                if let Some((lam_u, off_u)) = up.as_mut() {
                    for row in 0..rows {
                        let v = lam_u[[row, i]];
                        if v >= 0.0 {
                            lam_u[[row, i]] = v * r.upper_slope;
                            off_u[row] += v * r.upper_offset;
                        } else {
                            lam_u[[row, i]] = v * r.lower_slope;
                        }
                    }
                }
            }
        }
        SpecBounds {
            lower_coeffs: lam_l,
            lower_offset: off_l,
            upper: up,
        }
    }

    /// Lower bounds of `spec · output` over `[lo, hi]`, with pre-activation
    /// bounds already computed by [`Lowered::propagate`].
    pub fn spec_lower(&self, pre: &StageBounds, spec: ArrayView2<f64>, lo: &[f64], hi: &[f64]) -> (SpecBounds, Vec<f64>) {
        let k = self.stages.len() - 1;
        let (out_lo, out_hi) = pre.output();
        // Interval bound of each row from the output box, intersected below.
        let (il, _) = affine_interval(spec, &vec![0.0; spec.nrows()], out_lo, out_hi, lo != hi);
        let sb = self.backward(pre, k, spec, false);
        let (cl, _) = concretize(&sb, lo, hi);
        let lower = il.iter().zip(&cl).map(|(a, b)| a.max(*b)).collect();
        (sb, lower)
    }
}

/// Concretizes the backward bounds over `[lo, hi]`, padded outward. The
/// upper vector is `+∞` when upper envelopes were not requested.
fn concretize(sb: &SpecBounds, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let exact = lo == hi;
    let lower = sb
        .lower_coeffs
        .axis_iter(Axis(0))
        .zip(&sb.lower_offset)
        .map(|(row, off)| {
            let v = off + concretize_row(row.iter().copied(), lo, hi, false);
            if exact {
                v
            } else {
                v - pad(v)
            }
        })
        .collect();
    let upper = match &sb.upper {
        Some((lam, off)) => lam
            .axis_iter(Axis(0))
            .zip(off)
            .map(|(row, off)| {
                let v = off + concretize_row(row.iter().copied(), lo, hi, true);
                if exact {
                    v
                } else {
                    v + pad(v)
                }
            })
            .collect(),
        None => vec![f64::INFINITY; sb.lower_offset.len()],
    };
    (lower, upper)
}

fn check_width(net: &Network, input: &InputDomain) -> Result<(), BoundsError> {
    if input.width() != net.input_width() {
        return Err(BoundsError::DimensionMismatch {
            expected: net.input_width(),
            got: input.width(),
        });
    }
    Ok(())
}

/// Affine lower/upper envelopes of every output over `input`, from backward
/// propagation with the triangle relaxation.
pub fn backward_linear_bounds(net: &Network, input: &InputDomain) -> Result<Vec<LinearBound>, BoundsError> {
    check_width(net, input)?;
    let lowered = Lowered::new(net);
    let (lo, hi) = split_box(&input.per_feature);
    let pre = lowered.propagate(&lo, &hi);
    let m = lowered.output_width();
    let eye = Array2::eye(m);
    let sb = lowered.backward(&pre, lowered.stages.len() - 1, eye.view(), true);
    let (lam_u, off_u) = sb.upper.as_ref().unwrap();
    Ok((0..m)
        .map(|i| LinearBound {
            lower: AffineForm {
                coeffs: sb.lower_coeffs.row(i).to_vec(),
                offset: sb.lower_offset[i],
            },
            upper: AffineForm {
                coeffs: lam_u.row(i).to_vec(),
                offset: off_u[i],
            },
        })
        .collect())
}

/// Scalar output bounds: interval and backward bounds intersected.
pub fn output_bounds(net: &Network, input: &InputDomain) -> Result<Vec<Interval>, BoundsError> {
    check_width(net, input)?;
    let lowered = Lowered::new(net);
    let (lo, hi) = split_box(&input.per_feature);
    let pre = lowered.propagate(&lo, &hi);
    let (l, h) = pre.output();
    to_intervals(l, h, net.layers().len() - 1)
}

/// Stability of every ReLU neuron over `input`.
pub fn stable_relu_mask(net: &Network, input: &InputDomain) -> Result<Vec<ReluMask>, BoundsError> {
    check_width(net, input)?;
    let lowered = Lowered::new(net);
    let (lo, hi) = split_box(&input.per_feature);
    let pre = lowered.propagate(&lo, &hi);
    let mut masks = Vec::new();
    for (j, origins) in lowered.relu_origin.iter().enumerate() {
        for (rep, &layer_index) in origins.iter().enumerate() {
            // A repeated ReLU sees the already-rectified values.
            let clip = |v: f64| if rep == 0 { v } else { v.max(0.0) };
            let states = pre.lo[j]
                .iter()
                .zip(&pre.hi[j])
                .map(|(&l, &h)| ReluState::classify(clip(l), clip(h)))
                .collect();
            masks.push(ReluMask { layer_index, states });
        }
    }
    Ok(masks)
}

/// Why a box was shown to contain no point satisfying the query.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// Output constraint `index` has lower bound `lower` above its bound.
    OutputConstraint { index: usize, lower: f64, rhs: f64 },
    /// Constraint propagation emptied the input box.
    EmptyBox,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tightened {
    Infeasible(Infeasibility),
    Feasible {
        /// Box over `z` that still contains every feasible point.
        lo: Vec<f64>,
        hi: Vec<f64>,
        /// Lower bounds of each output constraint's left-hand side.
        constraint_lower: Vec<f64>,
    },
}

/// Bounds a query's output constraints over sub-boxes of its `z` domain.
///
/// Constraints are relaxed by [`TIE_TOLERANCE`] before use, matching the
/// tolerance a replayed counterexample is certified with, so nothing this
/// bounder discards could have been certified.
#[derive(Debug, Clone)]
pub struct QueryBounder {
    lowered: Lowered,
    spec: Array2<f64>,
    rhs: Vec<f64>,
    input: Vec<InputConstraint>,
    rounds: usize,
}

impl QueryBounder {
    pub fn new(query: &Query) -> Self {
        Self::from_parts(
            Lowered::new(query.system.flat()),
            &query.output_constraints,
            query.input_constraints.clone(),
        )
    }

    pub fn from_parts(lowered: Lowered, outputs: &[OutputConstraint], input: Vec<InputConstraint>) -> Self {
        let m = lowered.output_width();
        let mut spec = Array2::zeros((outputs.len(), m));
        for (i, c) in outputs.iter().enumerate() {
            spec.row_mut(i).assign(&ndarray::ArrayView1::from(&c.coeffs[..]));
        }
        Self {
            lowered,
            spec,
            rhs: outputs.iter().map(|c| c.rhs).collect(),
            input,
            rounds: 4,
        }
    }

    pub fn lowered(&self) -> &Lowered {
        &self.lowered
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds = rounds.max(1);
        self
    }

    /// Iterated tightening: bound the constraints, turn each lower envelope
    /// `g_k(z) ≤ c_k·y ≤ r_k` into a linear cut on `z`, propagate all cuts
    /// over the box, and repeat while the box keeps shrinking.
    pub fn tighten(&self, lo: &[f64], hi: &[f64]) -> Tightened {
        let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
        let mut constraint_lower = vec![f64::NEG_INFINITY; self.rhs.len()];
        for _ in 0..self.rounds {
            if self.spec.nrows() == 0 && self.input.is_empty() {
                break;
            }
            let pre = self.lowered.propagate(&lo, &hi);
            let (sb, lower) = self.lowered.spec_lower(&pre, self.spec.view(), &lo, &hi);
            for (k, (&l, &r)) in lower.iter().zip(&self.rhs).enumerate() {
                if l > r + TIE_TOLERANCE {
                    return Tightened::Infeasible(Infeasibility::OutputConstraint {
                        index: k,
                        lower: l,
                        rhs: r,
                    });
                }
            }
            constraint_lower = lower;

            let before: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).sum();
            let cuts = sb
                .lower_coeffs
                .axis_iter(Axis(0))
                .zip(&sb.lower_offset)
                .zip(&self.rhs)
                .map(|((row, off), r)| (row.to_vec(), r + TIE_TOLERANCE - off));
            let inputs = self.input.iter().map(|c| (c.coeffs.clone(), c.rhs + TIE_TOLERANCE));
            let cuts: Vec<(Vec<f64>, f64)> = cuts.chain(inputs).collect();
            if !propagate_cuts(&cuts, &mut lo, &mut hi) {
                return Tightened::Infeasible(Infeasibility::EmptyBox);
            }
            let after: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).sum();
            if after >= 0.95 * before {
                break;
            }
        }
        Tightened::Feasible {
            lo,
            hi,
            constraint_lower,
        }
    }
}

/// Shrinks `[lo, hi]` against cuts `a · z ≤ b`. Returns false when the box
/// becomes empty.
fn propagate_cuts(cuts: &[(Vec<f64>, f64)], lo: &mut [f64], hi: &mut [f64]) -> bool {
    for _ in 0..3 {
        let mut changed = false;
        for (a, b) in cuts {
            let min_sum: f64 = concretize_row(a.iter().copied(), lo, hi, false);
            if !min_sum.is_finite() {
                continue;
            }
            if min_sum - pad(min_sum) > *b {
                return false;
            }
            for j in 0..a.len() {
                let aj = a[j];
                if aj == 0.0 || lo[j] == hi[j] {
                    continue;
                }
                let own = if aj > 0.0 { aj * lo[j] } else { aj * hi[j] };
                let rest = min_sum - own;
                let slack = b - rest;
                let bound = slack / aj;
                let bound_pad = pad(bound) + pad(rest) / aj.abs();
                if aj > 0.0 {
                    let nb = bound + bound_pad;
                    if nb < hi[j] {
                        hi[j] = nb;
                        changed = true;
                    }
                } else {
                    let nb = bound - bound_pad;
                    if nb > lo[j] {
                        lo[j] = nb;
                        changed = true;
                    }
                }
                if lo[j] > hi[j] {
                    return false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

/// Tightens the bounds of `query` over the box `z_box` using its output and
/// input constraints.
pub fn tighten_with_output_constraints(query: &Query, z_box: &[Interval]) -> Tightened {
    let (lo, hi) = split_box(z_box);
    QueryBounder::new(query).tighten(&lo, &hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensornet::{ActionDecoder, AffineLayer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, sizes: &[usize]) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let rows = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            layers.push(Layer::Affine(AffineLayer::from_rows(rows, bias).unwrap()));
            layers.push(Layer::Relu);
        }
        layers.pop();
        Network::new("r", sizes[0], layers, ActionDecoder::Raw).unwrap()
    }

    fn unit_box(n: usize) -> InputDomain {
        InputDomain::uniform(n, Interval::new(-1.0, 1.0).unwrap())
    }

    #[test]
    fn relu_and_affine_examples() {
        let relu_net = Network::new(
            "relu",
            1,
            vec![
                Layer::Relu,
                Layer::Affine(AffineLayer::from_rows(vec![vec![1.0]], vec![0.0]).unwrap()),
            ],
            ActionDecoder::Raw,
        )
        .unwrap();
        let b = interval_bounds(&relu_net, &InputDomain::new(vec![Interval::new(-1.0, 2.0).unwrap()])).unwrap();
        assert_eq!(b[0].per_neuron[0], Interval::new(0.0, 2.0).unwrap());

        let aff = Network::new(
            "aff",
            2,
            vec![Layer::Affine(AffineLayer::from_rows(vec![vec![1.0, -1.0]], vec![0.0]).unwrap())],
            ActionDecoder::Raw,
        )
        .unwrap();
        let b = interval_bounds(&aff, &InputDomain::uniform(2, Interval::new(0.0, 1.0).unwrap())).unwrap();
        let iv = b[0].per_neuron[0];
        assert!((iv.lo() + 1.0).abs() < 1e-11 && (iv.hi() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn triangle_relaxation_on_symmetric_interval() {
        let r = ReluRelaxation::new(-1.0, 1.0);
        assert_eq!(r.upper_slope, 0.5);
        assert_eq!(r.upper_offset, 0.5);
        assert_eq!(r.lower_slope, 0.0);
        assert_eq!(ReluRelaxation::new(-1.0, 3.0).lower_slope, 1.0);
        // Pointwise soundness on a grid.
        for (l, u) in [(-1.0, 1.0), (-2.0, 0.5), (-0.3, 4.0)] {
            let r = ReluRelaxation::new(l, u);
            for i in 0..=100 {
                let v = l + (u - l) * f64::from(i) / 100.0;
                let y = v.max(0.0);
                assert!(r.lower_slope * v <= y + 1e-15);
                assert!(y <= r.upper_slope * v + r.upper_offset + 1e-15);
            }
        }
    }

    #[test]
    fn affine_network_is_exact() {
        let net = Network::new(
            "aff",
            3,
            vec![
                Layer::Affine(AffineLayer::from_rows(vec![vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 1.0]], vec![0.1, -0.2]).unwrap()),
                Layer::Affine(AffineLayer::from_rows(vec![vec![2.0, -1.0]], vec![0.3]).unwrap()),
            ],
            ActionDecoder::Raw,
        )
        .unwrap();
        let dom = unit_box(3);
        let lb = backward_linear_bounds(&net, &dom).unwrap();
        assert_eq!(lb[0].lower, lb[0].upper);
        // Combined map: 2(x0 - 2x1 + 0.5x2 + 0.1) - (x1 + x2 - 0.2) + 0.3 = 2x0 - 5x1 + 0x2 + 0.7
        let expected = [2.0, -5.0, 0.0];
        for (c, e) in lb[0].lower.coeffs.iter().zip(expected) {
            assert!((c - e).abs() < 1e-12);
        }
        let ob = output_bounds(&net, &dom).unwrap();
        assert!((ob[0].lo() - (0.7 - 7.0)).abs() < 1e-9);
        assert!((ob[0].hi() - (0.7 + 7.0)).abs() < 1e-9);
    }

    #[test]
    fn mask_examples() {
        assert_eq!(ReluState::classify(0.2, 3.0), ReluState::AlwaysActive);
        assert_eq!(ReluState::classify(-5.0, -1.0), ReluState::AlwaysInactive);
        assert_eq!(ReluState::classify(-1.0, 1.0), ReluState::Unstable);
        let net = random_net(4, &[2, 5, 5, 2]);
        let masks = stable_relu_mask(&net, &unit_box(2)).unwrap();
        assert_eq!(masks.iter().map(|m| m.layer_index).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn bounds_are_sound_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..10 {
            let net = random_net(seed, &[3, 7, 6, 4]);
            let dom = InputDomain::new(
                (0..3)
                    .map(|_| {
                        let a: f64 = rng.random_range(-1.0..1.0);
                        Interval::new(a, a + rng.random_range(0.0..0.8)).unwrap()
                    })
                    .collect(),
            );
            let ib = interval_bounds(&net, &dom).unwrap();
            let lb = backward_linear_bounds(&net, &dom).unwrap();
            let ob = output_bounds(&net, &dom).unwrap();
            let (lo, hi) = split_box(&dom.per_feature);
            for (o, i) in ob.iter().zip(&ib.last().unwrap().per_neuron) {
                assert!(o.lo() >= i.lo() - 1e-12 && o.hi() <= i.hi() + 1e-12);
            }
            for _ in 0..1000 {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect();
                let y = net.forward(&x).unwrap();
                for (k, v) in y.iter().enumerate() {
                    assert!(ob[k].contains(*v));
                    assert!(lb[k].lower.eval(&x) <= v + 1e-9);
                    assert!(lb[k].upper.eval(&x) >= v - 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_box_is_exact() {
        let net = random_net(8, &[2, 4, 3]);
        let x = [0.3, -0.6];
        let dom = InputDomain::new(x.iter().map(|&v| Interval::point(v)).collect());
        let ob = output_bounds(&net, &dom).unwrap();
        let y = net.forward(&x).unwrap();
        for (b, v) in ob.iter().zip(&y) {
            assert!((b.lo() - v).abs() < 1e-12 && (b.hi() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn tightening_without_constraints_keeps_box() {
        let net = random_net(2, &[2, 4, 2]);
        let bounder = QueryBounder::from_parts(Lowered::new(&net), &[], vec![]);
        match bounder.tighten(&[0.0, 0.0], &[1.0, 1.0]) {
            Tightened::Feasible { lo, hi, .. } => {
                assert_eq!(lo, vec![0.0, 0.0]);
                assert_eq!(hi, vec![1.0, 1.0]);
            }
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn tightening_detects_infeasible_affine_constraint() {
        // y = x0 + x1 on [0,1]^2; y ≤ -0.5 is infeasible, y ≤ 0.5 shrinks the box.
        let net = Network::new(
            "sum",
            2,
            vec![Layer::Affine(AffineLayer::from_rows(vec![vec![1.0, 1.0]], vec![0.0]).unwrap())],
            ActionDecoder::Raw,
        )
        .unwrap();
        let c = |rhs| OutputConstraint { coeffs: vec![1.0], rhs };
        let b = QueryBounder::from_parts(Lowered::new(&net), &[c(-0.5)], vec![]);
        assert!(matches!(b.tighten(&[0.0, 0.0], &[1.0, 1.0]), Tightened::Infeasible(_)));
        let b = QueryBounder::from_parts(Lowered::new(&net), &[c(0.5)], vec![]);
        match b.tighten(&[0.0, 0.0], &[1.0, 1.0]) {
            Tightened::Feasible { hi, .. } => assert!(hi.iter().all(|h| (h - 0.5).abs() < 1e-8)),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn tightening_never_drops_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let net = random_net(100 + seed, &[2, 6, 3]);
            let cons: Vec<OutputConstraint> = (0..2)
                .map(|_| OutputConstraint {
                    coeffs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rhs: rng.random_range(-0.5..0.5),
                })
                .collect();
            let b = QueryBounder::from_parts(Lowered::new(&net), &cons, vec![]);
            let t = b.tighten(&[-1.0, -1.0], &[1.0, 1.0]);
            for i in 0..=100 {
                for j in 0..=100 {
                    let z = [-1.0 + 0.02 * f64::from(i), -1.0 + 0.02 * f64::from(j)];
                    let y = net.forward(&z).unwrap();
                    if cons.iter().all(|c| c.value(&y) <= c.rhs) {
                        match &t {
                            Tightened::Infeasible(r) => panic!("seed {seed}: feasible {z:?} but {r:?}"),
                            Tightened::Feasible { lo, hi, .. } => {
                                assert!((0..2).all(|k| lo[k] <= z[k] && z[k] <= hi[k]), "seed {seed}: {z:?} cut");
                            }
                        }
                    }
                }
            }
        }
    }
}
