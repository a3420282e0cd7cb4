//! Piecewise-linear policy networks: representation, JSON file format, and
//! exact forward evaluation.
//!
//! A [`Network`] is an ordered list of [`Layer`]s ending in a raw affine
//! logit layer, plus an [`ActionDecoder`] that maps logits to the deployed
//! action. Networks are immutable after construction and validated once.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read or write network file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network at {location}: {reason}")]
    Validation { location: String, reason: String },
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("decoder mode `raw` does not define an action")]
    NoAction,
}

fn invalid(location: impl Into<String>, reason: impl Into<String>) -> NetworkError {
    NetworkError::Validation {
        location: location.into(),
        reason: reason.into(),
    }
}

/// Dense `out × in` affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl AffineLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self, NetworkError> {
        Self::validated(weights, bias, "affine")
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, NetworkError> {
        Self::from_rows_at(rows, bias, "affine")
    }

    fn from_rows_at(rows: Vec<Vec<f64>>, bias: Vec<f64>, at: &str) -> Result<Self, NetworkError> {
        let out = rows.len();
        let inp = rows.first().map_or(0, Vec::len);
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != inp) {
            return Err(invalid(
                format!("{at}.weights[{r}]"),
                format!("row has {} entries, expected {inp}", row.len()),
            ));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((out, inp), flat)
            .map_err(|e| invalid(format!("{at}.weights"), e.to_string()))?;
        Self::validated(weights, Array1::from(bias), at)
    }

    fn validated(weights: Array2<f64>, bias: Array1<f64>, at: &str) -> Result<Self, NetworkError> {
        if weights.nrows() != bias.len() {
            return Err(invalid(
                format!("{at}.bias"),
                format!(
                    "bias length {} does not match weight row count {}",
                    bias.len(),
                    weights.nrows()
                ),
            ));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(invalid(format!("{at}.weights"), "empty weight matrix"));
        }
        if let Some(((r, c), v)) = weights.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{at}.weights[{r}][{c}]"), format!("non-finite value {v}")));
        }
        if let Some((i, v)) = bias.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{at}.bias[{i}]"), format!("non-finite value {v}")));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn in_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_width());
        for (row, &b) in self.weights.rows().into_iter().zip(self.bias.iter()) {
            out.push(exact_dot(row, x, b));
        }
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

/// Row-times-vector with a fixed accumulation order. Zero weights are skipped
/// and a zero bias is not added, so a block-structured copy of a layer (as
/// built by the coupled encoding) reproduces the original row bit for bit.
fn exact_dot(row: ArrayView1<f64>, x: &[f64], bias: f64) -> f64 {
    let mut acc: Option<f64> = None;
    for (&w, &v) in row.iter().zip(x) {
        if w != 0.0 {
            let p = w * v;
            acc = Some(match acc {
                Some(a) => a + p,
                None => p,
            });
        }
    }
    let acc = acc.unwrap_or(0.0);
    if bias != 0.0 {
        acc + bias
    } else {
        acc
    }
}

/// One slice of the input routed through its own embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub offset: usize,
    pub length: usize,
    pub embed: AffineLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    Relu,
    /// Splits the incoming vector into contiguous segments, embeds each with
    /// its own affine map, and concatenates the results in segment order.
    SplitEmbedConcat(Vec<Segment>),
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Affine(a) => a.param_count(),
            Layer::Relu => 0,
            Layer::SplitEmbedConcat(segs) => segs.iter().map(|s| s.embed.param_count()).sum(),
        }
    }

    /// Output width given the input width (already validated).
    fn out_width(&self, in_width: usize) -> usize {
        match self {
            Layer::Affine(a) => a.out_width(),
            Layer::Relu => in_width,
            Layer::SplitEmbedConcat(segs) => segs.iter().map(|s| s.embed.out_width()).sum(),
        }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Affine(a) => {
                let mut out = Vec::with_capacity(a.out_width());
                a.apply_into(x, &mut out);
                out
            }
            Layer::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Layer::SplitEmbedConcat(segs) => {
                let mut out = Vec::with_capacity(self.out_width(x.len()));
                for s in segs {
                    s.embed.apply_into(&x[s.offset..s.offset + s.length], &mut out);
                }
                out
            }
        }
    }
}

/// Maps raw output logits to the action the deployed agent takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ActionDecoder {
    /// Argmax over outputs; `action_values[i]` is the magnitude of output `i`.
    Discrete { action_values: Vec<f64> },
    /// Output `mean_index` is the mean of a Gaussian with fixed `sigma`.
    ContinuousMean { mean_index: usize, sigma: f64 },
    /// Outputs are plain values with no action semantics (coupled networks
    /// exported for external engines).
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    input_width: usize,
    layers: Vec<Layer>,
    decoder: ActionDecoder,
    output_width: usize,
}

impl Network {
    pub fn new(
        name: impl Into<String>,
        input_width: usize,
        layers: Vec<Layer>,
        decoder: ActionDecoder,
    ) -> Result<Self, NetworkError> {
        if input_width == 0 {
            return Err(invalid("input_width", "must be positive"));
        }
        if layers.is_empty() {
            return Err(invalid("layers", "network has no layers"));
        }
        let mut width = input_width;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    if a.in_width() != width {
                        return Err(invalid(
                            format!("layers[{i}].weights"),
                            format!("expects {} inputs but receives {width}", a.in_width()),
                        ));
                    }
                }
                Layer::Relu => {}
                Layer::SplitEmbedConcat(segs) => check_segments(segs, width, i)?,
            }
            width = layer.out_width(width);
        }
        if !matches!(layers.last(), Some(Layer::Affine(_))) {
            return Err(invalid(
                format!("layers[{}]", layers.len() - 1),
                "final layer must be affine (raw logits)",
            ));
        }
        match &decoder {
            ActionDecoder::Discrete { action_values } => {
                if action_values.len() != width {
                    return Err(invalid(
                        "decoder.action_values",
                        format!("{} values for {width} outputs", action_values.len()),
                    ));
                }
                if let Some(v) = action_values.iter().find(|v| !v.is_finite()) {
                    return Err(invalid("decoder.action_values", format!("non-finite value {v}")));
                }
                if let Some(i) = (1..action_values.len()).find(|&i| action_values[i] <= action_values[i - 1]) {
                    return Err(invalid(
                        format!("decoder.action_values[{i}]"),
                        "action values must be strictly increasing",
                    ));
                }
            }
            ActionDecoder::ContinuousMean { mean_index, sigma } => {
                if *mean_index >= width {
                    return Err(invalid(
                        "decoder.mean_index",
                        format!("index {mean_index} out of range for {width} outputs"),
                    ));
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(invalid("decoder.sigma", format!("must be positive, got {sigma}")));
                }
            }
            ActionDecoder::Raw => {}
        }
        Ok(Self {
            name: name.into(),
            input_width,
            layers,
            decoder,
            output_width: width,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn decoder(&self) -> &ActionDecoder {
        &self.decoder
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Raw output logits for input `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_width {
            return Err(NetworkError::DimensionMismatch {
                expected: self.input_width,
                got: x.len(),
            });
        }
        let mut h = self.layers[0].apply(x);
        for layer in &self.layers[1..] {
            h = layer.apply(&h);
        }
        Ok(h)
    }

    /// Deployed action for the given logits. Discrete argmax ties go to the
    /// lowest index.
    pub fn decode_action(&self, logits: &[f64]) -> Result<f64, NetworkError> {
        if logits.len() != self.output_width {
            return Err(NetworkError::DimensionMismatch {
                expected: self.output_width,
                got: logits.len(),
            });
        }
        match &self.decoder {
            ActionDecoder::Discrete { action_values } => Ok(action_values[argmax(logits)]),
            ActionDecoder::ContinuousMean { mean_index, .. } => Ok(logits[*mean_index]),
            ActionDecoder::Raw => Err(NetworkError::NoAction),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(s)?;
        file.into_network()
    }

    /// Compact JSON with every float written to 17 significant digits.
    pub fn to_json_string(&self) -> String {
        json::to_string_full_precision(&NetworkFile::from(self))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let path = path.as_ref();
        json::write_atomic(path, self.to_json_string().as_bytes()).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Index of the maximum logit, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_segments(segs: &[Segment], width: usize, layer: usize) -> Result<(), NetworkError> {
    if segs.is_empty() {
        return Err(invalid(format!("layers[{layer}].segments"), "no segments"));
    }
    let mut next = 0;
    for (k, s) in segs.iter().enumerate() {
        let at = format!("layers[{layer}].segments[{k}]");
        if s.offset != next {
            return Err(invalid(
                format!("{at}.offset"),
                format!("segment starts at {} but previous ends at {next}", s.offset),
            ));
        }
        if s.length == 0 {
            return Err(invalid(format!("{at}.length"), "segment is empty"));
        }
        if s.embed.in_width() != s.length {
            return Err(invalid(
                format!("{at}.weights"),
                format!("embedding consumes {} inputs, segment length is {}", s.embed.in_width(), s.length),
            ));
        }
        next = s.offset + s.length;
    }
    if next != width {
        return Err(invalid(
            format!("layers[{layer}].segments"),
            format!("segments cover {next} inputs, layer receives {width}"),
        ));
    }
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Network::from_json_str(&text)
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    name: String,
    input_width: usize,
    layers: Vec<LayerFile>,
    decoder: ActionDecoder,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerFile {
    Affine { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu,
    SplitEmbedConcat { segments: Vec<SegmentFile> },
}

#[derive(Serialize, Deserialize)]
struct SegmentFile {
    offset: usize,
    length: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl NetworkFile {
    fn into_network(self) -> Result<Network, NetworkError> {
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| match l {
                LayerFile::Affine { weights, bias } => {
                    AffineLayer::from_rows_at(weights, bias, &format!("layers[{i}]")).map(Layer::Affine)
                }
                LayerFile::Relu => Ok(Layer::Relu),
                LayerFile::SplitEmbedConcat { segments } => segments
                    .into_iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let embed =
                            AffineLayer::from_rows_at(s.weights, s.bias, &format!("layers[{i}].segments[{k}]"))?;
                        Ok(Segment {
                            offset: s.offset,
                            length: s.length,
                            embed,
                        })
                    })
                    .collect::<Result<Vec<_>, NetworkError>>()
                    .map(Layer::SplitEmbedConcat),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Network::new(self.name, self.input_width, layers, self.decoder)
    }
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Affine(a) => LayerFile::Affine {
                    weights: a.rows(),
                    bias: a.bias.to_vec(),
                },
                Layer::Relu => LayerFile::Relu,
                Layer::SplitEmbedConcat(segs) => LayerFile::SplitEmbedConcat {
                    segments: segs
                        .iter()
                        .map(|s| SegmentFile {
                            offset: s.offset,
                            length: s.length,
                            weights: s.embed.rows(),
                            bias: s.embed.bias.to_vec(),
                        })
                        .collect(),
                },
            })
            .collect();
        NetworkFile {
            name: net.name.clone(),
            input_width: net.input_width,
            layers,
            decoder: net.decoder.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine(rows: Vec<Vec<f64>>, bias: Vec<f64>) -> Layer {
        Layer::Affine(AffineLayer::from_rows(rows, bias).unwrap())
    }

    fn identity_net() -> Network {
        Network::new(
            "identity",
            1,
            vec![affine(vec![vec![1.0]], vec![0.0])],
            ActionDecoder::Discrete {
                action_values: vec![0.0],
            },
        )
        .unwrap()
    }

    fn random_net(rng: &mut ChaCha8Rng, widths: &[usize], outputs: usize) -> Network {
        let mut layers = Vec::new();
        for w in widths.windows(2) {
            let rows = (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            layers.push(affine(rows, bias));
            layers.push(Layer::Relu);
        }
        layers.pop();
        Network::new(
            "random",
            widths[0],
            layers,
            ActionDecoder::Discrete {
                action_values: (0..outputs).map(|i| i as f64).collect(),
            },
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_loads() {
        let text = r#"{"name":"id","input_width":1,
            "layers":[{"kind":"affine","weights":[[1.0]],"bias":[0.0]}],
            "decoder":{"mode":"discrete","action_values":[0.0]}}"#;
        let net = Network::from_json_str(text).unwrap();
        assert_eq!(net.input_width(), 1);
        assert_eq!(net.forward(&[3.5]).unwrap(), vec![3.5]);
    }

    #[test]
    fn bias_length_mismatch_names_layer() {
        let text = r#"{"name":"bad","input_width":1,
            "layers":[{"kind":"relu"},{"kind":"affine","weights":[[1.0],[2.0]],"bias":[0.0]}],
            "decoder":{"mode":"discrete","action_values":[0.0, 1.0]}}"#;
        match Network::from_json_str(text) {
            Err(NetworkError::Validation { location, .. }) => assert_eq!(location, "layers[1].bias"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_increasing_actions_and_trailing_relu() {
        let err = Network::new(
            "n",
            1,
            vec![affine(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0])],
            ActionDecoder::Discrete {
                action_values: vec![1.0, 1.0],
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("action_values[1]"), "{err}");

        let err = Network::new(
            "n",
            1,
            vec![affine(vec![vec![1.0]], vec![0.0]), Layer::Relu],
            ActionDecoder::Raw,
        )
        .unwrap_err();
        assert!(err.to_string().contains("final layer"), "{err}");
    }

    #[test]
    fn rejects_nan_weight() {
        let err = AffineLayer::from_rows(vec![vec![f64::NAN]], vec![0.0]).unwrap_err();
        assert!(err.to_string().contains("weights[0][0]"), "{err}");
    }

    #[test]
    fn rejects_non_tiling_segments() {
        let seg = |offset, length| Segment {
            offset,
            length,
            embed: AffineLayer::from_rows(vec![vec![1.0; length]], vec![0.0]).unwrap(),
        };
        let layers = vec![
            Layer::SplitEmbedConcat(vec![seg(0, 1), seg(2, 1)]),
            affine(vec![vec![1.0, 1.0]], vec![0.0]),
        ];
        let err = Network::new("n", 3, layers, ActionDecoder::Raw).unwrap_err();
        assert!(err.to_string().contains("segments[1].offset"), "{err}");
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        let net = Network::new(
            "clip",
            1,
            vec![affine(vec![vec![-2.0]], vec![1.0]), Layer::Relu, affine(vec![vec![1.0]], vec![0.0])],
            ActionDecoder::Discrete {
                action_values: vec![0.0],
            },
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NetworkError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn forward_matches_hand_rolled_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = random_net(&mut rng, &[2, 4, 3], 3);
        let x = [0.3, -0.7];
        // Straight-line oracle over the raw weight lists.
        let mut h: Vec<f64> = x.to_vec();
        let affines: Vec<&AffineLayer> = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Affine(a) => Some(a),
                _ => None,
            })
            .collect();
        for (k, a) in affines.iter().enumerate() {
            let mut next = vec![0.0; a.out_width()];
            for r in 0..a.out_width() {
                let mut s = a.bias()[r];
                for c in 0..a.in_width() {
                    s += a.weights()[[r, c]] * h[c];
                }
                next[r] = if k + 1 < affines.len() { s.max(0.0) } else { s };
            }
            h = next;
        }
        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&h) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn decode_examples() {
        let net = Network::new(
            "p",
            1,
            vec![affine(vec![vec![0.0]; 6], vec![0.0; 6])],
            ActionDecoder::Discrete {
                action_values: vec![300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0],
            },
        )
        .unwrap();
        assert_eq!(net.decode_action(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(), 4300.0);

        let tie = Network::new(
            "t",
            1,
            vec![affine(vec![vec![0.0]; 2], vec![0.0; 2])],
            ActionDecoder::Discrete {
                action_values: vec![0.0, 1.0],
            },
        )
        .unwrap();
        assert_eq!(tie.decode_action(&[0.5, 0.5]).unwrap(), 0.0);

        let cont = Network::new(
            "c",
            1,
            vec![affine(vec![vec![0.0]], vec![0.0])],
            ActionDecoder::ContinuousMean {
                mean_index: 0,
                sigma: 0.5,
            },
        )
        .unwrap();
        assert_eq!(cont.decode_action(&[0.13]).unwrap(), 0.13);
        assert!(matches!(cont.decode_action(&[0.1, 0.2]), Err(NetworkError::DimensionMismatch { .. })));
    }

    #[test]
    fn save_load_round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = random_net(&mut rng, &[3, 5, 4], 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back, net);
        for (a, b) in net.layers().iter().zip(back.layers()) {
            if let (Layer::Affine(a), Layer::Affine(b)) = (a, b) {
                for (x, y) in a.weights().iter().zip(b.weights().iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
        assert_eq!(identity_net().to_json_string(), Network::from_json_str(&identity_net().to_json_string()).unwrap().to_json_string());
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_constant_shift(
            logits in proptest::collection::vec(-64i32..64, 1..8),
            shift in -64i32..64,
        ) {
            // Multiples of 1/8 keep the shift exact.
            let l: Vec<f64> = logits.iter().map(|&v| v as f64 / 8.0).collect();
            let shifted: Vec<f64> = l.iter().map(|v| v + shift as f64 / 8.0).collect();
            prop_assert_eq!(argmax(&l), argmax(&shifted));
        }

        #[test]
        fn forward_is_affine_within_an_activation_region(
            seed in 0u64..500,
            alpha in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng, &[2, 6, 3], 3);
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = [x[0] + rng.random_range(-0.01..0.01), x[1] + rng.random_range(-0.01..0.01)];
            let pattern = |p: &[f64]| -> Vec<bool> {
                let Layer::Affine(a) = &net.layers()[0] else { unreachable!() };
                let mut out = Vec::new();
                a.apply_into(p, &mut out);
                out.iter().map(|v| *v > 0.0).collect()
            };
            let z = [alpha * x[0] + (1.0 - alpha) * y[0], alpha * x[1] + (1.0 - alpha) * y[1]];
            prop_assume!(pattern(&x) == pattern(&y) && pattern(&x) == pattern(&z));
            let fx = net.forward(&x).unwrap();
            let fy = net.forward(&y).unwrap();
            let fz = net.forward(&z).unwrap();
            for k in 0..3 {
                let lin = alpha * fx[k] + (1.0 - alpha) * fy[k];
                prop_assert!((fz[k] - lin).abs() < 1e-12);
            }
        }
    }
}
