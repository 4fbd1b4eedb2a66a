//! The six named architectures and their binding to a feature variant.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::classes::NUM_CLASSES;
use crate::features::{FeatureVariant, Matrix, N_MELS};
use crate::nn::{LayerSpec, Network, NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("unknown model `{0}` (expected one of: {names})", names = ModelKind::ids().join(", "))]
    UnknownModel(String),
    #[error("bad model spec: {0}")]
    Spec(String),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// LeNet with 3x3 kernels on 44.1 kHz features.
    CnnV1,
    CnnV2_1,
    CnnV2_2,
    CnnV2_3,
    SqueezeNet,
    Cnn1d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::CnnV1,
        ModelKind::CnnV2_1,
        ModelKind::CnnV2_2,
        ModelKind::CnnV2_3,
        ModelKind::SqueezeNet,
        ModelKind::Cnn1d,
    ];

    /// Command-line identifier, e.g. `cnn-v2-1`.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::CnnV1 => "cnn-v1",
            ModelKind::CnnV2_1 => "cnn-v2-1",
            ModelKind::CnnV2_2 => "cnn-v2-2",
            ModelKind::CnnV2_3 => "cnn-v2-3",
            ModelKind::SqueezeNet => "squeezenet",
            ModelKind::Cnn1d => "1d-cnn",
        }
    }

    /// Display name, e.g. `CNN-V2-1`.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CnnV1 => "CNN-V1",
            ModelKind::CnnV2_1 => "CNN-V2-1",
            ModelKind::CnnV2_2 => "CNN-V2-2",
            ModelKind::CnnV2_3 => "CNN-V2-3",
            ModelKind::SqueezeNet => "SqueezeNet",
            ModelKind::Cnn1d => "1D-CNN",
        }
    }

    pub fn ids() -> Vec<&'static str> {
        Self::ALL.iter().map(|k| k.id()).collect()
    }

    pub fn variant(self) -> FeatureVariant {
        match self {
            ModelKind::CnnV1 => FeatureVariant::V2,
            _ => FeatureVariant::V1,
        }
    }

    pub fn graph(self) -> ModelGraph {
        let v = self.variant();
        let mut g = match self {
            ModelKind::CnnV1 | ModelKind::CnnV2_1 => build_lenet(3, v),
            ModelKind::CnnV2_2 => build_lenet(5, v),
            ModelKind::CnnV2_3 => build_lenet(7, v),
            ModelKind::SqueezeNet => build_squeezenet_mini(v),
            ModelKind::Cnn1d => build_cnn1d(v),
        };
        g.name = self.name().to_string();
        g
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == t)
            .ok_or_else(|| ModelError::UnknownModel(s.trim().to_string()))
    }
}

/// Squeeze width and per-branch expand width of a fire module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FireSpec {
    pub squeeze: usize,
    pub expand: usize,
}

pub fn build_fire(spec: FireSpec) -> LayerSpec {
    LayerSpec::Fire { squeeze: spec.squeeze, expand: spec.expand }
}

/// A named layer stack bound to a feature variant and input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub name: String,
    pub variant: FeatureVariant,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

fn conv_block(filters: usize, k: usize) -> [LayerSpec; 3] {
    [LayerSpec::Conv2d { filters, kh: k, kw: k }, LayerSpec::BatchNorm, LayerSpec::Relu]
}

fn segment_shape_2d(v: FeatureVariant) -> Vec<usize> {
    vec![v.segment_frames(), N_MELS, 1]
}

/// Three conv blocks doubling from 8 filters, two 3x2 pools, a 512-unit
/// hidden layer and a 15-way softmax.
pub fn build_lenet(kernel: usize, variant: FeatureVariant) -> ModelGraph {
    let mut layers = Vec::new();
    layers.extend(conv_block(8, kernel));
    layers.push(LayerSpec::MaxPool2d { ph: 3, pw: 2 });
    layers.extend(conv_block(16, kernel));
    layers.push(LayerSpec::MaxPool2d { ph: 3, pw: 2 });
    layers.extend(conv_block(32, kernel));
    layers.extend([
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 512 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: NUM_CLASSES },
        LayerSpec::Softmax,
    ]);
    ModelGraph {
        name: format!("LeNet-{kernel}x{kernel}"),
        variant,
        input_shape: segment_shape_2d(variant),
        layers,
    }
}

/// Stem conv, six fire modules between three 2x2 pools, and a 1x1 conv to
/// 15 channels followed by global average pooling.
pub fn build_squeezenet_mini(variant: FeatureVariant) -> ModelGraph {
    let fire = |squeeze, expand| build_fire(FireSpec { squeeze, expand });
    let pool = LayerSpec::MaxPool2d { ph: 2, pw: 2 };
    let mut layers = Vec::new();
    layers.extend(conv_block(64, 3));
    layers.extend([pool, fire(16, 64), fire(16, 64), pool, fire(32, 128), fire(32, 128), pool]);
    layers.extend([fire(48, 192), fire(64, 256), LayerSpec::Dropout { rate: 0.5 }]);
    layers.extend([
        LayerSpec::Conv2d { filters: NUM_CLASSES, kh: 1, kw: 1 },
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Softmax,
    ]);
    ModelGraph { name: "SqueezeNet".into(), variant, input_shape: segment_shape_2d(variant), layers }
}

/// Convolution along time only, with the 64 mel bands as input channels.
pub fn build_cnn1d(variant: FeatureVariant) -> ModelGraph {
    let block = |filters| [LayerSpec::Conv1d { filters, k: 5 }, LayerSpec::BatchNorm, LayerSpec::Relu];
    let mut layers = Vec::new();
    layers.extend(block(64));
    layers.push(LayerSpec::MaxPool1d { p: 3 });
    layers.extend(block(128));
    layers.push(LayerSpec::MaxPool1d { p: 3 });
    layers.extend(block(256));
    layers.extend([
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 512 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: NUM_CLASSES },
        LayerSpec::Softmax,
    ]);
    ModelGraph {
        name: "1D-CNN".into(),
        variant,
        input_shape: vec![variant.segment_frames(), N_MELS],
        layers,
    }
}

impl ModelGraph {
    /// Per-sample shapes: the input followed by every layer's output.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        let mut shapes = vec![self.input_shape.clone()];
        for l in &self.layers {
            let next = l.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Checks the layer stack composes and ends in 15 outputs.
    pub fn validate(&self) -> Result<(), ModelError> {
        let shapes = self.shapes()?;
        let out = shapes.last().unwrap();
        if out != &[NUM_CLASSES] {
            return Err(ModelError::Spec(format!("{} outputs {out:?}, expected [{NUM_CLASSES}]", self.name)));
        }
        if self.input_shape.first() != Some(&self.variant.segment_frames()) {
            return Err(ModelError::Spec(format!(
                "{} expects {} frames per segment, input shape is {:?}",
                self.variant,
                self.variant.segment_frames(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Exact number of trainable parameters.
    pub fn param_count(&self) -> Result<usize, ModelError> {
        let shapes = self.shapes()?;
        let mut total = 0;
        for (l, s) in self.layers.iter().zip(&shapes) {
            total += l.param_count(s)?;
        }
        Ok(total)
    }

    pub fn build(&self, seed: u64) -> Result<Network, ModelError> {
        Ok(Network::new(self.layers.clone(), &self.input_shape, seed)?)
    }

    /// Same topology with every hidden width divided by `divisor` (at least
    /// one unit); the final 15-way layer is kept.
    pub fn narrowed(&self, divisor: usize) -> ModelGraph {
        let d = |v: usize| (v / divisor.max(1)).max(1);
        let last = self.layers.iter().rposition(|l| {
            matches!(l, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Conv1d { .. })
        });
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                _ if Some(i) == last => *l,
                LayerSpec::Conv2d { filters, kh, kw } => LayerSpec::Conv2d { filters: d(filters), kh, kw },
                LayerSpec::Conv1d { filters, k } => LayerSpec::Conv1d { filters: d(filters), k },
                LayerSpec::Dense { units } => LayerSpec::Dense { units: d(units) },
                LayerSpec::Fire { squeeze, expand } => LayerSpec::Fire { squeeze: d(squeeze), expand: d(expand) },
                other => other,
            })
            .collect();
        ModelGraph { layers, ..self.clone() }
    }

    /// Canonical text: `model`, `variant` and `input` header lines followed
    /// by one layer per line.
    pub fn to_spec_text(&self) -> String {
        let mut s = format!("model {}\nvariant {}\ninput", self.name, self.variant);
        for d in &self.input_shape {
            s.push_str(&format!(" {d}"));
        }
        s.push('\n');
        for l in &self.layers {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    /// Parses [`ModelGraph::to_spec_text`] output; `;` also separates lines.
    pub fn parse_spec_text(text: &str) -> Result<ModelGraph, ModelError> {
        let mut name = None;
        let mut variant = None;
        let mut input = None;
        let mut layers = Vec::new();
        for line in text.split(['\n', ';']).map(str::trim).filter(|l| !l.is_empty()) {
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match head {
                "model" => name = Some(rest.to_string()),
                "variant" => {
                    variant = Some(
                        rest.parse::<FeatureVariant>()
                            .map_err(|_| ModelError::Spec(format!("unknown variant `{rest}`")))?,
                    )
                }
                "input" => {
                    let dims: Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
                    input = Some(dims.map_err(|_| ModelError::Spec(format!("bad input shape `{rest}`")))?);
                }
                _ => layers.push(line.parse::<LayerSpec>()?),
            }
        }
        let missing = |what: &str| ModelError::Spec(format!("missing `{what}` line"));
        let graph = ModelGraph {
            name: name.ok_or_else(|| missing("model"))?,
            variant: variant.ok_or_else(|| missing("variant"))?,
            input_shape: input.ok_or_else(|| missing("input"))?,
            layers,
        };
        if graph.layers.is_empty() {
            return Err(ModelError::Spec("no layers".into()));
        }
        graph.shapes()?;
        Ok(graph)
    }

    /// Packs segments into a `[N, ..input_shape]` batch.
    pub fn batch(&self, segments: &[&Matrix]) -> Result<Tensor, ModelError> {
        let items: Vec<&[f64]> = segments.iter().map(|m| m.as_slice()).collect();
        let per: usize = self.input_shape.iter().product();
        if let Some(bad) = items.iter().find(|s| s.len() != per) {
            return Err(ModelError::Spec(format!(
                "segment of {} values does not fit input {:?}",
                bad.len(),
                self.input_shape
            )));
        }
        Ok(Tensor::stack(&items, &self.input_shape)?)
    }
}

/// A graph together with its live network.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: ModelGraph,
    pub network: Network,
}

impl Model {
    pub fn new(graph: ModelGraph, seed: u64) -> Result<Self, ModelError> {
        let network = graph.build(seed)?;
        Ok(Self { graph, network })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.graph.variant
    }

    /// Eval-mode class distributions, one row per segment.
    pub fn predict_segments(&self, segments: &[&Matrix]) -> Result<Vec<Vec<f64>>, ModelError> {
        let x = self.graph.batch(segments)?;
        let p = self.network.forward_eval(&x)?;
        Ok(p.data().chunks(p.item_len()).map(<[f64]>::to_vec).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(g: &ModelGraph) -> Vec<Vec<usize>> {
        g.shapes().unwrap()
    }

    #[test]
    fn lenet_v1_shape_trace() {
        let g = build_lenet(3, FeatureVariant::V1);
        let s = trace(&g);
        let after = |i: usize| s[i + 1].clone();
        assert_eq!(s[0], [111, 64, 1]);
        assert_eq!(after(0), [111, 64, 8]);
        assert_eq!(after(3), [37, 32, 8]);
        assert_eq!(after(4), [37, 32, 16]);
        assert_eq!(after(7), [12, 16, 16]);
        assert_eq!(after(8), [12, 16, 32]);
        assert_eq!(after(12), [6144]);
        assert_eq!(after(13), [512]);
        assert_eq!(s.last().unwrap(), &[15]);
    }

    #[test]
    fn lenet_v2_pools() {
        let g = build_lenet(3, FeatureVariant::V2);
        let s = trace(&g);
        assert_eq!(s[0], [43, 64, 1]);
        assert_eq!(s[4], [14, 32, 8]);
        assert_eq!(s[8], [4, 16, 16]);
        assert_eq!(s[13], [2048]);
    }

    #[test]
    fn lenet_kernels_differ_only_in_kernel_size() {
        let graphs: Vec<_> = [3, 5, 7].map(|k| build_lenet(k, FeatureVariant::V1)).into();
        assert_ne!(graphs[0], graphs[1]);
        assert_ne!(graphs[1], graphs[2]);
        for g in &graphs[1..] {
            for (a, b) in graphs[0].layers.iter().zip(&g.layers) {
                match (a, b) {
                    (LayerSpec::Conv2d { filters: f1, .. }, LayerSpec::Conv2d { filters: f2, .. }) => {
                        assert_eq!(f1, f2)
                    }
                    _ => assert_eq!(a, b),
                }
            }
        }
        // conv kernel weights are (8*1 + 16*8 + 32*16) per unit of kernel area
        let per_area = 8 + 16 * 8 + 32 * 16;
        let counts: Vec<usize> = graphs.iter().map(|g| g.param_count().unwrap()).collect();
        assert_eq!(counts[1] - counts[0], per_area * (25 - 9));
        assert_eq!(counts[2] - counts[1], per_area * (49 - 25));
    }

    #[test]
    fn fire_module_shape() {
        let f = build_fire(FireSpec { squeeze: 16, expand: 64 });
        assert_eq!(f.output_shape(&[55, 32, 64]).unwrap(), [55, 32, 128]);
    }

    #[test]
    fn squeezenet_trace() {
        let g = build_squeezenet_mini(FeatureVariant::V1);
        let s = trace(&g);
        let fires = g.layers.iter().filter(|l| matches!(l, LayerSpec::Fire { .. })).count();
        assert_eq!(fires, 6);
        let pools: Vec<_> = g
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::MaxPool2d { .. }))
            .map(|(i, _)| s[i + 1][..2].to_vec())
            .collect();
        assert_eq!(pools, [vec![55, 32], vec![27, 16], vec![13, 8]]);
        let channels: Vec<usize> = g
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv2d { .. } | LayerSpec::Fire { .. }))
            .map(|(i, _)| s[i + 1][2])
            .collect();
        assert_eq!(channels, [64, 128, 128, 256, 256, 384, 512, 15]);
        let gap = g.layers.iter().position(|l| *l == LayerSpec::GlobalAvgPool).unwrap();
        assert_eq!(s[gap], [13, 8, 15]);
        assert_eq!(s.last().unwrap(), &[15]);
    }

    #[test]
    fn cnn1d_trace() {
        let g = build_cnn1d(FeatureVariant::V1);
        let s = trace(&g);
        assert_eq!(s[0], [111, 64]);
        assert_eq!(s[1], [111, 64]);
        assert_eq!(s[4], [37, 64]);
        assert_eq!(s[5], [37, 128]);
        assert_eq!(s[8], [12, 128]);
        assert_eq!(s[9], [12, 256]);
        assert_eq!(s[13], [3072]);
        assert_eq!(s[14], [512]);
        assert!(!g.layers.iter().any(|l| matches!(l, LayerSpec::Conv2d { .. })));
        assert!(matches!(g.layers[13], LayerSpec::Dense { units: 512 }));
    }

    #[test]
    fn closed_form_counts() {
        let dense = LayerSpec::Dense { units: 512 };
        assert_eq!(dense.param_count(&[6144]).unwrap(), 3_146_240);
        let conv = LayerSpec::Conv2d { filters: 8, kh: 3, kw: 3 };
        assert_eq!(conv.param_count(&[111, 64, 1]).unwrap(), 80);
    }

    #[test]
    fn kinds_bind_to_variants() {
        assert_eq!(ModelKind::CnnV1.graph().variant, FeatureVariant::V2);
        assert_eq!(ModelKind::CnnV1.graph().layers, build_lenet(3, FeatureVariant::V2).layers);
        assert_eq!(ModelKind::CnnV2_1.graph().layers, build_lenet(3, FeatureVariant::V1).layers);
        assert_eq!(ModelKind::CnnV2_3.graph().layers, build_lenet(7, FeatureVariant::V1).layers);
        for k in ModelKind::ALL {
            let g = k.graph();
            g.validate().unwrap();
            assert_eq!(k.id().parse::<ModelKind>().unwrap(), k);
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            if k != ModelKind::CnnV1 {
                assert_eq!(g.variant, FeatureVariant::V1);
            }
        }
        let err = "vgg".parse::<ModelKind>().unwrap_err().to_string();
        assert!(err.contains("cnn-v2-1") && err.contains("1d-cnn"), "{err}");
    }

    #[test]
    fn spec_text_round_trips() {
        for k in ModelKind::ALL {
            let g = k.graph();
            let text = g.to_spec_text();
            assert_eq!(ModelGraph::parse_spec_text(&text).unwrap(), g);
            let inline = text.replace('\n', "; ");
            assert_eq!(ModelGraph::parse_spec_text(&inline).unwrap(), g);
        }
        assert!(ModelGraph::parse_spec_text("model x\nvariant v1\ninput 4 4 1\nconv2d 2 2 2 same").is_err());
        assert!(ModelGraph::parse_spec_text("variant v1\ninput 4 4 1\nrelu").is_err());
    }

    #[test]
    fn narrowed_keeps_output_width() {
        for k in ModelKind::ALL {
            let g = k.graph().narrowed(8);
            g.validate().unwrap();
            assert!(g.param_count().unwrap() < k.graph().param_count().unwrap());
        }
    }
}
