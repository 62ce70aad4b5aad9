//! A small fully-connected encoder, the membership weight network, and the
//! episodic training loop that differentiates through every head.

mod graph;
pub mod tape;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::episodes::LabeledEmbeddingDataset;
use crate::error::{FsnError, Result};
use crate::geometry::EmbeddingVector;

pub use graph::{loss_and_gradient, reference_loss};
pub use train::{train, training_step, write_loss_csv, Adam, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// `y = W x + b` with `W` stored `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (inputs as f64).sqrt();
        Self {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
            bias: DVector::zeros(outputs),
        }
    }
}

/// Stack of dense layers with the activation applied between layers (not
/// after the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    activation: Activation,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(FsnError::Empty("layer list"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(FsnError::DimensionMismatch {
                    expected: pair[0].outputs(),
                    found: pair[1].inputs(),
                });
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(FsnError::DimensionMismatch {
                    expected: l.outputs(),
                    found: l.bias.len(),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(FsnError::NonFiniteTensor(format!("layer {i}")));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(FsnError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = &layer.weights * h + &layer.bias;
            if i < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order; each layer's weights row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for r in 0..l.outputs() {
                out.extend(l.weights.row(r).iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`Mlp::flatten`]; `flat` must hold exactly
    /// [`Mlp::param_count`] values.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.param_count());
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (rows, cols) = l.weights.shape();
                let weights = DMatrix::from_row_slice(rows, cols, &flat[offset..offset + rows * cols]);
                offset += rows * cols;
                let bias = DVector::from_column_slice(&flat[offset..offset + rows]);
                offset += rows;
                DenseLayer { weights, bias }
            })
            .collect();
        Self {
            layers,
            activation: self.activation,
        }
    }
}

/// Encoder `f_θ: ℝ^p → ℝ^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams(pub Mlp);

impl EncoderParams {
    /// Two-layer `tanh` network `p → hidden → m`.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let layers = vec![DenseLayer::random(input, hidden, rng), DenseLayer::random(hidden, output, rng)];
        Self(Mlp { layers, activation: Activation::Tanh })
    }

    /// Single linear layer with identity weights and zero bias.
    pub fn identity(dim: usize) -> Self {
        Self(Mlp {
            layers: vec![DenseLayer {
                weights: DMatrix::identity(dim, dim),
                bias: DVector::zeros(dim),
            }],
            activation: Activation::Identity,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.0.output_dim()
    }
}

/// Scores a simplex from its flattened `k × k` shifted Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNetParams(pub Mlp);

impl WeightNetParams {
    /// `blocks` hidden `tanh` layers of `width` units over `k²` inputs, one
    /// scalar output.
    pub fn init<R: Rng + ?Sized>(k: usize, width: usize, blocks: usize, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(blocks + 1);
        let mut inputs = k * k;
        for _ in 0..blocks {
            layers.push(DenseLayer::random(inputs, width, rng));
            inputs = width;
        }
        layers.push(DenseLayer::random(inputs, 1, rng));
        Self(Mlp { layers, activation: Activation::Tanh })
    }

    pub fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    pub fn score(&self, gram: &[f64]) -> Result<f64> {
        Ok(self.0.forward(&DVector::from_column_slice(gram))?[0])
    }
}

/// Everything that training updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub weight_net: Option<WeightNetParams>,
}

impl Model {
    pub fn new(encoder: EncoderParams) -> Self {
        Self {
            encoder,
            weight_net: None,
        }
    }

    pub fn with_weight_net(mut self, net: WeightNetParams) -> Self {
        self.weight_net = Some(net);
        self
    }

    pub fn param_count(&self) -> usize {
        self.encoder.0.param_count() + self.weight_net.as_ref().map_or(0, |w| w.0.param_count())
    }

    /// Encoder parameters followed by weight-net parameters.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.encoder.0.flatten();
        if let Some(w) = &self.weight_net {
            out.extend(w.0.flatten());
        }
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let split = self.encoder.0.param_count();
        Self {
            encoder: EncoderParams(self.encoder.0.with_flat(&flat[..split])),
            weight_net: self.weight_net.as_ref().map(|w| WeightNetParams(w.0.with_flat(&flat[split..]))),
        }
    }

    pub fn encode_dataset(&self, data: &LabeledEmbeddingDataset) -> Result<LabeledEmbeddingDataset> {
        let items = data
            .items()
            .iter()
            .map(|(x, label)| Ok((encode_one(&self.encoder, x)?, label.clone())))
            .collect::<Result<Vec<_>>>()?;
        LabeledEmbeddingDataset::new(items)
    }
}

fn encode_one(params: &EncoderParams, x: &EmbeddingVector) -> Result<EmbeddingVector> {
    let y = params.0.forward(x.as_vector())?;
    EmbeddingVector::from_vector(y).map_err(|_| FsnError::NonFiniteTensor("encoder output".into()))
}

/// Forward pass over a batch; items are encoded independently.
pub fn encode(params: &EncoderParams, batch: &[EmbeddingVector]) -> Result<Vec<EmbeddingVector>> {
    batch.iter().map(|x| encode_one(params, x)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpDoc {
    activation: Activation,
    layers: Vec<LayerDoc>,
}

impl From<&Mlp> for MlpDoc {
    fn from(m: &Mlp) -> Self {
        MlpDoc {
            activation: m.activation,
            layers: m
                .layers
                .iter()
                .map(|l| LayerDoc {
                    rows: l.outputs(),
                    cols: l.inputs(),
                    weights: (0..l.outputs()).flat_map(|r| l.weights.row(r).iter().copied().collect::<Vec<_>>()).collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = FsnError;

    fn try_from(doc: MlpDoc) -> Result<Self> {
        let layers = doc
            .layers
            .into_iter()
            .map(|l| {
                if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                    return Err(FsnError::Config(format!(
                        "layer shape {}x{} does not match {} weights / {} biases",
                        l.rows,
                        l.cols,
                        l.weights.len(),
                        l.bias.len()
                    )));
                }
                Ok(DenseLayer {
                    weights: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                    bias: DVector::from_vec(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers, doc.activation)
    }
}

const CHECKPOINT_FORMAT: &str = "fsn-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    encoder: MlpDoc,
    weight_net: Option<MlpDoc>,
    #[serde(default)]
    config: serde_json::Value,
}

/// Writes a self-describing JSON checkpoint; `config` is embedded verbatim.
pub fn write_checkpoint<W: Write>(out: W, model: &Model, config: &serde_json::Value) -> Result<()> {
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        encoder: (&model.encoder.0).into(),
        weight_net: model.weight_net.as_ref().map(|w| (&w.0).into()),
        config: config.clone(),
    };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Model> {
    let doc: CheckpointDoc = serde_json::from_reader(input)?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(FsnError::Config(format!("not a checkpoint: format '{}'", doc.format)));
    }
    Ok(Model {
        encoder: EncoderParams(doc.encoder.try_into()?),
        weight_net: doc.weight_net.map(Mlp::try_from).transpose()?.map(WeightNetParams),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
