//! Quantized network model and its bit-exact reference inference.
//!
//! A [`QuantizedMLP`] is the single description consumed by both the
//! software oracle ([`infer_reference`]) and the circuit compiler. All
//! arithmetic on the inference path is integer: symmetric int8 weights and
//! activations with zero point 0, accumulators saturated at a profiled
//! width, then a multiply-round-shift requantizer back to int8.

mod arith;
pub mod dataset;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arith::{
    bits_needed_signed, derive_requant_params, requantize, saturate, signed_range, RequantParams,
    ACT_WIDTH, MAX_ACC_WIDTH, MAX_REQUANT_SHIFT, MIN_ACC_WIDTH, REQUANT_M_BITS,
};
pub use dataset::{Dataset, Sample, Split};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {layer}: {msg}")]
    Layer { layer: usize, msg: String },
    #[error("invalid requantizer: {0}")]
    Requant(String),
    #[error("model has no layers")]
    Empty,
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Requantizer parameters shared by a layer or given per neuron.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RequantSpec {
    Shared(RequantParams),
    PerNeuron(Vec<RequantParams>),
}

impl RequantSpec {
    pub fn for_neuron(&self, j: usize) -> RequantParams {
        match self {
            RequantSpec::Shared(p) => *p,
            RequantSpec::PerNeuron(v) => v[j],
        }
    }
}

/// One fully connected layer with int8 weights stored `[out][in]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QLayer {
    pub weights: Vec<Vec<i8>>,
    pub acc_widths: Vec<u32>,
    pub requant: RequantSpec,
    pub activation: Activation,
    pub bias: Option<Vec<i64>>,
}

impl QLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn bias_of(&self, j: usize) -> i64 {
        self.bias.as_ref().map_or(0, |b| b[j])
    }

    /// Worst-case accumulator range for neuron `j` over inputs in
    /// `[in_lo, in_hi]`.
    pub fn acc_bounds(&self, j: usize, in_lo: i64, in_hi: i64) -> (i64, i64) {
        let mut lo = self.bias_of(j);
        let mut hi = lo;
        for &w in &self.weights[j] {
            let (a, b) = (w as i64 * in_lo, w as i64 * in_hi);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }

    /// Width that can hold any accumulator value without saturation.
    pub fn full_acc_width(&self, j: usize) -> u32 {
        let (lo, hi) = self.acc_bounds(j, -128, 127);
        bits_needed_signed(lo)
            .max(bits_needed_signed(hi))
            .max(MIN_ACC_WIDTH)
    }
}

/// A layered integer network.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMLP {
    pub name: String,
    pub layers: Vec<QLayer>,
    /// Real value of one input LSB. Metadata only.
    pub input_scale: Option<f64>,
    /// Real value of one output LSB. Metadata only.
    pub output_scale: Option<f64>,
}

impl QuantizedMLP {
    /// Build and validate a model.
    pub fn new(name: impl Into<String>, layers: Vec<QLayer>) -> Result<Self, ModelError> {
        let model = QuantizedMLP {
            name: name.into(),
            layers,
            input_scale: None,
            output_scale: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_width(&self) -> u32 {
        ACT_WIDTH
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, QLayer::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, QLayer::outputs)
    }

    /// Layer sizes, input count first.
    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.inputs()];
        arch.extend(self.layers.iter().map(QLayer::outputs));
        arch
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Empty);
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| ModelError::Layer { layer: l, msg };
            let n_out = layer.outputs();
            let n_in = layer.inputs();
            if n_out == 0 || n_in == 0 {
                return Err(err("empty weight matrix".into()));
            }
            if layer.weights.iter().any(|row| row.len() != n_in) {
                return Err(err("ragged weight matrix".into()));
            }
            if l > 0 && self.layers[l - 1].outputs() != n_in {
                return Err(err(format!(
                    "expects {n_in} inputs but previous layer has {} outputs",
                    self.layers[l - 1].outputs()
                )));
            }
            if layer.acc_widths.len() != n_out {
                return Err(err(format!(
                    "{} accumulator widths for {n_out} neurons",
                    layer.acc_widths.len()
                )));
            }
            if let Some(&w) = layer
                .acc_widths
                .iter()
                .find(|&&w| !(MIN_ACC_WIDTH..=MAX_ACC_WIDTH).contains(&w))
            {
                return Err(err(format!(
                    "accumulator width {w} outside [{MIN_ACC_WIDTH}, {MAX_ACC_WIDTH}]"
                )));
            }
            match &layer.requant {
                RequantSpec::Shared(p) => p.validate()?,
                RequantSpec::PerNeuron(ps) => {
                    if ps.len() != n_out {
                        return Err(err(format!(
                            "{} requantizers for {n_out} neurons",
                            ps.len()
                        )));
                    }
                    ps.iter().try_for_each(RequantParams::validate)?;
                }
            }
            if let Some(bias) = &layer.bias {
                if bias.len() != n_out {
                    return Err(err(format!("{} biases for {n_out} neurons", bias.len())));
                }
                if bias.iter().any(|b| b.unsigned_abs() >= 1 << 30) {
                    return Err(err("bias magnitude exceeds 2^30".into()));
                }
            }
            if l == last && layer.activation != Activation::None {
                return Err(err("final layer must not have an activation".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&ModelFile::from(self))
            .expect("model serialization is infallible");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// Write a model as JSON.
pub fn save_model(model: &QuantizedMLP, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, model.to_json())?;
    Ok(())
}

/// Read and validate a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<QuantizedMLP, ModelError> {
    QuantizedMLP::from_json(&fs::read_to_string(path)?)
}

/// Bit-exact integer inference; the equivalence target for every circuit.
pub fn infer_reference(model: &QuantizedMLP, x: &[i8]) -> Result<Vec<i8>, ModelError> {
    if x.len() != model.inputs() {
        return Err(ModelError::DimensionMismatch {
            expected: model.inputs(),
            got: x.len(),
        });
    }
    let mut act: Vec<i8> = x.to_vec();
    for layer in &model.layers {
        act = (0..layer.outputs())
            .map(|j| {
                let acc = saturate(neuron_acc(layer, j, &act), layer.acc_widths[j]);
                let acc = match layer.activation {
                    Activation::Relu => acc.max(0),
                    Activation::None => acc,
                };
                requantize(acc, layer.requant.for_neuron(j))
            })
            .collect();
    }
    Ok(act)
}

/// Exact (unsaturated) accumulator of neuron `j`.
pub(crate) fn neuron_acc(layer: &QLayer, j: usize, x: &[i8]) -> i64 {
    layer.weights[j]
        .iter()
        .zip(x)
        .map(|(&w, &v)| w as i64 * v as i64)
        .sum::<i64>()
        + layer.bias_of(j)
}

/// A random, valid model with the given layer sizes (input count first).
///
/// About a quarter of the weights are zero, accumulator widths fall between
/// the 9-bit floor and the full worst-case width (so saturation is
/// exercised) and requantizer scales keep typical outputs away from 0.
pub fn random_model(arch: &[usize], rng: &mut impl rand::Rng) -> QuantizedMLP {
    assert!(arch.len() >= 2, "need at least one layer");
    let n = arch.len() - 1;
    let layers = (0..n)
        .map(|l| {
            let weights: Vec<Vec<i8>> = (0..arch[l + 1])
                .map(|_| {
                    (0..arch[l])
                        .map(|_| if rng.gen_bool(0.25) { 0 } else { rng.gen() })
                        .collect()
                })
                .collect();
            let mut layer = QLayer {
                weights,
                acc_widths: vec![MIN_ACC_WIDTH; arch[l + 1]],
                requant: RequantSpec::Shared(RequantParams::IDENTITY),
                activation: if l + 1 == n { Activation::None } else { Activation::Relu },
                bias: None,
            };
            for j in 0..layer.outputs() {
                let full = layer.full_acc_width(j);
                layer.acc_widths[j] = rng.gen_range(MIN_ACC_WIDTH.max(full.saturating_sub(4))..=full);
            }
            let typical = layer.acc_widths.iter().copied().max().unwrap_or(MIN_ACC_WIDTH);
            layer.requant = RequantSpec::Shared(RequantParams {
                m: rng.gen_range(1 << 14..1 << 15),
                s: (typical + 6).min(MAX_REQUANT_SHIFT),
            });
            layer
        })
        .collect();
    QuantizedMLP::new("random", layers).expect("generated model is valid")
}

// On-disk schema. Weights are read as wide integers so that out-of-range
// values produce a validation error naming the layer instead of a serde
// type error.

#[derive(Serialize, Deserialize)]
struct ModelFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_scale: Option<f64>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<i64>>,
    acc_widths: Vec<u32>,
    requant: RequantSpec,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<i64>>,
}

impl From<&QuantizedMLP> for ModelFile {
    fn from(m: &QuantizedMLP) -> Self {
        ModelFile {
            name: m.name.clone(),
            input_scale: m.input_scale,
            output_scale: m.output_scale,
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l
                        .weights
                        .iter()
                        .map(|row| row.iter().map(|&w| w as i64).collect())
                        .collect(),
                    acc_widths: l.acc_widths.clone(),
                    requant: l.requant.clone(),
                    activation: l.activation,
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for QuantizedMLP {
    type Error = ModelError;

    fn try_from(file: ModelFile) -> Result<Self, ModelError> {
        let mut layers = Vec::with_capacity(file.layers.len());
        for (l, lf) in file.layers.into_iter().enumerate() {
            let mut weights = Vec::with_capacity(lf.weights.len());
            for row in lf.weights {
                let row = row
                    .into_iter()
                    .map(|w| {
                        i8::try_from(w).map_err(|_| ModelError::Layer {
                            layer: l,
                            msg: format!("weight {w} outside [-128, 127]"),
                        })
                    })
                    .collect::<Result<Vec<i8>, _>>()?;
                weights.push(row);
            }
            layers.push(QLayer {
                weights,
                acc_widths: lf.acc_widths,
                requant: lf.requant,
                activation: lf.activation,
                bias: lf.bias,
            });
        }
        let model = QuantizedMLP {
            name: file.name,
            layers,
            input_scale: file.input_scale,
            output_scale: file.output_scale,
        };
        model.validate()?;
        Ok(model)
    }
}
