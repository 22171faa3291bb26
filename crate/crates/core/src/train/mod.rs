//! Training of small MLPs for export as integer networks.
//!
//! The latent weights are real-valued. Every forward pass sees them on the
//! int8 grid that inference will use (or projected onto a selected weight
//! set), and sees each hidden activation rounded and clamped to its 8-bit
//! output scale. Gradients pass straight through both roundings. Exporting
//! a latent model therefore yields a [`QuantizedMLP`] that computes, up to
//! requantizer rounding, the function that was trained.

mod data;
mod hat;
mod profile;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::WeightSet;
use crate::qmodel::{
    derive_requant_params, infer_reference, Activation, Dataset, ModelError, QLayer,
    QuantizedMLP, RequantParams, RequantSpec, Sample, Split, MIN_ACC_WIDTH,
};

pub use data::{linearly_separable, planted_teacher, separable_blobs, PlantedTeacherSpec};
pub use hat::{project_to_set, train_hat, HatOutcome, SelectionState};
pub use profile::{profile_adder_widths, width_at_quantile};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("no accumulator values to profile")]
    EmptyProfile,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Quality measure for a model on a dataset split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Fraction of correctly classified samples. A single output is read as
    /// a binary decision `y > 0`.
    Accuracy,
    /// Mean squared error of the first output in real units.
    Mse,
    /// Fraction of samples where the prediction and the target fall on
    /// different sides of 0.5.
    BerProxy,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy)
    }

    /// True when `value` is no more than `eps` worse than `baseline`.
    pub fn within(self, value: f64, baseline: f64, eps: f64) -> bool {
        if self.higher_is_better() {
            value >= baseline - eps
        } else {
            value <= baseline + eps
        }
    }

    fn is_classification(self) -> bool {
        matches!(self, Metric::Accuracy)
    }
}

/// Hardware-aware training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HatConfig {
    /// Size of the first selected weight set.
    pub start: usize,
    /// Values added per expansion.
    pub step: usize,
    /// Allowed metric loss against the QAT baseline (0.01 = one point of
    /// accuracy).
    pub epsilon: f64,
    /// Training epochs per set size.
    pub epochs: usize,
    /// Project weights onto the set in every forward pass.
    pub project_forward: bool,
    /// Overwrite latent weights with their projections after each epoch.
    pub replace_at_epoch_end: bool,
    /// Start every expansion from the QAT weights instead of continuing.
    pub restart: bool,
}

impl Default for HatConfig {
    fn default() -> Self {
        HatConfig {
            start: 40,
            step: 10,
            epsilon: 0.01,
            epochs: 15,
            project_forward: true,
            replace_at_epoch_end: true,
            restart: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// The learning rate is multiplied by this factor `decay_steps` times,
    /// at evenly spaced epochs.
    pub decay_factor: f64,
    pub decay_steps: usize,
    /// Momentum of the running activation-range estimate.
    pub ema_momentum: f64,
    pub bias: bool,
    pub metric: Metric,
    pub seed: u64,
    pub hat: HatConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            decay_factor: 0.1,
            decay_steps: 3,
            ema_momentum: 0.9,
            bias: false,
            metric: Metric::Accuracy,
            seed: 0,
            hat: HatConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad("ema_momentum must lie in [0, 1)");
        }
        let h = &self.hat;
        if h.start == 0 || h.start > 256 || h.step == 0 {
            return bad("hat.start must lie in 1..=256 and hat.step must be positive");
        }
        if !(h.epsilon >= 0.0) {
            return bad("hat.epsilon must be non-negative");
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize, total: usize) -> f64 {
        let period = total.div_ceil(self.decay_steps.max(1)).max(1);
        let drops = (epoch / period).min(self.decay_steps) as i32;
        self.learning_rate * self.decay_factor.powi(drops)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatLayer {
    /// `[out][in]`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
    /// `false` marks a pruned weight that stays zero.
    pub mask: Option<Vec<Vec<bool>>>,
    /// Real value of one output LSB.
    pub out_scale: f64,
    /// Fixed weight scale; when absent it follows `max|w| / 127`.
    pub weight_scale: Option<f64>,
}

impl FloatLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_scale(&self) -> f64 {
        if let Some(s) = self.weight_scale {
            return s;
        }
        let max = self
            .weights
            .iter()
            .flatten()
            .fold(0.0f64, |m, w| m.max(w.abs()));
        if max > 0.0 {
            max / 127.0
        } else {
            1.0
        }
    }

    fn kept(&self, j: usize, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[j][i])
    }
}

/// Latent real-valued network mirroring a [`QuantizedMLP`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatMLP {
    pub layers: Vec<FloatLayer>,
    /// Real value of one input LSB.
    pub input_scale: f64,
}

/// Weight grid used by forward passes and export.
#[derive(Clone, Copy)]
pub(crate) enum Grid<'a> {
    Uniform,
    Set(&'a WeightSet),
}

impl Grid<'_> {
    fn quantize(self, w: f64, scale: f64) -> i8 {
        match self {
            Grid::Uniform => (w / scale).round().clamp(-127.0, 127.0) as i8,
            Grid::Set(s) => project_to_set(w, s, scale),
        }
    }
}

/// A layer as the forward pass sees it.
struct Prepared {
    /// Quantized weights in real units.
    w: Vec<Vec<f64>>,
    q: Vec<Vec<i8>>,
    bias: Option<Vec<f64>>,
    bias_q: Option<Vec<i64>>,
    weight_scale: f64,
    in_scale: f64,
    out_scale: f64,
    activation: Activation,
}

impl FloatMLP {
    /// Random initialization, uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn new(arch: &[usize], input_scale: f64, bias: bool, rng: &mut impl Rng) -> Self {
        assert!(arch.len() >= 2 && arch.iter().all(|&n| n > 0), "bad architecture {arch:?}");
        let n = arch.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let a = (6.0 / (arch[l] + arch[l + 1]) as f64).sqrt();
                FloatLayer {
                    weights: (0..arch[l + 1])
                        .map(|_| (0..arch[l]).map(|_| rng.gen_range(-a..a)).collect())
                        .collect(),
                    bias: bias.then(|| vec![0.0; arch[l + 1]]),
                    activation: if l + 1 == n { Activation::None } else { Activation::Relu },
                    mask: None,
                    out_scale: 0.0,
                    weight_scale: None,
                }
            })
            .collect();
        FloatMLP {
            layers,
            input_scale,
        }
    }

    pub fn arch(&self) -> Vec<usize> {
        let mut a = vec![self.layers[0].inputs()];
        a.extend(self.layers.iter().map(FloatLayer::outputs));
        a
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("latent model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn prepare(&self, grid: Grid) -> Vec<Prepared> {
        let mut in_scale = self.input_scale;
        self.layers
            .iter()
            .map(|layer| {
                let ws = layer.weight_scale();
                let q: Vec<Vec<i8>> = layer
                    .weights
                    .iter()
                    .map(|row| row.iter().map(|&w| grid.quantize(w, ws)).collect())
                    .collect();
                let w = q
                    .iter()
                    .map(|row| row.iter().map(|&v| v as f64 * ws).collect())
                    .collect();
                let lsb = ws * in_scale;
                let bias_q: Option<Vec<i64>> = layer.bias.as_ref().map(|b| {
                    b.iter()
                        .map(|&v| (v / lsb).round().clamp(-(1 << 24) as f64, (1 << 24) as f64) as i64)
                        .collect()
                });
                let bias = bias_q
                    .as_ref()
                    .map(|b| b.iter().map(|&v| v as f64 * lsb).collect());
                // keep the requantizer scale below 1 so it fits the m / 2^s form
                let out_scale = layer.out_scale.max(lsb * (1.0 + 1.0 / 4096.0));
                let p = Prepared {
                    w,
                    q,
                    bias,
                    bias_q,
                    weight_scale: ws,
                    in_scale,
                    out_scale,
                    activation: layer.activation,
                };
                in_scale = out_scale;
                p
            })
            .collect()
    }

    /// Integer model on the uniform int8 grid.
    pub fn export(&self, name: &str) -> Result<QuantizedMLP, TrainError> {
        self.export_on(Grid::Uniform, name)
    }

    pub(crate) fn export_on(&self, grid: Grid, name: &str) -> Result<QuantizedMLP, TrainError> {
        let prepared = self.prepare(grid);
        let mut layers = Vec::with_capacity(prepared.len());
        for p in &prepared {
            let scale = p.in_scale * p.weight_scale / p.out_scale;
            let requant = if scale >= 1.0 {
                RequantParams::IDENTITY
            } else {
                derive_requant_params(scale)?
            };
            let mut layer = QLayer {
                weights: p.q.clone(),
                acc_widths: vec![MIN_ACC_WIDTH; p.q.len()],
                requant: RequantSpec::Shared(requant),
                activation: p.activation,
                bias: p.bias_q.clone(),
            };
            layer.acc_widths = (0..layer.outputs()).map(|j| layer.full_acc_width(j)).collect();
            layers.push(layer);
        }
        let mut m = QuantizedMLP::new(name, layers)?;
        m.input_scale = Some(self.input_scale);
        m.output_scale = prepared.last().map(|p| p.out_scale);
        Ok(m)
    }
}

/// One row of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
    pub set_size: usize,
}

pub fn write_log_csv(log: &[EpochLog], w: impl Write) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epoch", "loss", "val_metric", "set_size"])?;
    for e in log {
        wr.write_record([
            e.epoch.to_string(),
            e.loss.to_string(),
            e.val_metric.to_string(),
            e.set_size.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_log_csv(log: &[EpochLog], path: impl AsRef<Path>) -> csv::Result<()> {
    write_log_csv(log, std::fs::File::create(path)?)
}

/// Result of [`train_qat`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub latent: FloatMLP,
    pub model: QuantizedMLP,
    pub log: Vec<EpochLog>,
}

/// Quantization-aware training from a seeded random initialization.
///
/// `arch` lists layer sizes with the input count first; hidden layers use
/// ReLU and the last layer is linear.
pub fn train_qat(data: &Dataset, arch: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    check_arch(data, arch, cfg.metric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut latent = FloatMLP::new(arch, data.input_scale, cfg.bias, &mut rng);
    calibrate(&mut latent, data)?;
    let log = fine_tune(&mut latent, data, cfg, cfg.epochs, &mut rng)?;
    let model = latent.export("qat")?;
    Ok(TrainOutcome { latent, model, log })
}

/// Continue quantization-aware training of `m` for `epochs` epochs,
/// respecting its pruning mask.
pub fn fine_tune(
    m: &mut FloatMLP,
    data: &Dataset,
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochLog>, TrainError> {
    let mut trainer = Trainer::new(m, cfg);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = cfg.learning_rate_at(epoch, epochs);
        let loss = trainer.epoch(m, data, Grid::Uniform, lr, rng)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        let val = evaluate(&m.export("qat")?, data, monitor_split(data), cfg.metric)?;
        log.push(EpochLog {
            epoch,
            loss,
            val_metric: val,
            set_size: 256,
        });
    }
    Ok(log)
}

fn check_arch(data: &Dataset, arch: &[usize], metric: Metric) -> Result<(), TrainError> {
    if arch.len() < 2 || arch.contains(&0) {
        return Err(TrainError::Config(format!("architecture {arch:?} needs two or more positive sizes")));
    }
    if arch[0] != data.features() {
        return Err(TrainError::Config(format!(
            "architecture takes {} inputs but the dataset has {} features",
            arch[0],
            data.features()
        )));
    }
    let out = *arch.last().unwrap();
    if metric.is_classification() {
        let classes = data.num_classes();
        if out == 1 && classes > 2 || out > 1 && out < classes {
            return Err(TrainError::Config(format!(
                "{out} outputs cannot separate {classes} classes"
            )));
        }
    } else if out != 1 {
        return Err(TrainError::Config("regression needs exactly one output".into()));
    }
    if data.split_len(Split::Train) == 0 {
        return Err(TrainError::EmptySplit("train"));
    }
    Ok(())
}

/// Split used for per-epoch monitoring: validation when present.
pub(crate) fn monitor_split(data: &Dataset) -> Split {
    if data.split_len(Split::Val) > 0 {
        Split::Val
    } else {
        Split::Train
    }
}

/// Set every output scale from the activation ranges on the training split,
/// one layer at a time.
pub(crate) fn calibrate(m: &mut FloatMLP, data: &Dataset) -> Result<(), TrainError> {
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    for l in 0..m.layers.len() {
        let p = m.prepare(Grid::Uniform);
        let mut max = 0.0f64;
        let mut scratch = Scratch::new(&p);
        for s in &train {
            forward(&p, m.input_scale, &s.input, &mut scratch);
            max = scratch.h[l].iter().fold(max, |a, v| a.max(v.abs()));
        }
        m.layers[l].out_scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    }
    Ok(())
}

/// Per-sample activations.
struct Scratch {
    /// Real inputs of each layer.
    r: Vec<Vec<f64>>,
    /// Pre-activation outputs.
    z: Vec<Vec<f64>>,
    /// Post-activation outputs before rounding.
    h: Vec<Vec<f64>>,
    /// Gradient gate: activation active and no clamping.
    pass: Vec<Vec<bool>>,
}

impl Scratch {
    fn new(p: &[Prepared]) -> Self {
        Scratch {
            r: p.iter().map(|l| vec![0.0; l.w.first().map_or(0, Vec::len)]).collect(),
            z: p.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            h: p.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            pass: p.iter().map(|l| vec![false; l.w.len()]).collect(),
        }
    }
}

fn forward(p: &[Prepared], input_scale: f64, x: &[i8], s: &mut Scratch) {
    for (r, &v) in s.r[0].iter_mut().zip(x) {
        *r = v as f64 * input_scale;
    }
    for (l, layer) in p.iter().enumerate() {
        for j in 0..layer.w.len() {
            let mut z: f64 = layer.w[j].iter().zip(&s.r[l]).map(|(w, r)| w * r).sum();
            if let Some(b) = &layer.bias {
                z += b[j];
            }
            let h = match layer.activation {
                Activation::Relu => z.max(0.0),
                Activation::None => z,
            };
            s.z[l][j] = z;
            s.h[l][j] = h;
            if l + 1 < p.len() {
                let q = (h / layer.out_scale).round();
                let active = layer.activation == Activation::None || z > 0.0;
                s.pass[l][j] = active && (-128.0..=127.0).contains(&q);
                s.r[l + 1][j] = q.clamp(-128.0, 127.0) * layer.out_scale;
            }
        }
    }
}

/// Loss of the final pre-activations and its gradient.
fn loss_grad(metric: Metric, z: &[f64], target: f64, grad: &mut [f64]) -> f64 {
    if !metric.is_classification() {
        let d = z[0] - target;
        grad[0] = d;
        return 0.5 * d * d;
    }
    if z.len() == 1 {
        // logistic loss on a single logit
        let y = if target > 0.5 { 1.0 } else { 0.0 };
        let p = 1.0 / (1.0 + (-z[0]).exp());
        grad[0] = p - y;
        let zz = z[0];
        return zz.max(0.0) - zz * y + (-zz.abs()).exp().ln_1p();
    }
    let label = target.max(0.0) as usize;
    let max = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    for (g, v) in grad.iter_mut().zip(z) {
        *g = (v - max).exp() / sum;
    }
    grad[label] -= 1.0;
    -(z[label] - max) + sum.ln()
}

/// Adam state and gradient buffers for one run.
pub(crate) struct Trainer {
    cfg: TrainConfig,
    gw: Vec<Vec<Vec<f64>>>,
    gb: Vec<Vec<f64>>,
    mw: Vec<Vec<Vec<f64>>>,
    vw: Vec<Vec<Vec<f64>>>,
    mb: Vec<Vec<f64>>,
    vb: Vec<Vec<f64>>,
    step: i32,
}

impl Trainer {
    pub(crate) fn new(m: &FloatMLP, cfg: &TrainConfig) -> Self {
        let zw: Vec<Vec<Vec<f64>>> = m
            .layers
            .iter()
            .map(|l| vec![vec![0.0; l.inputs()]; l.outputs()])
            .collect();
        let zb: Vec<Vec<f64>> = m.layers.iter().map(|l| vec![0.0; l.outputs()]).collect();
        Trainer {
            cfg: cfg.clone(),
            gw: zw.clone(),
            gb: zb.clone(),
            mw: zw.clone(),
            vw: zw,
            mb: zb.clone(),
            vb: zb,
            step: 0,
        }
    }

    /// One pass over the shuffled training split; returns the mean loss.
    pub(crate) fn epoch(
        &mut self,
        m: &mut FloatMLP,
        data: &Dataset,
        grid: Grid,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, TrainError> {
        let mut order: Vec<&Sample> = data.split(Split::Train).collect();
        if order.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            total += self.batch(m, batch, grid, lr);
        }
        Ok(total / order.len() as f64)
    }

    fn batch(&mut self, m: &mut FloatMLP, batch: &[&Sample], grid: Grid, lr: f64) -> f64 {
        let p = m.prepare(grid);
        let mut s = Scratch::new(&p);
        for g in self.gw.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for g in self.gb.iter_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let last = p.len() - 1;
        let mut maxima = vec![0.0f64; p.len()];
        let mut dz: Vec<Vec<f64>> = p.iter().map(|l| vec![0.0; l.w.len()]).collect();
        let mut loss = 0.0;
        for sample in batch {
            forward(&p, m.input_scale, &sample.input, &mut s);
            for (mx, h) in maxima.iter_mut().zip(&s.h) {
                *mx = h.iter().fold(*mx, |a, v| a.max(v.abs()));
            }
            loss += loss_grad(self.cfg.metric, &s.z[last], sample.target, &mut dz[last]);
            for l in (0..p.len()).rev() {
                for j in 0..dz[l].len() {
                    let d = dz[l][j];
                    if d == 0.0 {
                        continue;
                    }
                    for (g, r) in self.gw[l][j].iter_mut().zip(&s.r[l]) {
                        *g += d * r;
                    }
                    self.gb[l][j] += d;
                }
                if l > 0 {
                    let (before, after) = dz.split_at_mut(l);
                    let prev = &mut before[l - 1];
                    for (i, g) in prev.iter_mut().enumerate() {
                        *g = if s.pass[l - 1][i] {
                            after[0]
                                .iter()
                                .zip(&p[l].w)
                                .map(|(d, row)| d * row[i])
                                .sum()
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
        self.apply(m, batch.len() as f64, lr);
        let mom = self.cfg.ema_momentum;
        for (layer, mx) in m.layers.iter_mut().zip(maxima) {
            if mx > 0.0 {
                layer.out_scale = mom * layer.out_scale + (1.0 - mom) * mx / 127.0;
            }
        }
        loss
    }

    fn apply(&mut self, m: &mut FloatMLP, n: f64, lr: f64) {
        let c = &self.cfg;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let adam = |w: &mut f64, g: f64, mo: &mut f64, ve: &mut f64| {
            *mo = c.beta1 * *mo + (1.0 - c.beta1) * g;
            *ve = c.beta2 * *ve + (1.0 - c.beta2) * g * g;
            *w -= lr * (*mo / bc1) / ((*ve / bc2).sqrt() + c.adam_epsilon);
        };
        for (l, layer) in m.layers.iter_mut().enumerate() {
            for j in 0..layer.outputs() {
                for i in 0..layer.inputs() {
                    if !layer.kept(j, i) {
                        layer.weights[j][i] = 0.0;
                        continue;
                    }
                    adam(
                        &mut layer.weights[j][i],
                        self.gw[l][j][i] / n,
                        &mut self.mw[l][j][i],
                        &mut self.vw[l][j][i],
                    );
                }
                if let Some(b) = layer.bias.as_mut() {
                    adam(&mut b[j], self.gb[l][j] / n, &mut self.mb[l][j], &mut self.vb[l][j]);
                }
            }
        }
    }
}

/// Zero the globally smallest-magnitude fraction `sparsity` of the weights
/// and freeze them through the mask.
pub fn prune_unstructured(m: &FloatMLP, sparsity: f64) -> Result<FloatMLP, TrainError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(TrainError::Config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let mut out = m.clone();
    let mut all: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (l, layer) in m.layers.iter().enumerate() {
        for (j, row) in layer.weights.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                all.push((w.abs(), l, j, i));
            }
        }
    }
    let k = (sparsity * all.len() as f64).floor() as usize;
    if k == 0 {
        return Ok(out);
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    for layer in &mut out.layers {
        if layer.mask.is_none() {
            layer.mask = Some(vec![vec![true; layer.inputs()]; layer.outputs()]);
        }
    }
    for &(_, l, j, i) in &all[..k] {
        out.layers[l].weights[j][i] = 0.0;
        out.layers[l].mask.as_mut().unwrap()[j][i] = false;
    }
    Ok(out)
}

/// Metric of `m` over one split, computed with [`infer_reference`].
pub fn evaluate(m: &QuantizedMLP, data: &Dataset, split: Split, metric: Metric) -> Result<f64, TrainError> {
    let mut n = 0usize;
    let mut acc = 0.0;
    let scale = m.output_scale.unwrap_or(1.0);
    for s in data.split(split) {
        let y = infer_reference(m, &s.input)?;
        n += 1;
        acc += match metric {
            Metric::Accuracy => {
                let pred = if y.len() == 1 {
                    (y[0] > 0) as usize
                } else {
                    // first maximum
                    y.iter()
                        .enumerate()
                        .fold(0, |best, (i, &v)| if v > y[best] { i } else { best })
                };
                (pred as f64 == s.target) as u8 as f64
            }
            Metric::Mse => {
                let d = y[0] as f64 * scale - s.target;
                d * d
            }
            Metric::BerProxy => ((y[0] as f64 * scale >= 0.5) != (s.target >= 0.5)) as u8 as f64,
        };
    }
    if n == 0 {
        return Err(TrainError::EmptySplit(split.as_str()));
    }
    Ok(acc / n as f64)
}
