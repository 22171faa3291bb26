//! Hardware-aware training with a growing set of allowed weight values.
//!
//! Starting from a QAT model, training continues with every weight
//! projected onto a small set of values whose constant multipliers are
//! cheapest. The projection is skipped in the backward pass. When the
//! validation metric does not recover to within `epsilon` of the QAT
//! baseline, the next cheapest values join the set and training goes on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    evaluate, monitor_split, EpochLog, FloatMLP, Grid, TrainConfig, TrainError, Trainer,
};
use crate::cost::{WeightAreaTable, WeightSet};
use crate::qmodel::{Dataset, QuantizedMLP};

/// Closest member of `set` to `w / scale`; ties go to the cheaper
/// multiplier, then to the smaller magnitude.
pub fn project_to_set(w: f64, set: &WeightSet, scale: f64) -> i8 {
    set.project(w / scale)
}

/// Progress of the set expansion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionState {
    #[serde(serialize_with = "ser_set")]
    pub set: WeightSet,
    /// Number of completed expansions; 0 while on the first set.
    pub iteration: usize,
    /// Set size of every iteration so far.
    pub sizes: Vec<usize>,
    /// Validation metric at the end of every iteration.
    pub history: Vec<f64>,
    pub epsilon: f64,
    pub baseline: f64,
    /// Whether the final metric is within `epsilon` of the baseline.
    pub recovered: bool,
}

fn ser_set<S: serde::Serializer>(set: &WeightSet, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(set.weights())
}

#[derive(Clone, Debug)]
pub struct HatOutcome {
    /// Every weight is a member of `state.set`.
    pub model: QuantizedMLP,
    pub latent: FloatMLP,
    pub state: SelectionState,
    pub log: Vec<EpochLog>,
}

/// Hardware-aware training of a QAT-trained latent model.
///
/// Weight scales are frozen at their QAT values so that projected weights
/// stay on a fixed grid.
pub fn train_hat(
    m: &FloatMLP,
    data: &Dataset,
    table: &WeightAreaTable,
    cfg: &TrainConfig,
) -> Result<HatOutcome, TrainError> {
    cfg.validate()?;
    let hc = &cfg.hat;
    let split = monitor_split(data);
    let baseline = evaluate(&m.export("qat")?, data, split, cfg.metric)?;

    let mut start = m.clone();
    for layer in &mut start.layers {
        layer.weight_scale = Some(layer.weight_scale());
    }
    let mut latent = start.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4841_5400);
    let mut log = Vec::new();
    let mut state = SelectionState {
        set: table.select_top_n(hc.start),
        iteration: 0,
        sizes: Vec::new(),
        history: Vec::new(),
        epsilon: hc.epsilon,
        baseline,
        recovered: false,
    };
    let mut size = hc.start;
    let mut epoch = 0;
    loop {
        let set = table.select_top_n(size);
        debug_assert!(state.set.is_subset(&set));
        if hc.restart {
            latent = start.clone();
        }
        let mut trainer = Trainer::new(&latent, cfg);
        let forward = if hc.project_forward { Grid::Set(&set) } else { Grid::Uniform };
        let mut metric = f64::NAN;
        for e in 0..hc.epochs {
            let lr = cfg.learning_rate_at(e, hc.epochs);
            let loss = trainer.epoch(&mut latent, data, forward, lr, &mut rng)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            if hc.replace_at_epoch_end {
                replace_with_projection(&mut latent, &set);
            }
            metric = evaluate(&latent.export_on(Grid::Set(&set), "hat")?, data, split, cfg.metric)?;
            log.push(EpochLog {
                epoch,
                loss,
                val_metric: metric,
                set_size: set.len(),
            });
            epoch += 1;
        }
        if hc.epochs == 0 {
            metric = evaluate(&latent.export_on(Grid::Set(&set), "hat")?, data, split, cfg.metric)?;
        }
        state.set = set;
        state.sizes.push(size);
        state.history.push(metric);
        state.recovered = cfg.metric.within(metric, baseline, hc.epsilon);
        if state.recovered || size >= 256 {
            break;
        }
        size = (size + hc.step).min(256);
        state.iteration += 1;
    }
    let model = latent.export_on(Grid::Set(&state.set), "hat")?;
    Ok(HatOutcome {
        model,
        latent,
        state,
        log,
    })
}

fn replace_with_projection(m: &mut FloatMLP, set: &WeightSet) {
    for layer in &mut m.layers {
        let s = layer.weight_scale();
        for w in layer.weights.iter_mut().flatten() {
            *w = project_to_set(*w, set, s) as f64 * s;
        }
    }
}
