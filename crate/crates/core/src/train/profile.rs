//! Accumulator width profiling.
//!
//! The worst-case accumulator width of a neuron is rarely reached on real
//! data. Profiling records every accumulator value on the training split,
//! discards the largest magnitudes above a quantile as outliers and sizes
//! the adder for what remains. Values beyond the chosen width saturate.

use super::TrainError;
use crate::qmodel::{
    bits_needed_signed, neuron_acc, requantize, Activation, Dataset, QuantizedMLP, Split,
    MAX_ACC_WIDTH, MIN_ACC_WIDTH,
};

/// Width that holds every value whose magnitude is within the `quantile`
/// of `|values|` (nearest rank), floored at the minimum accumulator width.
pub fn width_at_quantile(values: &[i64], quantile: f64) -> Result<u32, TrainError> {
    if !(quantile > 0.5 && quantile <= 1.0) {
        return Err(TrainError::Config(format!("quantile {quantile} outside (0.5, 1]")));
    }
    if values.is_empty() {
        return Err(TrainError::EmptyProfile);
    }
    let mut mags: Vec<u64> = values.iter().map(|v| v.unsigned_abs()).collect();
    mags.sort_unstable();
    let rank = ((quantile * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
    let limit = mags[rank - 1];
    let (lo, hi) = values
        .iter()
        .filter(|v| v.unsigned_abs() <= limit)
        .fold((0i64, 0i64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(bits_needed_signed(lo)
        .max(bits_needed_signed(hi))
        .max(MIN_ACC_WIDTH))
}

/// Profile every neuron of `m` on the training split and narrow its
/// accumulator width accordingly. Returns the widths, `[layer][neuron]`.
///
/// Inference during profiling uses unbounded accumulators so that the
/// recorded values do not depend on the widths being chosen.
pub fn profile_adder_widths(
    m: &mut QuantizedMLP,
    data: &Dataset,
    quantile: f64,
) -> Result<Vec<Vec<u32>>, TrainError> {
    let train: Vec<&[i8]> = data.split(Split::Train).map(|s| s.input.as_slice()).collect();
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if train[0].len() != m.inputs() {
        return Err(crate::qmodel::ModelError::DimensionMismatch {
            expected: m.inputs(),
            got: train[0].len(),
        }
        .into());
    }
    let mut acts: Vec<Vec<i8>> = train.iter().map(|x| x.to_vec()).collect();
    let mut widths = Vec::with_capacity(m.layers.len());
    for layer in &mut m.layers {
        let accs: Vec<Vec<i64>> = (0..layer.outputs())
            .map(|j| acts.iter().map(|x| neuron_acc(layer, j, x)).collect())
            .collect();
        let mut w = Vec::with_capacity(layer.outputs());
        for (j, values) in accs.iter().enumerate() {
            let full = layer.full_acc_width(j).min(MAX_ACC_WIDTH);
            w.push(width_at_quantile(values, quantile)?.min(full));
        }
        for (x, k) in acts.iter_mut().zip(0..) {
            *x = (0..layer.outputs())
                .map(|j| {
                    let acc = accs[j][k];
                    let acc = match layer.activation {
                        Activation::Relu => acc.max(0),
                        Activation::None => acc,
                    };
                    requantize(acc, layer.requant.for_neuron(j))
                })
                .collect();
        }
        layer.acc_widths = w.clone();
        widths.push(w);
    }
    m.validate()?;
    Ok(widths)
}
