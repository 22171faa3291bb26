//! Synthetic datasets with known structure.
//!
//! Samples are assigned to splits by index (14 of every 20 train, 3
//! validate, 3 test) and inputs use the integer scale `1/128`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::qmodel::{
    derive_requant_params, infer_reference, neuron_acc, Activation, Dataset, QLayer,
    QuantizedMLP, RequantSpec, Sample, Split,
};

const INPUT_SCALE: f64 = 1.0 / 128.0;

fn finish(samples: Vec<(Vec<i8>, f64)>) -> Dataset {
    let samples = samples
        .into_iter()
        .enumerate()
        .map(|(i, (input, target))| Sample {
            input,
            target,
            split: Split::by_index(i),
        })
        .collect();
    Dataset::new(samples, INPUT_SCALE).expect("generators produce valid datasets")
}

/// Two classes split by a random hyperplane through the origin, with no
/// sample closer to it than `margin` input LSBs.
pub fn linearly_separable(samples: usize, features: usize, margin: f64, seed: u64) -> Dataset {
    assert!(samples > 0 && features > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let w: Vec<f64> = (0..features).map(|_| normal.sample(&mut rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let x: Vec<i8> = (0..features).map(|_| rng.gen_range(-127..=127)).collect();
        let d = w.iter().zip(&x).map(|(a, &b)| a * b as f64).sum::<f64>() / norm;
        if d.abs() >= margin {
            out.push((x, (d > 0.0) as u8 as f64));
        }
    }
    finish(out)
}

/// Gaussian clusters, one per class, with centers drawn in `[-80, 80]`.
pub fn separable_blobs(samples: usize, features: usize, classes: usize, spread: f64, seed: u64) -> Dataset {
    assert!(samples > 0 && features > 0 && classes > 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| rng.gen_range(-80.0..80.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).expect("spread must be finite and non-negative");
    let out = (0..samples)
        .map(|i| {
            let c = i % classes;
            let x = centers[c]
                .iter()
                .map(|&m| (m + noise.sample(&mut rng)).round().clamp(-128.0, 127.0) as i8)
                .collect();
            (x, c as f64)
        })
        .collect();
    finish(out)
}

/// A classification task labelled by a one-layer teacher whose weights are
/// zero or signed powers of two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedTeacherSpec {
    pub features: usize,
    pub classes: usize,
    pub samples: usize,
    /// Largest exponent of a teacher weight.
    pub max_shift: u32,
    pub zero_prob: f64,
    /// Minimum gap, in output LSBs, between the winning teacher output and
    /// the runner-up; closer samples are discarded.
    pub margin: i32,
    pub seed: u64,
}

impl Default for PlantedTeacherSpec {
    fn default() -> Self {
        PlantedTeacherSpec {
            features: 8,
            classes: 4,
            samples: 2000,
            max_shift: 4,
            zero_prob: 0.25,
            margin: 12,
            seed: 0,
        }
    }
}

/// Dataset and the teacher that labelled it; the teacher classifies every
/// sample correctly.
pub fn planted_teacher(spec: &PlantedTeacherSpec) -> (Dataset, QuantizedMLP) {
    assert!(spec.features > 0 && spec.classes > 1 && spec.samples > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<Vec<i8>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| {
                    if rng.gen_bool(spec.zero_prob) {
                        0
                    } else {
                        let v = 1i8 << rng.gen_range(0..=spec.max_shift.min(6));
                        if rng.gen_bool(0.5) {
                            -v
                        } else {
                            v
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut layer = QLayer {
        weights,
        acc_widths: vec![0; spec.classes],
        requant: RequantSpec::Shared(crate::qmodel::RequantParams::IDENTITY),
        activation: Activation::None,
        bias: None,
    };
    layer.acc_widths = (0..spec.classes).map(|j| layer.full_acc_width(j)).collect();

    // scale outputs so a typical accumulator lands near the int8 limit
    let pilot: Vec<Vec<i8>> = (0..256)
        .map(|_| (0..spec.features).map(|_| rng.gen_range(-127..=127)).collect())
        .collect();
    let mut mags: Vec<u64> = pilot
        .iter()
        .flat_map(|x| (0..spec.classes).map(|j| neuron_acc(&layer, j, x).unsigned_abs()).collect::<Vec<_>>())
        .collect();
    mags.sort_unstable();
    let typical = mags[mags.len() * 9 / 10].max(1) as f64;
    let scale = (100.0 / typical).min(0.5);
    layer.requant = RequantSpec::Shared(derive_requant_params(scale).expect("scale in range"));
    let mut teacher = QuantizedMLP::new("teacher", vec![layer]).expect("teacher is valid");
    teacher.input_scale = Some(INPUT_SCALE);

    let mut out = Vec::with_capacity(spec.samples);
    while out.len() < spec.samples {
        let x: Vec<i8> = (0..spec.features).map(|_| rng.gen_range(-127..=127)).collect();
        let y = infer_reference(&teacher, &x).expect("dimensions match");
        let best = y
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > y[b] { i } else { b });
        let runner_up = y
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &v)| v as i32)
            .max()
            .unwrap();
        if y[best] as i32 - runner_up >= spec.margin {
            out.push((x, best as f64));
        }
    }
    (finish(out), teacher)
}
