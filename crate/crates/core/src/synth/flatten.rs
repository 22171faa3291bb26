//! Whole-network flattening and verification against the reference
//! inference.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{
    from_signed, simplify, simplify_with, to_signed, Counterexample, NetId, Netlist,
    NetlistError, SimplifyOptions, Simulator, Verdict, LANES,
};
use crate::qmodel::{infer_reference, Activation, QuantizedMLP, ACT_WIDTH};

use super::words::{self, extend, Word};
use super::{gen_const_mult, gen_generic_mult, SynthError};

const W: usize = ACT_WIDTH as usize;

#[derive(Clone, Debug)]
pub struct FlattenOptions {
    /// Run [`simplify`] on the finished netlist.
    pub simplify: bool,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        FlattenOptions { simplify: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenSummary {
    /// Constant-multiplier blocks instantiated (one per nonzero weight).
    pub multipliers: usize,
    pub multipliers_per_layer: Vec<usize>,
    pub latency: u32,
}

/// Flatten `model` into a netlist with one 8-bit input bus `x<i>` per
/// network input and one 8-bit output bus `y<j>` per output. Each layer
/// ends in a rank of flops tagged with the layer index, so outputs appear
/// `layers` cycles after their inputs.
pub fn flatten_network(model: &QuantizedMLP) -> Result<Netlist, SynthError> {
    Ok(flatten_network_with(model, &FlattenOptions::default())?.0)
}

pub fn flatten_network_with(
    model: &QuantizedMLP,
    opts: &FlattenOptions,
) -> Result<(Netlist, FlattenSummary), SynthError> {
    model.validate()?;
    let mut n = Netlist::new();
    let mut acts: Vec<Word> = (0..model.inputs())
        .map(|i| Word::from_nets(n.add_input(format!("x{i}"), W)))
        .collect();
    let mut blocks: HashMap<i8, Netlist> = HashMap::new();
    let mut summary = FlattenSummary::default();
    for (l, layer) in model.layers.iter().enumerate() {
        n.set_stage(Some(l as u32));
        let mut count = 0;
        let mut next = Vec::with_capacity(layer.outputs());
        for j in 0..layer.outputs() {
            let mut operands = Vec::new();
            for (x, &w) in acts.iter().zip(&layer.weights[j]) {
                if w == 0 {
                    continue;
                }
                let blk = blocks.entry(w).or_insert_with(|| gen_const_mult(w as i64, W));
                let y = n.instantiate(blk, &[&extend(&x.nets, W)]).remove(0);
                let (a, b) = (w as i64 * x.lo, w as i64 * x.hi);
                operands.push(Word::from_nets(y).with_range(a.min(b), a.max(b)));
                count += 1;
            }
            let bias = layer.bias_of(j);
            if bias != 0 {
                operands.push(Word::constant(bias));
            }
            let q = neuron_tail(&mut n, operands, layer, j, |n, acc, p| {
                words::requant(n, acc, p.m as i64, p.s, W)
            });
            next.push(q);
        }
        summary.multipliers += count;
        summary.multipliers_per_layer.push(count);
        acts = next;
    }
    finish(&mut n, model, acts);
    summary.latency = n.latency();
    let n = if opts.simplify { simplify(&n) } else { n };
    Ok((n, summary))
}

/// Adder tree, saturation, activation, requantizer and the output flop rank
/// of neuron `j`.
fn neuron_tail(
    n: &mut Netlist,
    operands: Vec<Word>,
    layer: &crate::qmodel::QLayer,
    j: usize,
    requant: impl FnOnce(&mut Netlist, &Word, crate::qmodel::RequantParams) -> Word,
) -> Word {
    let acc = words::adder_tree(n, operands);
    let mut acc = words::saturate(n, &acc, layer.acc_widths[j] as usize);
    if layer.activation == Activation::Relu {
        acc = words::relu(n, &acc);
    }
    let y = requant(n, &acc, layer.requant.for_neuron(j));
    let y = words::saturate(n, &y, W);
    let nets: Vec<NetId> = y.nets.iter().map(|&d| n.add_flop(d)).collect();
    // flops hold 0 until the pipeline fills
    Word {
        nets,
        lo: y.lo.min(0),
        hi: y.hi.max(0),
    }
}

fn finish(n: &mut Netlist, model: &QuantizedMLP, acts: Vec<Word>) {
    n.set_stage(None);
    for (j, y) in acts.into_iter().enumerate() {
        n.add_output(format!("y{j}"), extend(&y.nets, W));
    }
    n.set_latency(model.layers.len() as u32);
}

/// The same network built without weight embedding: every weight
/// (including zeros) and every requantizer multiplier is a register
/// feeding a generic multiplier. Weight registers load on the first clock,
/// so outputs are valid from cycle `latency + 1`. Flops are neither merged
/// nor folded when simplifying, keeping the registers in the circuit.
pub fn flatten_baseline(model: &QuantizedMLP) -> Result<Netlist, SynthError> {
    model.validate()?;
    let keep_flops = SimplifyOptions {
        merge_flops: false,
        fold_constant_flops: false,
    };
    let mult = simplify(&gen_generic_mult(W, W));
    let mut rq_blocks: HashMap<usize, Netlist> = HashMap::new();
    let mut n = Netlist::new();
    let mut acts: Vec<Word> = (0..model.inputs())
        .map(|i| Word::from_nets(n.add_input(format!("x{i}"), W)))
        .collect();
    for (l, layer) in model.layers.iter().enumerate() {
        n.set_stage(Some(l as u32));
        let mut next = Vec::with_capacity(layer.outputs());
        for j in 0..layer.outputs() {
            let mut operands = Vec::new();
            for (x, &w) in acts.iter().zip(&layer.weights[j]) {
                let reg = register_constant(&mut n, w as i64, W);
                let y = n.instantiate(&mult, &[&extend(&x.nets, W), &reg]).remove(0);
                let corners = [x.lo * -128, x.lo * 127, x.hi * -128, x.hi * 127];
                let (lo, hi) = (*corners.iter().min().unwrap(), *corners.iter().max().unwrap());
                operands.push(Word::from_nets(y).with_range(lo, hi));
            }
            let bias = layer.bias_of(j);
            if bias != 0 {
                operands.push(Word::constant(bias));
            }
            let q = neuron_tail(&mut n, operands, layer, j, |n, acc, p| {
                let aw = acc.width().max(2);
                let blk = rq_blocks
                    .entry(aw)
                    .or_insert_with(|| simplify(&gen_generic_mult(aw, 16)));
                let reg = register_constant(n, p.m as i64, 16);
                let y = n.instantiate(blk, &[&extend(&acc.nets, aw), &reg]).remove(0);
                let m_max = (1i64 << 15) - 1;
                let corners = [acc.lo * m_max, acc.hi * m_max, 0];
                let prod = Word::from_nets(y).with_range(
                    *corners.iter().min().unwrap(),
                    *corners.iter().max().unwrap(),
                );
                let rounded = if p.s > 0 {
                    words::add(n, &prod, &Word::constant(1i64 << (p.s - 1)), false)
                } else {
                    prod
                };
                words::saturate(n, &words::shr(&rounded, p.s), W)
            });
            next.push(q);
        }
        acts = next;
    }
    finish(&mut n, model, acts);
    Ok(simplify_with(&n, &keep_flops))
}

fn register_constant(n: &mut Netlist, v: i64, width: usize) -> Vec<NetId> {
    (0..width)
        .map(|i| n.add_flop(NetId::constant((v >> i) & 1 == 1)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Random input vectors to check.
    pub trials: usize,
    pub seed: u64,
    /// Leading cycles whose results are not compared.
    pub warmup: usize,
    /// Extra vectors checked in addition to the random ones.
    pub vectors: Vec<Vec<i8>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 10_000,
            seed: 0,
            warmup: 0,
            vectors: Vec::new(),
        }
    }
}

/// Check a compiled netlist against [`infer_reference`]: the output at
/// cycle `t + latency` must equal the reference result for the input
/// applied at cycle `t`.
pub fn verify_netlist(
    n: &Netlist,
    model: &QuantizedMLP,
    opts: &VerifyOptions,
) -> Result<Verdict, SynthError> {
    let bad_sig = |what: String| SynthError::Netlist(NetlistError::SignatureMismatch(what));
    if n.inputs().len() != model.inputs() || n.inputs().iter().any(|b| b.width() != W) {
        return Err(bad_sig(format!(
            "netlist inputs do not match the model's {} 8-bit inputs",
            model.inputs()
        )));
    }
    if n.outputs().len() != model.outputs() || n.outputs().iter().any(|b| b.width() != W) {
        return Err(bad_sig(format!(
            "netlist outputs do not match the model's {} 8-bit outputs",
            model.outputs()
        )));
    }
    if let Some(v) = opts.vectors.iter().find(|v| v.len() != model.inputs()) {
        return Err(SynthError::Model(crate::qmodel::ModelError::DimensionMismatch {
            expected: model.inputs(),
            got: v.len(),
        }));
    }
    let lat = n.latency() as usize;
    let per_lane = (opts.trials + opts.vectors.len()).div_ceil(LANES).max(1);
    let cycles = opts.warmup + per_lane + lat;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sim = Simulator::new(n)?;
    let mut history: Vec<Vec<Vec<i8>>> = Vec::with_capacity(cycles);
    let mut compared = 0;
    for c in 0..cycles {
        let inputs: Vec<Vec<i8>> = (0..LANES)
            .map(|lane| {
                let k = c.checked_sub(opts.warmup).map(|t| t * LANES + lane);
                match k.and_then(|k| opts.vectors.get(k)) {
                    Some(v) => v.clone(),
                    None => (0..model.inputs()).map(|_| rng.gen()).collect(),
                }
            })
            .collect();
        let stim: Vec<[u64; LANES]> = (0..model.inputs())
            .map(|i| std::array::from_fn(|lane| from_signed(inputs[lane][i] as i64, W)))
            .collect();
        let out = sim.step_lanes(&stim)?;
        history.push(inputs);
        let Some(t) = c.checked_sub(lat) else { continue };
        if t < opts.warmup || t >= opts.warmup + per_lane {
            continue;
        }
        for lane in 0..LANES {
            let expect = infer_reference(model, &history[t][lane])?;
            for (j, &e) in expect.iter().enumerate() {
                let got = out[j][lane];
                if to_signed(got, W) != e as i64 {
                    return Ok(Verdict::Counterexample(Box::new(Counterexample {
                        cycle: c,
                        lane,
                        bus: n.outputs()[j].name.clone(),
                        expected: from_signed(e as i64, W),
                        got,
                        stimulus: history[..=c]
                            .iter()
                            .map(|h| h[lane].iter().map(|&v| from_signed(v as i64, W)).collect())
                            .collect(),
                    })));
                }
            }
            compared += 1;
        }
    }
    Ok(Verdict::Equivalent { compared })
}
