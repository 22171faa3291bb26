//! Levelized cycle-accurate simulation.
//!
//! Each cycle evaluates every cell once in topological order from the
//! primary inputs, the flop outputs and the constants, then loads every
//! flop from its D net simultaneously. Values are 64-bit words so that 64
//! independent stimulus streams ("lanes") run in one pass.

use super::{topo_order, CellKind, Netlist, NetlistError};

/// Number of independent streams simulated per pass.
pub const LANES: usize = 64;

/// One cycle of input for all lanes: `values[bus][lane]`.
pub type LaneStimulus = Vec<[u64; LANES]>;

#[derive(Clone, Copy)]
struct Op {
    kind: CellKind,
    a: u32,
    b: u32,
    c: u32,
    out: u32,
}

pub struct Simulator<'a> {
    netlist: &'a Netlist,
    ops: Vec<Op>,
    values: Vec<u64>,
    state: Vec<u64>,
}

impl<'a> Simulator<'a> {
    pub fn new(netlist: &'a Netlist) -> Result<Self, NetlistError> {
        let order = topo_order(netlist)?;
        let ops = order
            .into_iter()
            .map(|i| {
                let c = &netlist.cells()[i];
                let pin = |k: usize| c.inputs.get(k).map_or(0, |n| n.0);
                Op {
                    kind: c.kind,
                    a: pin(0),
                    b: pin(1),
                    c: pin(2),
                    out: c.output.0,
                }
            })
            .collect();
        let mut values = vec![0u64; netlist.net_count()];
        values[1] = !0;
        Ok(Simulator {
            netlist,
            ops,
            values,
            state: vec![0; netlist.flops().len()],
        })
    }

    pub fn netlist(&self) -> &Netlist {
        self.netlist
    }

    /// Return every flop to its reset value.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = 0);
    }

    /// Net values computed in the most recent cycle.
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Advance one clock cycle.
    ///
    /// `inputs` holds one lane word per primary-input bit (buses in order,
    /// LSB first); `outputs` receives one word per primary-output bit.
    pub fn step_words(&mut self, inputs: &[u64], outputs: &mut [u64]) {
        let n = self.netlist;
        let mut k = 0;
        for bus in n.inputs() {
            for net in &bus.nets {
                self.values[net.index()] = inputs[k];
                k += 1;
            }
        }
        for (f, s) in n.flops().iter().zip(&self.state) {
            self.values[f.q.index()] = *s;
        }
        let v = &mut self.values;
        for op in &self.ops {
            let r = op
                .kind
                .eval(v[op.a as usize], v[op.b as usize], v[op.c as usize]);
            v[op.out as usize] = r;
        }
        let mut k = 0;
        for bus in n.outputs() {
            for net in &bus.nets {
                outputs[k] = self.values[net.index()];
                k += 1;
            }
        }
        for (f, s) in n.flops().iter().zip(self.state.iter_mut()) {
            *s = self.values[f.d.index()];
        }
    }

    /// Advance one cycle with bus-level values per lane; returns
    /// `outputs[bus][lane]`.
    pub fn step_lanes(&mut self, stim: &[[u64; LANES]]) -> Result<Vec<[u64; LANES]>, NetlistError> {
        let n = self.netlist;
        if stim.len() != n.inputs().len() {
            return Err(NetlistError::UnassignedInput {
                expected: n.inputs().len(),
                got: stim.len(),
            });
        }
        let mut words = Vec::with_capacity(n.inputs().iter().map(|b| b.width()).sum());
        for (bus, lanes) in n.inputs().iter().zip(stim) {
            for bit in 0..bus.width() {
                words.push(pack_bit(lanes, bit));
            }
        }
        let mut out = vec![0u64; n.outputs().iter().map(|b| b.width()).sum()];
        self.step_words(&words, &mut out);
        let mut k = 0;
        Ok(n
            .outputs()
            .iter()
            .map(|bus| {
                let mut lanes = [0u64; LANES];
                for bit in 0..bus.width() {
                    let w = out[k];
                    k += 1;
                    for (lane, v) in lanes.iter_mut().enumerate() {
                        *v |= ((w >> lane) & 1) << bit;
                    }
                }
                lanes
            })
            .collect())
    }
}

fn pack_bit(lanes: &[u64; LANES], bit: usize) -> u64 {
    lanes
        .iter()
        .enumerate()
        .fold(0u64, |w, (lane, v)| w | (((v >> bit) & 1) << lane))
}

/// Simulate a single stream. Each assignment gives one value per input bus
/// (in bus order); each result gives one value per output bus.
pub fn simulate(n: &Netlist, stream: &[Vec<u64>]) -> Result<Vec<Vec<u64>>, NetlistError> {
    let mut sim = Simulator::new(n)?;
    let in_bits: usize = n.inputs().iter().map(|b| b.width()).sum();
    let out_bits: usize = n.outputs().iter().map(|b| b.width()).sum();
    let mut words = vec![0u64; in_bits];
    let mut out = vec![0u64; out_bits];
    let mut records = Vec::with_capacity(stream.len());
    for assignment in stream {
        if assignment.len() != n.inputs().len() {
            return Err(NetlistError::UnassignedInput {
                expected: n.inputs().len(),
                got: assignment.len(),
            });
        }
        let mut k = 0;
        for (bus, &v) in n.inputs().iter().zip(assignment) {
            for bit in 0..bus.width() {
                words[k] = (v >> bit) & 1;
                k += 1;
            }
        }
        sim.step_words(&words, &mut out);
        let mut k = 0;
        records.push(
            n.outputs()
                .iter()
                .map(|bus| {
                    let mut v = 0u64;
                    for bit in 0..bus.width() {
                        v |= (out[k] & 1) << bit;
                        k += 1;
                    }
                    v
                })
                .collect(),
        );
    }
    Ok(records)
}

/// Interpret the low `width` bits of `v` as two's complement.
pub fn to_signed(v: u64, width: usize) -> i64 {
    debug_assert!((1..=64).contains(&width));
    let shift = 64 - width;
    ((v << shift) as i64) >> shift
}

/// Low `width` bits of the two's-complement encoding of `v`.
pub fn from_signed(v: i64, width: usize) -> u64 {
    if width >= 64 {
        v as u64
    } else {
        (v as u64) & ((1u64 << width) - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::super::NetId;
    use super::*;

    #[test]
    fn single_inverter_same_cycle() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let y = n.add_cell(CellKind::Inv, &[x[0]]);
        n.add_output("y", vec![y]);
        assert_eq!(simulate(&n, &[vec![1], vec![0]]).unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn single_flop_delays_by_one() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let q = n.add_flop(x[0]);
        n.add_output("q", vec![q]);
        assert_eq!(simulate(&n, &[vec![1], vec![0]]).unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn unassigned_input_is_an_error() {
        let mut n = Netlist::new();
        n.add_input("a", 1);
        n.add_input("b", 1);
        n.add_output("c", vec![NetId::ONE]);
        assert!(matches!(
            simulate(&n, &[vec![1]]),
            Err(NetlistError::UnassignedInput { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn every_kind_evaluates_its_truth_table() {
        for kind in CellKind::ALL {
            let mut n = Netlist::new();
            let x = n.add_input("x", kind.arity());
            let y = n.add_cell(kind, &x);
            n.add_output("y", vec![y]);
            for v in 0..(1u64 << kind.arity()) {
                let (a, b, c) = (v & 1 == 1, v >> 1 & 1 == 1, v >> 2 & 1 == 1);
                let expect = match kind {
                    CellKind::Inv => !a,
                    CellKind::Buf => a,
                    CellKind::And2 => a && b,
                    CellKind::Or2 => a || b,
                    CellKind::Nand2 => !(a && b),
                    CellKind::Nor2 => !(a || b),
                    CellKind::Xor2 => a != b,
                    CellKind::Xnor2 => a == b,
                    CellKind::Mux2 => {
                        if c {
                            b
                        } else {
                            a
                        }
                    }
                };
                assert_eq!(simulate(&n, &[vec![v]]).unwrap()[0][0], expect as u64, "{kind} {v:b}");
            }
        }
    }

    #[test]
    fn lanes_agree_with_scalar_runs() {
        // 2-bit counter-ish circuit with feedback through a flop
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let (f, q) = n.add_flop_deferred();
        let t = n.add_cell(CellKind::Xor2, &[q, x[0]]);
        let u = n.add_cell(CellKind::And2, &[t, x[1]]);
        n.connect_flop(f, t);
        n.add_output("y", vec![t, u]);
        let streams: Vec<Vec<u64>> = (0..LANES)
            .map(|l| (0..10).map(|c| ((l * 7 + c * 3) % 4) as u64).collect())
            .collect();
        let mut sim = Simulator::new(&n).unwrap();
        let mut lane_out = Vec::new();
        for c in 0..10 {
            let mut stim = [0u64; LANES];
            for l in 0..LANES {
                stim[l] = streams[l][c];
            }
            lane_out.push(sim.step_lanes(&[stim]).unwrap());
        }
        for l in 0..LANES {
            let scalar: Vec<Vec<u64>> = streams[l].iter().map(|&v| vec![v]).collect();
            let out = simulate(&n, &scalar).unwrap();
            for c in 0..10 {
                assert_eq!(out[c][0], lane_out[c][0][l]);
            }
        }
    }

    #[test]
    fn signed_conversions() {
        assert_eq!(to_signed(0b1110, 4), -2);
        assert_eq!(to_signed(0b0111, 4), 7);
        assert_eq!(from_signed(-2, 4), 0b1110);
        assert_eq!(from_signed(-1, 64), u64::MAX);
        for v in -128..128 {
            assert_eq!(to_signed(from_signed(v, 8), 8), v);
        }
    }
}
