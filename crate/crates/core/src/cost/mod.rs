//! Area and relative power estimation, and the per-weight multiplier area
//! table that drives hardware-aware training.

mod weights;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{Driver, KindTable, Netlist, NetlistError, Simulator, LANES};

pub use weights::{rank_weight_areas, WeightAreaEntry, WeightAreaTable, WeightSet};

/// Per-kind transistor counts and toggle energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub transistors: KindTable<u32>,
    /// Energy of one output transition of a cell, per unit of load.
    pub toggle_weight: KindTable<f64>,
    pub flop_transistors: u32,
    pub flop_toggle_weight: f64,
    /// Clock energy spent by every flop on every cycle.
    pub flop_clock_energy: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        let transistors = KindTable {
            inv: 2,
            buf: 4,
            and2: 6,
            or2: 6,
            nand2: 4,
            nor2: 4,
            xor2: 10,
            xnor2: 10,
            mux2: 12,
        };
        CostModel {
            transistors,
            toggle_weight: transistors.map(|t| t as f64),
            flop_transistors: 24,
            flop_toggle_weight: 24.0,
            flop_clock_energy: 8.0,
        }
    }
}

/// Transistor count: cells by kind plus flops.
pub fn estimate_area(n: &Netlist, c: &CostModel) -> u64 {
    n.cells()
        .iter()
        .map(|cell| c.transistors.get(cell.kind) as u64)
        .sum::<u64>()
        + n.flops().len() as u64 * c.flop_transistors as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// Switching term per cycle.
    pub dynamic: f64,
    /// Flop clocking term per cycle.
    pub clock: f64,
    pub total: f64,
    /// Measured cycles (after warmup), summed over streams.
    pub cycles: u64,
}

/// Output transitions of every net over one input stream. Transitions into
/// the first `warmup` cycles are not counted.
pub fn toggle_counts(
    n: &Netlist,
    stimulus: &[Vec<u64>],
    warmup: usize,
) -> Result<Vec<u64>, NetlistError> {
    let mut run = ToggleRun::new(n)?;
    let widths: Vec<usize> = n.inputs().iter().map(|b| b.width()).collect();
    for (t, assignment) in stimulus.iter().enumerate() {
        if assignment.len() != widths.len() {
            return Err(NetlistError::UnassignedInput {
                expected: widths.len(),
                got: assignment.len(),
            });
        }
        let words: Vec<u64> = widths
            .iter()
            .zip(assignment)
            .flat_map(|(&w, &v)| (0..w).map(move |b| (v >> b) & 1))
            .collect();
        run.step(&words, t > warmup, 1);
    }
    Ok(run.toggles)
}

struct ToggleRun<'a> {
    sim: Simulator<'a>,
    prev: Vec<u64>,
    toggles: Vec<u64>,
    out: Vec<u64>,
}

impl<'a> ToggleRun<'a> {
    fn new(n: &'a Netlist) -> Result<Self, NetlistError> {
        Ok(ToggleRun {
            sim: Simulator::new(n)?,
            prev: vec![0; n.net_count()],
            toggles: vec![0; n.net_count()],
            out: vec![0; n.outputs().iter().map(|b| b.width()).sum()],
        })
    }

    fn step(&mut self, words: &[u64], count: bool, lane_mask: u64) {
        self.sim.step_words(words, &mut self.out);
        let values = self.sim.values();
        if count {
            for ((t, p), v) in self.toggles.iter_mut().zip(&self.prev).zip(values) {
                *t += ((p ^ v) & lane_mask).count_ones() as u64;
            }
        }
        self.prev.copy_from_slice(values);
    }
}

fn power_from_toggles(n: &Netlist, c: &CostModel, toggles: &[u64], cycles: u64) -> PowerReport {
    let drivers = n.drivers();
    let fanouts = n.fanouts();
    let mut energy = 0.0;
    for (net, &t) in toggles.iter().enumerate() {
        if t == 0 {
            continue;
        }
        let w = match drivers[net] {
            Driver::Cell(i) => c.toggle_weight.get(n.cells()[i].kind),
            Driver::Flop(_) => c.flop_toggle_weight,
            _ => 0.0,
        };
        energy += t as f64 * w * (1 + fanouts[net]) as f64;
    }
    let dynamic = if cycles == 0 { 0.0 } else { energy / cycles as f64 };
    let clock = c.flop_clock_energy * n.flops().len() as f64;
    PowerReport {
        dynamic,
        clock,
        total: dynamic + clock,
        cycles,
    }
}

/// Relative power over one input stream: weighted transitions per cycle
/// plus flop clock energy. Nets driven by primary inputs or constants are
/// not charged.
pub fn estimate_power(
    n: &Netlist,
    stimulus: &[Vec<u64>],
    c: &CostModel,
    warmup: usize,
) -> Result<PowerReport, NetlistError> {
    let toggles = toggle_counts(n, stimulus, warmup)?;
    let cycles = stimulus.len().saturating_sub(warmup) as u64;
    Ok(power_from_toggles(n, c, &toggles, cycles))
}

/// [`estimate_power`] averaged over 64 independent uniformly random
/// streams of `cycles` cycles each.
pub fn estimate_power_random(
    n: &Netlist,
    c: &CostModel,
    cycles: usize,
    warmup: usize,
    seed: u64,
) -> Result<PowerReport, NetlistError> {
    let mut run = ToggleRun::new(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: usize = n.inputs().iter().map(|b| b.width()).sum();
    let mut words = vec![0u64; bits];
    for t in 0..cycles {
        words.iter_mut().for_each(|w| *w = rng.gen());
        run.step(&words, t > warmup, u64::MAX);
    }
    let measured = (cycles.saturating_sub(warmup) * LANES) as u64;
    Ok(power_from_toggles(n, c, &run.toggles, measured))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{CellKind, NetId};

    #[test]
    fn area_examples() {
        let c = CostModel::default();
        assert_eq!(estimate_area(&Netlist::new(), &c), 0);
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let y = n.add_cell(CellKind::Inv, &[x[0]]);
        let q = n.add_flop(y);
        n.add_output("q", vec![q]);
        assert_eq!(estimate_area(&n, &c), 26);
    }

    #[test]
    fn inverter_toggles_every_cycle() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let y = n.add_cell(CellKind::Inv, &[x[0]]);
        n.add_output("y", vec![y]);
        let stim: Vec<Vec<u64>> = (0..10).map(|t| vec![t % 2]).collect();
        let t = toggle_counts(&n, &stim, 0).unwrap();
        assert_eq!(t[y.index()], 9);
        let p = estimate_power(&n, &stim, &CostModel::default(), 0).unwrap();
        // 9 transitions x weight 2 x (1 + one output load) over 10 cycles
        assert!((p.dynamic - 9.0 * 2.0 * 2.0 / 10.0).abs() < 1e-12);
        assert_eq!(p.clock, 0.0);
    }

    #[test]
    fn constant_stimulus_leaves_only_clock_energy() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let a = n.add_cell(CellKind::Xor2, &[x[0], x[1]]);
        let q = n.add_flop(a);
        let b = n.add_cell(CellKind::And2, &[q, NetId::ONE]);
        n.add_output("y", vec![b]);
        let stim = vec![vec![1u64]; 20];
        let c = CostModel::default();
        let p = estimate_power(&n, &stim, &c, 2).unwrap();
        assert_eq!(p.dynamic, 0.0);
        assert_eq!(p.total, c.flop_clock_energy);
    }
}
