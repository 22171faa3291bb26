//! Random netlists for property tests and benchmarks.

use rand::Rng;

use super::{CellKind, NetId, Netlist};

#[derive(Clone, Debug)]
pub struct RandomNetlistSpec {
    pub input_buses: usize,
    pub max_bus_width: usize,
    pub cells: usize,
    pub output_bits: usize,
    /// Probability that a cell input is taken through a new flop.
    pub flop_prob: f64,
    /// Probability that a cell input is a constant.
    pub const_prob: f64,
    /// Allow flops whose D is driven by later logic (register cycles).
    pub feedback: bool,
}

impl Default for RandomNetlistSpec {
    fn default() -> Self {
        RandomNetlistSpec {
            input_buses: 2,
            max_bus_width: 6,
            cells: 40,
            output_bits: 6,
            flop_prob: 0.15,
            const_prob: 0.05,
            feedback: false,
        }
    }
}

/// Build a random netlist. Cell inputs prefer recent nets so that deep
/// paths appear; outputs are drawn from the last third of the nets.
pub fn random_netlist(spec: &RandomNetlistSpec, rng: &mut impl Rng) -> Netlist {
    let mut n = Netlist::new();
    let mut pool: Vec<NetId> = Vec::new();
    for b in 0..spec.input_buses.max(1) {
        let w = rng.gen_range(1..=spec.max_bus_width.max(1));
        pool.extend(n.add_input(format!("i{b}"), w));
    }
    let mut loops = Vec::new();
    if spec.feedback {
        for _ in 0..2 {
            let (f, q) = n.add_flop_deferred();
            loops.push(f);
            pool.push(q);
        }
    }
    for _ in 0..spec.cells {
        let kind = CellKind::ALL[rng.gen_range(0..CellKind::ALL.len())];
        let ins: Vec<NetId> = (0..kind.arity())
            .map(|_| {
                if rng.gen_bool(spec.const_prob) {
                    return NetId::constant(rng.gen());
                }
                let lo = pool.len().saturating_sub(12);
                let idx = if rng.gen_bool(0.7) {
                    rng.gen_range(lo..pool.len())
                } else {
                    rng.gen_range(0..pool.len())
                };
                let mut net = pool[idx];
                while rng.gen_bool(spec.flop_prob) {
                    net = n.add_flop(net);
                }
                net
            })
            .collect();
        pool.push(n.add_cell(kind, &ins));
    }
    for f in loops {
        let d = pool[rng.gen_range(pool.len() / 2..pool.len())];
        n.connect_flop(f, d);
    }
    let lo = pool.len() - (pool.len() / 3).max(1);
    let bits: Vec<NetId> = (0..spec.output_bits.max(1))
        .map(|_| pool[rng.gen_range(lo..pool.len())])
        .collect();
    for (i, chunk) in bits.chunks(8).enumerate() {
        n.add_output(format!("o{i}"), chunk.to_vec());
    }
    n
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn generated_netlists_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for feedback in [false, true] {
            let spec = RandomNetlistSpec {
                feedback,
                ..Default::default()
            };
            for _ in 0..20 {
                let n = random_netlist(&spec, &mut rng);
                assert!(Netlist::from_json(&n.to_json()).is_ok());
                if !feedback {
                    assert!(n.register_depth().is_some());
                }
            }
        }
    }
}
