//! Compare the weight-embedded circuit of a random network with a baseline
//! that keeps its weights in registers and uses generic multipliers.

use nnlogic::cost::{estimate_area, estimate_power_random, CostModel};
use nnlogic::qmodel::random_model;
use nnlogic::synth::{flatten_baseline, flatten_network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = random_model(&[6, 8, 3], &mut rng);
    let cost = CostModel::default();
    println!("build,area,flops,dynamic,clock,total");
    for (name, n) in [("baseline", flatten_baseline(&model)?), ("embedded", flatten_network(&model)?)] {
        let warmup = n.register_depth().unwrap_or(0) as usize;
        let p = estimate_power_random(&n, &cost, 256, warmup, 5)?;
        println!(
            "{name},{},{},{:.1},{:.1},{:.1}",
            estimate_area(&n, &cost),
            n.flops().len(),
            p.dynamic,
            p.clock,
            p.total
        );
    }
    Ok(())
}
