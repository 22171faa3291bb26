//! Flatten a random int8 network, check it against the integer reference
//! and print its size and timing.
//!
//! Usage: `compile_random_model [seed]`.

use nnlogic::cost::{estimate_area, CostModel};
use nnlogic::qmodel::random_model;
use nnlogic::synth::{flatten_network, verify_netlist, VerifyOptions};
use nnlogic::timing::{sta_min_period, TimingModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(1), |a| a.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&[8, 12, 4], &mut rng);
    let n = flatten_network(&model)?;

    let verdict = verify_netlist(&n, &model, &VerifyOptions { trials: 5000, seed, ..Default::default() })?;
    println!("verification: {verdict:?}");
    let sta = sta_min_period(&n, &TimingModel::default())?;
    println!(
        "cells {}, flops {}, latency {}, area {}, period {} (comb {})",
        n.cells().len(),
        n.flops().len(),
        n.latency(),
        estimate_area(&n, &CostModel::default()),
        sta.period,
        sta.comb_delay
    );
    Ok(())
}
