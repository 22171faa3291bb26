//! Add pipeline ranks to a compiled network and retime each variant.
//!
//! Prints `k, period, flops` for `k = 0..=max_k`. Usage:
//! `retime_stages [max_k]`, default 4.

use nnlogic::qmodel::random_model;
use nnlogic::synth::flatten_network;
use nnlogic::timing::{explore_stages, sta_min_period, TimingModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let max_k: usize = std::env::args().nth(1).map_or(Ok(4), |a| a.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = flatten_network(&random_model(&[6, 8, 3], &mut rng))?;
    let t = TimingModel::default();
    println!("unpipelined period {}", sta_min_period(&n, &t)?.period);
    println!("k,period,flops");
    for row in explore_stages(&n, &t, max_k)? {
        println!("{},{},{}", row.k, row.period, row.flops);
    }
    Ok(())
}
