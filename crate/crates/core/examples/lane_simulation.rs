//! Drive a compiled network with 64 input streams at once and compare each
//! lane with the integer reference.

use nnlogic::netlist::{from_signed, to_signed, Simulator, LANES};
use nnlogic::qmodel::{infer_reference, random_model};
use nnlogic::synth::flatten_network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = random_model(&[4, 6, 2], &mut rng);
    let n = flatten_network(&model)?;
    let latency = n.latency() as usize;
    let vectors: Vec<Vec<i8>> = (0..LANES).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();

    // hold each lane's vector steady until it reaches the outputs
    let stim: Vec<[u64; LANES]> = (0..4)
        .map(|i| std::array::from_fn(|l| from_signed(vectors[l][i] as i64, 8)))
        .collect();
    let mut sim = Simulator::new(&n)?;
    let mut out = Vec::new();
    for _ in 0..=latency {
        out = sim.step_lanes(&stim)?;
    }
    let mut mismatches = 0;
    for (l, x) in vectors.iter().enumerate() {
        let want = infer_reference(&model, x)?;
        let got: Vec<i8> = out.iter().map(|bus| to_signed(bus[l], 8) as i8).collect();
        if got != want {
            mismatches += 1;
        }
    }
    println!("latency {latency}, {} lanes, {mismatches} mismatches", LANES);
    Ok(())
}
