//! Hardware-aware training on a task labelled by a power-of-two teacher.
//!
//! Trains a QAT model, then restricts its weights to the cheapest
//! multiplier values and compares the compiled areas.

use nnlogic::cost::{estimate_area, rank_weight_areas, CostModel};
use nnlogic::qmodel::Split;
use nnlogic::synth::flatten_network;
use nnlogic::train::{evaluate, planted_teacher, train_hat, train_qat, Metric, PlantedTeacherSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (data, _teacher) = planted_teacher(&PlantedTeacherSpec::default());
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 0.01,
        ..Default::default()
    };
    let qat = train_qat(&data, &[8, 16, 4], &cfg)?;
    let cost = CostModel::default();
    let table = rank_weight_areas(&cost);
    let hat = train_hat(&qat.latent, &data, &table, &cfg)?;

    let qat_area = estimate_area(&flatten_network(&qat.model)?, &cost);
    let hat_area = estimate_area(&flatten_network(&hat.model)?, &cost);
    println!("set sizes tried: {:?}", hat.state.sizes);
    println!("validation: qat {:.4}, hat {:.4}", hat.state.baseline, hat.state.history.last().unwrap());
    println!(
        "test accuracy: qat {:.4}, hat {:.4}",
        evaluate(&qat.model, &data, Split::Test, Metric::Accuracy)?,
        evaluate(&hat.model, &data, Split::Test, Metric::Accuracy)?
    );
    println!("area: qat {qat_area}, hat {hat_area}");
    println!("selected weights: {:?}", hat.state.set.weights());
    Ok(())
}
