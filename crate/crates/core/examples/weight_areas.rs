//! Rank every int8 weight by the area of its constant multiplier.
//!
//! Prints the cheapest and costliest weights and the set of the 40
//! cheapest.

use nnlogic::cost::{rank_weight_areas, CostModel};

fn main() {
    let table = rank_weight_areas(&CostModel::default());
    let show = |ws: &[i8]| ws.iter().map(|&w| format!("{w}:{}", table.area(w))).collect::<Vec<_>>().join(" ");
    println!("cheapest: {}", show(&table.ranking()[..12]));
    println!("costliest: {}", show(&table.ranking()[244..]));
    println!("top 40: {:?}", table.select_top_n(40).weights());
}
