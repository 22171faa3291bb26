//! Emit the structural Verilog of one constant multiplier.
//!
//! Usage: `emit_verilog [weight] [input_width]`, defaults -2 and 2.

use nnlogic::netlist::emit_verilog;
use nnlogic::synth::gen_const_mult;

fn main() {
    let mut args = std::env::args().skip(1);
    let w: i64 = args.next().map_or(-2, |a| a.parse().expect("weight is an integer"));
    let width: usize = args.next().map_or(2, |a| a.parse().expect("width is an integer"));
    let block = gen_const_mult(w, width);
    let name = format!("const_mult_{}{}", if w < 0 { "neg" } else { "" }, w.unsigned_abs());
    print!("{}", emit_verilog(&block, &name));
}
