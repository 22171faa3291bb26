//! Compile quantized multilayer perceptrons into weight-embedded gate-level
//! circuits.
//!
//! The flow: train a small network with 8-bit fake quantization ([`train`]),
//! export it as an integer [`qmodel::QuantizedMLP`], flatten it into a
//! pipelined [`netlist::Netlist`] whose multipliers are specialised to the
//! fixed weights ([`synth`]), then measure and improve the circuit
//! ([`timing`], [`cost`]). Every circuit is checked bit-for-bit against
//! [`qmodel::infer_reference`]. The [`cli`] module wires these steps into
//! the `nnlogic` command.

pub mod netlist;
pub mod qmodel;
pub mod synth;
pub mod cost;
pub mod timing;
pub mod train;
pub mod cli;
