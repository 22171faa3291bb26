//! Circuit generators: constant multipliers, adder trees, ReLU and
//! requantizer blocks, and the flattening of a whole quantized network
//! into one pipelined netlist.
//!
//! A block is an ordinary [`Netlist`] without flops: input buses `x` (or
//! `x0`, `x1`, ... for multi-operand blocks) and one output bus `y`.

mod csd;
mod flatten;
pub(crate) mod words;

use thiserror::Error;

use crate::netlist::{simplify, CellKind, Netlist, NetlistError};
use crate::qmodel::{ModelError, RequantParams};

pub use csd::{csd_encode, csd_value, CsdDigit};
pub use flatten::{
    flatten_baseline, flatten_network, flatten_network_with, verify_netlist, FlattenOptions,
    FlattenSummary, VerifyOptions,
};

use words::Word;

/// A combinational netlist fragment produced by a generator.
pub type Block = Netlist;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0}")]
    Width(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Width of the exact product of `w` with any `in_width`-bit input.
pub fn const_mult_width(w: i64, in_width: usize) -> usize {
    let half = 1i64 << (in_width - 1);
    let (a, b) = (w * -half, w * (half - 1));
    words::width_for(a.min(b), a.max(b))
}

/// Multiplier by the constant `w`, built as a CSD shift-add network and
/// simplified. Output `y` holds the exact product.
pub fn gen_const_mult(w: i64, in_width: usize) -> Block {
    assert!((2..=32).contains(&in_width), "input width {in_width}");
    let mut n = Netlist::new();
    let x = Word::from_nets(n.add_input("x", in_width));
    let y = words::const_mult(&mut n, &x, w);
    n.add_output("y", y.nets);
    simplify(&n)
}

/// Unsimplified Baugh-Wooley array multiplier for signed `x` (`in_width`
/// bits) times signed `w` (`w_width` bits); output `y` is
/// `in_width + w_width` bits. Partial-product rows are accumulated by
/// ripple-carry adders.
pub fn gen_generic_mult(in_width: usize, w_width: usize) -> Block {
    assert!(in_width >= 2 && w_width >= 2 && in_width + w_width <= 64);
    let (n_, m_) = (in_width, w_width);
    let out = n_ + m_;
    let mut n = Netlist::new();
    let a = n.add_input("x", n_);
    let b = n.add_input("w", m_);
    let zero = crate::netlist::NetId::ZERO;
    let one = crate::netlist::NetId::ONE;
    // correction constant 2^(n-1) + 2^(m-1) + 2^(n+m-1), modulo 2^(n+m)
    let corr: u128 = (1u128 << (n_ - 1)) + (1u128 << (m_ - 1)) + (1u128 << (out - 1));
    let mut acc: Vec<_> = (0..out)
        .map(|i| if (corr >> i) & 1 == 1 { one } else { zero })
        .collect();
    for j in 0..m_ {
        let mut row = vec![zero; out];
        for i in 0..n_ {
            let negative = (i == n_ - 1) != (j == m_ - 1);
            let pp = if negative {
                n.add_cell(CellKind::Nand2, &[a[i], b[j]])
            } else {
                n.add_cell(CellKind::And2, &[a[i], b[j]])
            };
            row[i + j] = pp;
        }
        acc = words::ripple_add(&mut n, &acc, &row, zero);
    }
    n.add_output("y", acc);
    n
}

/// Balanced tree of ripple-carry adders over signed operands of the given
/// widths. With `saturate` the sum is clamped into `out_width` bits;
/// otherwise `out_width` must hold the worst case.
pub fn gen_adder_tree(
    operand_widths: &[usize],
    out_width: usize,
    saturate: bool,
) -> Result<Block, SynthError> {
    if operand_widths.is_empty() {
        return Err(SynthError::Width("adder tree needs at least one operand".into()));
    }
    let mut n = Netlist::new();
    let ops: Vec<Word> = operand_widths
        .iter()
        .enumerate()
        .map(|(i, &w)| Word::from_nets(n.add_input(format!("x{i}"), w)))
        .collect();
    let sum = words::adder_tree(&mut n, ops);
    let need = words::width_for(sum.lo, sum.hi);
    if !saturate && need > out_width {
        return Err(SynthError::Width(format!(
            "sum needs {need} bits, output has {out_width}"
        )));
    }
    let y = words::saturate(&mut n, &sum, out_width);
    n.add_output("y", y.nets);
    Ok(simplify(&n))
}

pub fn gen_relu(width: usize) -> Block {
    assert!(width >= 2);
    let mut n = Netlist::new();
    let x = Word::from_nets(n.add_input("x", width));
    let y = words::relu(&mut n, &x);
    n.add_output("y", y.nets);
    simplify(&n)
}

/// Requantizer from an `in_width`-bit accumulator to 8 bits, bit-exact
/// with [`crate::qmodel::requantize`].
pub fn gen_requant(p: RequantParams, in_width: usize) -> Result<Block, SynthError> {
    p.validate()?;
    if !(2..=crate::qmodel::MAX_ACC_WIDTH as usize).contains(&in_width) {
        return Err(SynthError::Width(format!("requantizer input width {in_width}")));
    }
    let mut n = Netlist::new();
    let x = Word::from_nets(n.add_input("x", in_width));
    let y = words::requant(&mut n, &x, p.m as i64, p.s, 8);
    n.add_output("y", y.nets);
    Ok(simplify(&n))
}

/// Count of nonzero CSD digits of `w`.
pub fn csd_weight(w: i64) -> usize {
    csd_encode(w).len()
}
