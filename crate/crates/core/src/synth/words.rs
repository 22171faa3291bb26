//! Word-level arithmetic emitted as gates.
//!
//! A [`Word`] is a two's-complement bus together with the exact range of
//! values it can carry. Widths are derived from ranges, so every adder is
//! exactly as wide as its result needs and truncating an operand to that
//! width is harmless (the arithmetic is exact modulo `2^width`).

use crate::netlist::{CellKind, NetId, Netlist};
use crate::qmodel::bits_needed_signed;

use super::csd::csd_encode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Word {
    /// LSB first.
    pub nets: Vec<NetId>,
    pub lo: i64,
    pub hi: i64,
}

pub(crate) fn width_for(lo: i64, hi: i64) -> usize {
    bits_needed_signed(lo).max(bits_needed_signed(hi)) as usize
}

impl Word {
    pub fn from_nets(nets: Vec<NetId>) -> Word {
        let w = nets.len();
        let half = 1i64 << (w - 1);
        Word {
            nets,
            lo: -half,
            hi: half - 1,
        }
    }

    /// Re-declare a narrower range the caller guarantees.
    pub fn with_range(mut self, lo: i64, hi: i64) -> Word {
        debug_assert!(lo <= hi);
        let w = width_for(lo, hi);
        self.nets = extend(&self.nets, w);
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn constant(v: i64) -> Word {
        let w = width_for(v, v);
        Word {
            nets: (0..w).map(|i| NetId::constant((v >> i) & 1 == 1)).collect(),
            lo: v,
            hi: v,
        }
    }

    pub fn width(&self) -> usize {
        self.nets.len()
    }

    pub fn sign(&self) -> NetId {
        *self.nets.last().expect("word has at least one bit")
    }

    pub fn shl(&self, p: u32) -> Word {
        let mut nets = vec![NetId::ZERO; p as usize];
        nets.extend_from_slice(&self.nets);
        Word {
            nets,
            lo: self.lo << p,
            hi: self.hi << p,
        }
    }
}

/// Sign-extend or truncate to `width` bits.
pub(crate) fn extend(nets: &[NetId], width: usize) -> Vec<NetId> {
    let msb = *nets.last().expect("non-empty bus");
    (0..width).map(|i| nets.get(i).copied().unwrap_or(msb)).collect()
}

pub(crate) fn full_adder(n: &mut Netlist, a: NetId, b: NetId, cin: NetId) -> (NetId, NetId) {
    let p = n.add_cell(CellKind::Xor2, &[a, b]);
    let s = n.add_cell(CellKind::Xor2, &[p, cin]);
    let g = n.add_cell(CellKind::And2, &[a, b]);
    let t = n.add_cell(CellKind::And2, &[p, cin]);
    let c = n.add_cell(CellKind::Or2, &[g, t]);
    (s, c)
}

/// Ripple-carry sum of equal-width buses, modulo `2^width`.
pub(crate) fn ripple_add(n: &mut Netlist, a: &[NetId], b: &[NetId], cin: NetId) -> Vec<NetId> {
    debug_assert_eq!(a.len(), b.len());
    let mut carry = cin;
    let mut out = Vec::with_capacity(a.len());
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        if i + 1 == a.len() {
            // the carry out of the MSB is never used
            let p = n.add_cell(CellKind::Xor2, &[x, y]);
            out.push(n.add_cell(CellKind::Xor2, &[p, carry]));
        } else {
            let (s, c) = full_adder(n, x, y, carry);
            out.push(s);
            carry = c;
        }
    }
    out
}

/// `a + b`, or `a - b` when `subtract` is set (inverted operand, carry-in 1).
pub(crate) fn add(n: &mut Netlist, a: &Word, b: &Word, subtract: bool) -> Word {
    let (lo, hi) = if subtract {
        (a.lo - b.hi, a.hi - b.lo)
    } else {
        (a.lo + b.lo, a.hi + b.hi)
    };
    let w = width_for(lo, hi);
    let x = extend(&a.nets, w);
    let mut y = extend(&b.nets, w);
    let cin = if subtract {
        for bit in y.iter_mut() {
            *bit = n.add_cell(CellKind::Inv, &[*bit]);
        }
        NetId::ONE
    } else {
        NetId::ZERO
    };
    Word {
        nets: ripple_add(n, &x, &y, cin),
        lo,
        hi,
    }
}

/// `x * c` as a CSD shift-add/subtract network.
pub(crate) fn const_mult(n: &mut Netlist, x: &Word, c: i64) -> Word {
    let digits = csd_encode(c);
    if digits.is_empty() {
        return Word::constant(0);
    }
    // start from the most significant positive digit to avoid a negation
    let first = digits
        .iter()
        .rposition(|d| d.sign > 0)
        .unwrap_or(digits.len() - 1);
    let exact = |coef: i64| {
        let (a, b) = (x.lo * coef, x.hi * coef);
        (a.min(b), a.max(b))
    };
    let d0 = digits[first];
    let mut coef = d0.value();
    let mut acc = if d0.sign > 0 {
        x.shl(d0.position)
    } else {
        add(n, &Word::constant(0), &x.shl(d0.position), true)
    };
    for (i, d) in digits.iter().enumerate().rev() {
        if i != first {
            // interval sums over-approximate since both operands depend on
            // x; narrowing to the exact range lets the unused carry logic
            // be swept
            coef += d.value();
            let (lo, hi) = exact(coef);
            acc = add(n, &acc, &x.shl(d.position), d.sign < 0).with_range(lo, hi);
        }
    }
    let (lo, hi) = exact(c);
    acc.with_range(lo, hi)
}

/// Sum of all operands through a balanced tree of ripple adders.
pub(crate) fn adder_tree(n: &mut Netlist, operands: Vec<Word>) -> Word {
    if operands.is_empty() {
        return Word::constant(0);
    }
    let mut level = operands;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(n, &a, &b, false)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().unwrap()
}

/// Clamp into the `width`-bit two's-complement range.
pub(crate) fn saturate(n: &mut Netlist, x: &Word, width: usize) -> Word {
    let (min, max) = (-(1i64 << (width - 1)), (1i64 << (width - 1)) - 1);
    let (lo, hi) = (x.lo.clamp(min, max), x.hi.clamp(min, max));
    if x.width() <= width {
        return Word {
            nets: extend(&x.nets, width),
            lo,
            hi,
        };
    }
    let sign = x.sign();
    let mut ovf = NetId::ZERO;
    for k in width - 1..x.width() - 1 {
        let d = n.add_cell(CellKind::Xor2, &[x.nets[k], sign]);
        ovf = if ovf == NetId::ZERO {
            d
        } else {
            n.add_cell(CellKind::Or2, &[ovf, d])
        };
    }
    let not_sign = n.add_cell(CellKind::Inv, &[sign]);
    let nets = (0..width)
        .map(|i| {
            let sat = if i == width - 1 { sign } else { not_sign };
            n.add_cell(CellKind::Mux2, &[x.nets[i], sat, ovf])
        })
        .collect();
    Word { nets, lo, hi }
}

/// `max(x, 0)`: every bit ANDed with the inverted sign.
pub(crate) fn relu(n: &mut Netlist, x: &Word) -> Word {
    let not_sign = n.add_cell(CellKind::Inv, &[x.sign()]);
    let nets = x
        .nets
        .iter()
        .map(|&b| n.add_cell(CellKind::And2, &[b, not_sign]))
        .collect();
    Word {
        nets,
        lo: x.lo.max(0),
        hi: x.hi.max(0),
    }
}

/// Arithmetic shift right by `s` (floor division by `2^s`).
pub(crate) fn shr(x: &Word, s: u32) -> Word {
    let (lo, hi) = (x.lo >> s, x.hi >> s);
    let w = width_for(lo, hi);
    let nets = (0..w)
        .map(|i| x.nets.get(i + s as usize).copied().unwrap_or(x.sign()))
        .collect();
    Word { nets, lo, hi }
}

/// Multiply by `m`, add the rounding constant, shift right by `s`, clamp
/// to `out_width` bits.
pub(crate) fn requant(n: &mut Netlist, acc: &Word, m: i64, s: u32, out_width: usize) -> Word {
    let prod = const_mult(n, acc, m);
    let rounded = if s > 0 {
        add(n, &prod, &Word::constant(1i64 << (s - 1)), false)
    } else {
        prod
    };
    saturate(n, &shr(&rounded, s), out_width)
}
