//! Logic simplification: constant propagation, structural hashing and
//! dead-gate elimination, iterated to a fixpoint.
//!
//! Each pass rebuilds the netlist cell by cell in topological order. Every
//! old cell becomes either an existing net (folded or hashed away) or at
//! most one new cell, so a pass never increases the cell count. Hashing
//! ignores stage tags, which is what shares logic across layers.

use std::collections::HashMap;

use super::{CellKind, NetId, Netlist};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimplifyOptions {
    /// Merge flops whose D nets are identical.
    pub merge_flops: bool,
    /// Replace flops with D tied to 0 by the constant 0 (flops reset to 0).
    pub fold_constant_flops: bool,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        SimplifyOptions {
            merge_flops: true,
            fold_constant_flops: true,
        }
    }
}

const MAX_PASSES: usize = 64;

pub fn simplify(n: &Netlist) -> Netlist {
    simplify_with(n, &SimplifyOptions::default())
}

pub fn simplify_with(n: &Netlist, opts: &SimplifyOptions) -> Netlist {
    let mut cur = pass(n, opts);
    for _ in 0..MAX_PASSES {
        let next = pass(&cur, opts);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn pass(old: &Netlist, opts: &SimplifyOptions) -> Netlist {
    let mut rw = Rewriter {
        nl: Netlist::new(),
        ..Default::default()
    };
    let mut map = vec![NetId::ZERO; old.net_count()];
    map[1] = NetId::ONE;

    for bus in old.inputs() {
        let nets = rw.nl.add_input(bus.name.clone(), bus.width());
        for (o, n) in bus.nets.iter().zip(nets) {
            map[o.index()] = n;
        }
    }

    let mut by_d: HashMap<NetId, NetId> = HashMap::new();
    let mut pending = Vec::new();
    for f in old.flops() {
        if opts.fold_constant_flops && f.d == NetId::ZERO {
            map[f.q.index()] = NetId::ZERO;
            continue;
        }
        if opts.merge_flops {
            if let Some(&q) = by_d.get(&f.d) {
                map[f.q.index()] = q;
                continue;
            }
        }
        rw.nl.set_stage(f.stage);
        let (idx, q) = rw.nl.add_flop_deferred();
        map[f.q.index()] = q;
        by_d.insert(f.d, q);
        pending.push((idx, f.d));
    }

    for c in old.cells() {
        let ins: Vec<NetId> = c.inputs.iter().map(|n| map[n.index()]).collect();
        rw.nl.set_stage(c.stage);
        map[c.output.index()] = rw.make(c.kind, &ins);
    }

    for (idx, d) in pending {
        rw.nl.connect_flop(idx, map[d.index()]);
    }
    for bus in old.outputs() {
        rw.nl
            .add_output(bus.name.clone(), bus.nets.iter().map(|n| map[n.index()]).collect());
    }
    rw.nl.set_latency(old.latency());
    rw.nl.set_stage(None);
    for bus in old.inputs() {
        for n in &bus.nets {
            if let Some(name) = old.net_name(*n) {
                rw.nl.set_net_name(map[n.index()], name);
            }
        }
    }
    sweep(rw.nl)
}

/// Remove cells and flops with no path to a primary output and compact
/// net ids, preserving their relative order.
fn sweep(nl: Netlist) -> Netlist {
    let count = nl.net_count();
    let mut cell_of = vec![usize::MAX; count];
    for (i, c) in nl.cells().iter().enumerate() {
        cell_of[c.output.index()] = i;
    }
    let mut flop_of = vec![usize::MAX; count];
    for (i, f) in nl.flops().iter().enumerate() {
        flop_of[f.q.index()] = i;
    }
    let mut live = vec![false; count];
    let mut stack: Vec<NetId> = nl.outputs().iter().flat_map(|b| b.nets.iter().copied()).collect();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut live[n.index()], true) {
            continue;
        }
        if cell_of[n.index()] != usize::MAX {
            stack.extend(nl.cells()[cell_of[n.index()]].inputs.iter().copied());
        } else if flop_of[n.index()] != usize::MAX {
            stack.push(nl.flops()[flop_of[n.index()]].d);
        }
    }
    live[0] = true;
    live[1] = true;
    for b in nl.inputs() {
        for n in &b.nets {
            live[n.index()] = true;
        }
    }
    let mut remap = vec![NetId::ZERO; count];
    let mut next = 0u32;
    for (i, &l) in live.iter().enumerate() {
        if l {
            remap[i] = NetId(next);
            next += 1;
        }
    }
    let m = |n: &NetId| remap[n.index()];
    let inputs = nl
        .inputs()
        .iter()
        .map(|b| super::Bus {
            name: b.name.clone(),
            nets: b.nets.iter().map(m).collect(),
        })
        .collect();
    let outputs = nl
        .outputs()
        .iter()
        .map(|b| super::Bus {
            name: b.name.clone(),
            nets: b.nets.iter().map(m).collect(),
        })
        .collect();
    let cells = nl
        .cells()
        .iter()
        .filter(|c| live[c.output.index()])
        .map(|c| super::Cell {
            kind: c.kind,
            inputs: c.inputs.iter().map(m).collect(),
            output: m(&c.output),
            stage: c.stage,
        })
        .collect();
    let flops = nl
        .flops()
        .iter()
        .filter(|f| live[f.q.index()])
        .map(|f| super::FlipFlop {
            d: m(&f.d),
            q: m(&f.q),
            stage: f.stage,
        })
        .collect();
    let mut out = Netlist::from_parts(next, inputs, outputs, cells, flops, nl.latency())
        .expect("sweep preserves netlist invariants");
    for b in nl.inputs() {
        for n in &b.nets {
            if let Some(name) = nl.net_name(*n) {
                out.set_net_name(m(n), name);
            }
        }
    }
    out
}

/// Smart constructors over a netlist under construction.
#[derive(Default)]
struct Rewriter {
    nl: Netlist,
    table: HashMap<(CellKind, [NetId; 3]), NetId>,
    /// `inv_src[y] = x` when `y = INV(x)` exists.
    inv_src: HashMap<NetId, NetId>,
}

impl Rewriter {
    fn make(&mut self, kind: CellKind, ins: &[NetId]) -> NetId {
        match kind {
            CellKind::Buf => ins[0],
            CellKind::Inv => self.inv(ins[0]),
            CellKind::And2 => self.and(ins[0], ins[1]),
            CellKind::Or2 => self.or(ins[0], ins[1]),
            CellKind::Nand2 => self.nand(ins[0], ins[1]),
            CellKind::Nor2 => self.nor(ins[0], ins[1]),
            CellKind::Xor2 => self.xor(ins[0], ins[1]),
            CellKind::Xnor2 => self.xnor(ins[0], ins[1]),
            CellKind::Mux2 => self.mux(ins[0], ins[1], ins[2]),
        }
    }

    fn hashed(&mut self, kind: CellKind, ins: &[NetId]) -> NetId {
        let mut key = [NetId::ZERO; 3];
        key[..ins.len()].copy_from_slice(ins);
        if kind.is_commutative() && key[0] > key[1] {
            key.swap(0, 1);
        }
        if let Some(&n) = self.table.get(&(kind, key)) {
            return n;
        }
        let out = self.nl.add_cell(kind, &key[..ins.len()]);
        self.table.insert((kind, key), out);
        out
    }

    fn complementary(&self, a: NetId, b: NetId) -> bool {
        self.inv_src.get(&a) == Some(&b) || self.inv_src.get(&b) == Some(&a)
    }

    fn inv(&mut self, a: NetId) -> NetId {
        if a.is_const() {
            return NetId::constant(a == NetId::ZERO);
        }
        if let Some(&src) = self.inv_src.get(&a) {
            return src;
        }
        let y = self.hashed(CellKind::Inv, &[a]);
        self.inv_src.insert(y, a);
        y
    }

    fn and(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ZERO, _) | (_, N::ZERO) => N::ZERO,
            (N::ONE, x) | (x, N::ONE) => x,
            _ if a == b => a,
            _ if self.complementary(a, b) => N::ZERO,
            _ => self.hashed(CellKind::And2, &[a, b]),
        }
    }

    fn or(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ONE, _) | (_, N::ONE) => N::ONE,
            (N::ZERO, x) | (x, N::ZERO) => x,
            _ if a == b => a,
            _ if self.complementary(a, b) => N::ONE,
            _ => self.hashed(CellKind::Or2, &[a, b]),
        }
    }

    fn nand(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ZERO, _) | (_, N::ZERO) => N::ONE,
            (N::ONE, x) | (x, N::ONE) => self.inv(x),
            _ if a == b => self.inv(a),
            _ if self.complementary(a, b) => N::ONE,
            _ => self.hashed(CellKind::Nand2, &[a, b]),
        }
    }

    fn nor(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ONE, _) | (_, N::ONE) => N::ZERO,
            (N::ZERO, x) | (x, N::ZERO) => self.inv(x),
            _ if a == b => self.inv(a),
            _ if self.complementary(a, b) => N::ZERO,
            _ => self.hashed(CellKind::Nor2, &[a, b]),
        }
    }

    fn xor(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ZERO, x) | (x, N::ZERO) => x,
            (N::ONE, x) | (x, N::ONE) => self.inv(x),
            _ if a == b => N::ZERO,
            _ if self.complementary(a, b) => N::ONE,
            _ => self.hashed(CellKind::Xor2, &[a, b]),
        }
    }

    fn xnor(&mut self, a: NetId, b: NetId) -> NetId {
        use NetId as N;
        match (a, b) {
            (N::ZERO, x) | (x, N::ZERO) => self.inv(x),
            (N::ONE, x) | (x, N::ONE) => x,
            _ if a == b => N::ONE,
            _ if self.complementary(a, b) => N::ZERO,
            _ => self.hashed(CellKind::Xnor2, &[a, b]),
        }
    }

    fn mux(&mut self, d0: NetId, d1: NetId, s: NetId) -> NetId {
        use NetId as N;
        match (d0, d1, s) {
            (_, _, N::ZERO) => d0,
            (_, _, N::ONE) => d1,
            _ if d0 == d1 => d0,
            (N::ZERO, N::ONE, _) => s,
            (N::ONE, N::ZERO, _) => self.inv(s),
            (N::ZERO, _, _) => self.and(s, d1),
            (_, N::ONE, _) => self.or(s, d0),
            _ if self.inv_src.get(&d1) == Some(&d0) => self.xor(d0, s),
            _ => self.hashed(CellKind::Mux2, &[d0, d1, s]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{simulate, stats};
    use super::*;

    fn exhaustive_same(a: &Netlist, b: &Netlist) {
        let width: usize = a.inputs().iter().map(|b| b.width()).sum();
        assert!(width <= 12);
        for v in 0..(1u64 << width) {
            let mut assignment = Vec::new();
            let mut off = 0;
            for bus in a.inputs() {
                assignment.push((v >> off) & ((1 << bus.width()) - 1));
                off += bus.width();
            }
            let stream = vec![assignment.clone(), assignment];
            assert_eq!(simulate(a, &stream).unwrap(), simulate(b, &stream).unwrap());
        }
    }

    #[test]
    fn and_with_one_becomes_a_wire() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let y = n.add_cell(CellKind::And2, &[x[0], NetId::ONE]);
        n.add_output("y", vec![y]);
        let s = simplify(&n);
        assert!(s.cells().is_empty());
        assert_eq!(s.outputs()[0].nets, s.inputs()[0].nets);
    }

    #[test]
    fn duplicate_xors_merge_and_respect_commutativity() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let p = n.add_cell(CellKind::Xor2, &[x[0], x[1]]);
        let q = n.add_cell(CellKind::Xor2, &[x[1], x[0]]);
        let a = n.add_cell(CellKind::And2, &[x[0], x[1]]);
        let b = n.add_cell(CellKind::And2, &[x[1], x[0]]);
        n.add_output("y", vec![p, q, a, b]);
        let s = simplify(&n);
        assert_eq!(s.cells().len(), 2);
        let y = &s.outputs()[0].nets;
        assert_eq!(y[0], y[1]);
        assert_eq!(y[2], y[3]);
        exhaustive_same(&n, &s);
    }

    #[test]
    fn constant_rules_for_every_kind() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let mut outs = Vec::new();
        for kind in CellKind::ALL {
            for c in [NetId::ZERO, NetId::ONE] {
                let ins: Vec<NetId> = match kind.arity() {
                    1 => vec![c],
                    2 => vec![x[0], c],
                    _ => vec![x[0], x[1], c],
                };
                outs.push(n.add_cell(kind, &ins));
            }
            if kind.arity() == 2 {
                outs.push(n.add_cell(kind, &[x[0], x[0]]));
            }
        }
        let mux_data_const = [
            n.add_cell(CellKind::Mux2, &[NetId::ZERO, NetId::ONE, x[0]]),
            n.add_cell(CellKind::Mux2, &[NetId::ONE, NetId::ZERO, x[0]]),
            n.add_cell(CellKind::Mux2, &[NetId::ZERO, x[1], x[0]]),
            n.add_cell(CellKind::Mux2, &[x[1], NetId::ONE, x[0]]),
        ];
        outs.extend(mux_data_const);
        let nx = n.add_cell(CellKind::Inv, &[x[1]]);
        outs.push(n.add_cell(CellKind::Mux2, &[x[1], nx, x[0]]));
        outs.push(n.add_cell(CellKind::And2, &[x[1], nx]));
        let nnx = n.add_cell(CellKind::Inv, &[nx]);
        outs.push(nnx);
        for (i, chunk) in outs.chunks(16).enumerate() {
            n.add_output(format!("y{i}"), chunk.to_vec());
        }
        let s = simplify(&n);
        exhaustive_same(&n, &s);
        // the only surviving logic: one INV per input bit, AND2/OR2/XOR2 of
        // the mux rewrites
        assert!(s.cells().len() <= 6, "{:?}", stats(&s).cells_by_kind);
    }

    #[test]
    fn dead_logic_and_constant_flops_are_removed() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let dead = n.add_cell(CellKind::Or2, &[x[0], x[1]]);
        let _dead_flop = n.add_flop(dead);
        let zero = n.add_cell(CellKind::And2, &[x[0], NetId::ZERO]);
        let q0 = n.add_flop(zero);
        let live = n.add_cell(CellKind::Xor2, &[x[0], q0]);
        let q1 = n.add_flop(live);
        let q2 = n.add_flop(live);
        let y = n.add_cell(CellKind::And2, &[q1, q2]);
        n.add_output("y", vec![y]);
        let s = simplify(&n);
        // XOR(x0, 0) -> x0, the two flops on x0 merge, AND(q,q) -> q
        assert_eq!(s.cells().len(), 0);
        assert_eq!(s.flops().len(), 1);
        let stream: Vec<Vec<u64>> = (0..8).map(|i| vec![i % 4]).collect();
        assert_eq!(simulate(&n, &stream).unwrap(), simulate(&s, &stream).unwrap());
    }

    #[test]
    fn flop_options_can_be_disabled() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let a = n.add_flop(x[0]);
        let b = n.add_flop(x[0]);
        let c = n.add_flop(NetId::ZERO);
        let y = n.add_cell(CellKind::Xor2, &[a, b]);
        let z = n.add_cell(CellKind::Or2, &[y, c]);
        n.add_output("y", vec![z]);
        let keep = SimplifyOptions {
            merge_flops: false,
            fold_constant_flops: false,
        };
        assert_eq!(simplify_with(&n, &keep).flops().len(), 3);
        assert_eq!(simplify(&n).flops().len(), 0);
    }

    #[test]
    fn simplify_is_idempotent_on_output() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 3);
        let a = n.add_cell(CellKind::Nand2, &[x[0], x[1]]);
        let b = n.add_cell(CellKind::Nand2, &[x[1], x[0]]);
        let c = n.add_cell(CellKind::Mux2, &[a, b, x[2]]);
        let d = n.add_cell(CellKind::Inv, &[c]);
        let e = n.add_cell(CellKind::Inv, &[d]);
        n.add_output("y", vec![e]);
        let s = simplify(&n);
        assert_eq!(simplify(&s), s);
        exhaustive_same(&n, &s);
    }
}
