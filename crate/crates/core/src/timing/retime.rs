//! Minimum-period retiming by iterative relabeling.
//!
//! The netlist becomes a graph with one vertex per cell plus a host vertex
//! for the environment, and one edge per cell pin or output bit weighted by
//! the flops on it. A label `r(v)` moves `r(v)` flops from the outputs of
//! `v` to its inputs; the retimed weight of `u -> v` is
//! `w + r(v) - r(u)`. The host carries a single label, so every
//! input-to-output path keeps its register count and the latency is
//! unchanged. For arrival times the host is split into a source (inputs)
//! and a sink (outputs) so that no false path runs through the
//! environment.
//!
//! The feasibility check for a candidate period increments the label of
//! every vertex whose arrival time is too late, repeating until all
//! arrivals fit. When the host is incremented, the increment is pushed
//! along zero-weight edges so no edge weight goes negative. Integer delays
//! make a binary search over integer periods exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{sta_min_period, TimingError, TimingModel};
use crate::netlist::{Driver, NetId, Netlist};

const HOST: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetimingResult {
    #[serde(skip)]
    pub netlist: Netlist,
    pub period: u32,
    pub original_period: u32,
    /// Label of every cell of the input netlist, by cell index.
    pub labels: Vec<i64>,
    pub host_label: i64,
}

#[derive(Clone, Copy, Debug)]
enum Sink {
    Pin(usize, usize),
    Out(usize, usize),
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    from: usize,
    to: usize,
    w: i64,
    /// Net driving the edge before any flops: a cell output or an input bit.
    src: NetId,
    sink: Sink,
}

struct Graph {
    delay: Vec<i64>,
    edges: Vec<Edge>,
    consts: Vec<(Sink, bool)>,
    out_edges: Vec<Vec<usize>>,
}

enum Traced {
    Const(bool),
    From { vertex: usize, net: NetId, w: i64 },
}

fn build_graph(n: &Netlist, t: &TimingModel) -> Result<Graph, TimingError> {
    let drivers = n.drivers();
    let trace = |mut net: NetId| -> Result<Traced, TimingError> {
        let mut w = 0;
        loop {
            match drivers[net.index()] {
                Driver::Flop(f) => {
                    w += 1;
                    if w as usize > n.flops().len() {
                        return Err(TimingError::RegisterCycle(f));
                    }
                    net = n.flops()[f].d;
                }
                Driver::Cell(i) => return Ok(Traced::From { vertex: i + 1, net, w }),
                Driver::Input { .. } => return Ok(Traced::From { vertex: HOST, net, w }),
                Driver::Const(b) => return Ok(Traced::Const(b)),
                Driver::None => unreachable!("validated netlists drive every used net"),
            }
        }
    };
    let mut g = Graph {
        delay: std::iter::once(0)
            .chain(n.cells().iter().map(|c| t.delay.get(c.kind) as i64))
            .collect(),
        edges: Vec::new(),
        consts: Vec::new(),
        out_edges: vec![Vec::new(); n.cells().len() + 1],
    };
    let add = |g: &mut Graph, net: NetId, to: usize, sink: Sink| -> Result<(), TimingError> {
        match trace(net)? {
            Traced::Const(b) => g.consts.push((sink, b)),
            Traced::From { vertex, net, w } => {
                g.out_edges[vertex].push(g.edges.len());
                g.edges.push(Edge {
                    from: vertex,
                    to,
                    w,
                    src: net,
                    sink,
                });
            }
        }
        Ok(())
    };
    for (i, c) in n.cells().iter().enumerate() {
        for (pin, &net) in c.inputs.iter().enumerate() {
            add(&mut g, net, i + 1, Sink::Pin(i, pin))?;
        }
    }
    for (b, bus) in n.outputs().iter().enumerate() {
        for (bit, &net) in bus.nets.iter().enumerate() {
            add(&mut g, net, HOST, Sink::Out(b, bit))?;
        }
    }
    Ok(g)
}

impl Graph {
    fn vertices(&self) -> usize {
        self.delay.len()
    }

    /// Largest label any feasible retiming needs, when the graph is acyclic
    /// and every vertex lies on a host-to-host path: `2 * P` for `P` the
    /// heaviest such path. `None` otherwise.
    fn label_bound(&self) -> Option<i64> {
        let v = self.vertices();
        let mut indeg = vec![0u32; v];
        for e in &self.edges {
            if e.to != HOST {
                indeg[e.to] += 1;
            }
        }
        let mut order = Vec::with_capacity(v);
        let mut stack: Vec<usize> = (0..v).filter(|&x| indeg[x] == 0).collect();
        while let Some(x) = stack.pop() {
            order.push(x);
            for &k in &self.out_edges[x] {
                let to = self.edges[k].to;
                if to != HOST {
                    indeg[to] -= 1;
                    if indeg[to] == 0 {
                        stack.push(to);
                    }
                }
            }
        }
        if order.len() != v {
            return None;
        }
        // heaviest path from the host source, and to the host sink
        let mut from_host = vec![i64::MIN; v];
        from_host[HOST] = 0;
        for &x in &order {
            if from_host[x] == i64::MIN {
                return None;
            }
            for &k in &self.out_edges[x] {
                let e = &self.edges[k];
                if e.to != HOST {
                    from_host[e.to] = from_host[e.to].max(from_host[x] + e.w);
                }
            }
        }
        let mut to_host = vec![i64::MIN; v];
        for &x in order.iter().rev() {
            for &k in &self.out_edges[x] {
                let e = &self.edges[k];
                let tail = if e.to == HOST { 0 } else { to_host[e.to] };
                if tail != i64::MIN {
                    to_host[x] = to_host[x].max(tail + e.w);
                }
            }
            if to_host[x] == i64::MIN {
                return None;
            }
        }
        Some(2 * to_host[HOST])
    }

    fn retimed_weights(&self, r: &[i64], wr: &mut [i64]) {
        for (k, e) in self.edges.iter().enumerate() {
            wr[k] = e.w + r[e.to] - r[e.from];
        }
    }

    /// Labels meeting combinational budget `c`, or `None`.
    fn feasible(&self, c: i64, bound: Option<i64>) -> Option<Vec<i64>> {
        let v = self.vertices();
        if c < 0 || self.delay.iter().any(|&d| d > c) {
            return None;
        }
        let mut r = vec![0i64; v];
        let mut wr = vec![0i64; self.edges.len()];
        let mut arr_in = vec![0i64; v];
        let mut arrival = vec![0i64; v];
        let mut indeg = vec![0u32; v];
        let mut bump = vec![false; v];
        let mut stack = Vec::new();
        for _ in 0..v + 2 {
            self.retimed_weights(&r, &mut wr);
            indeg.iter_mut().for_each(|d| *d = 0);
            arr_in.iter_mut().for_each(|a| *a = 0);
            for (k, e) in self.edges.iter().enumerate() {
                if wr[k] == 0 && e.to != HOST {
                    indeg[e.to] += 1;
                }
            }
            stack.clear();
            stack.extend((0..v).filter(|&x| indeg[x] == 0));
            let mut seen = 0;
            let mut sink = 0i64;
            while let Some(x) = stack.pop() {
                seen += 1;
                arrival[x] = arr_in[x] + self.delay[x];
                for &k in &self.out_edges[x] {
                    if wr[k] != 0 {
                        continue;
                    }
                    let to = self.edges[k].to;
                    if to == HOST {
                        sink = sink.max(arrival[x]);
                    } else {
                        arr_in[to] = arr_in[to].max(arrival[x]);
                        indeg[to] -= 1;
                        if indeg[to] == 0 {
                            stack.push(to);
                        }
                    }
                }
            }
            if seen != v {
                // a register-free loop
                return None;
            }
            bump.iter_mut().for_each(|b| *b = false);
            stack.clear();
            for x in 1..v {
                if arrival[x] > c {
                    bump[x] = true;
                    stack.push(x);
                }
            }
            if sink > c {
                bump[HOST] = true;
                stack.push(HOST);
            }
            if stack.is_empty() {
                return Some(r);
            }
            // moving a label past a zero-weight edge drags its head along
            while let Some(x) = stack.pop() {
                for &k in &self.out_edges[x] {
                    let to = self.edges[k].to;
                    if wr[k] == 0 && !bump[to] {
                        bump[to] = true;
                        stack.push(to);
                    }
                }
            }
            for x in 0..v {
                if bump[x] {
                    r[x] += 1;
                    if bound.is_some_and(|b| r[x] > b) {
                        return None;
                    }
                }
            }
        }
        None
    }
}

/// Retime `n` to the smallest achievable period. Returns the input
/// structure (flops shared per driver) when no improvement exists.
pub fn retime(n: &Netlist, t: &TimingModel) -> Result<RetimingResult, TimingError> {
    let g = build_graph(n, t)?;
    let original = sta_min_period(n, t)?.period;
    let overhead = (t.clk_to_q + t.setup) as i64;
    let bound = g.label_bound();
    let mut hi = original as i64;
    let mut best = match g.feasible(hi - overhead, bound) {
        Some(r) => r,
        None => vec![0; g.vertices()],
    };
    let mut lo = overhead + g.delay.iter().copied().max().unwrap_or(0);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match g.feasible(mid - overhead, bound) {
            Some(r) => {
                hi = mid;
                best = r;
            }
            None => lo = mid + 1,
        }
    }
    finish(n, t, &g, best, original)
}

/// Retime `n` to meet `period`, if possible.
pub fn retime_to_period(
    n: &Netlist,
    t: &TimingModel,
    period: u32,
) -> Result<Option<RetimingResult>, TimingError> {
    let g = build_graph(n, t)?;
    let original = sta_min_period(n, t)?.period;
    let budget = period as i64 - (t.clk_to_q + t.setup) as i64;
    match g.feasible(budget, g.label_bound()) {
        Some(r) => Ok(Some(finish(n, t, &g, r, original)?)),
        None => Ok(None),
    }
}

fn finish(
    n: &Netlist,
    t: &TimingModel,
    g: &Graph,
    r: Vec<i64>,
    original: u32,
) -> Result<RetimingResult, TimingError> {
    let netlist = rebuild(n, g, &r);
    let period = sta_min_period(&netlist, t)?.period;
    Ok(RetimingResult {
        netlist,
        period,
        original_period: original,
        labels: r[1..].to_vec(),
        host_label: r[HOST],
    })
}

/// Materialize the retimed graph: each driver gets one flop chain as long
/// as its heaviest out-edge, and every edge taps the chain at its weight.
fn rebuild(n: &Netlist, g: &Graph, r: &[i64]) -> Netlist {
    let mut wr = vec![0i64; g.edges.len()];
    g.retimed_weights(r, &mut wr);
    debug_assert!(wr.iter().all(|&w| w >= 0));

    let mut out = Netlist::new();
    let mut map = vec![NetId::ZERO; n.net_count()];
    map[1] = NetId::ONE;
    for b in n.inputs() {
        let nets = out.add_input(b.name.clone(), b.width());
        for (o, x) in b.nets.iter().zip(nets) {
            map[o.index()] = x;
        }
    }
    for b in n.inputs() {
        for &x in &b.nets {
            if let Some(name) = n.net_name(x) {
                out.set_net_name(map[x.index()], name);
            }
        }
    }

    // chain length per source net; sources in net order for determinism
    let mut depth = vec![0usize; n.net_count()];
    for (k, e) in g.edges.iter().enumerate() {
        depth[e.src.index()] = depth[e.src.index()].max(wr[k] as usize);
    }
    let drivers = n.drivers();
    let mut chains: Vec<Vec<(usize, NetId)>> = vec![Vec::new(); n.net_count()];
    for (net, &d) in depth.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let stage = match drivers[net] {
            Driver::Cell(i) => n.cells()[i].stage,
            _ => None,
        };
        out.set_stage(stage);
        chains[net] = (0..d).map(|_| out.add_flop_deferred()).collect();
    }

    let cell_count = n.cells().len();
    let mut pin_edge: Vec<[Option<usize>; 3]> = vec![[None; 3]; cell_count];
    let mut pin_const: Vec<[Option<bool>; 3]> = vec![[None; 3]; cell_count];
    let mut out_edge: Vec<Vec<Option<usize>>> =
        n.outputs().iter().map(|b| vec![None; b.width()]).collect();
    let mut out_const: Vec<Vec<Option<bool>>> =
        n.outputs().iter().map(|b| vec![None; b.width()]).collect();
    for (k, e) in g.edges.iter().enumerate() {
        match e.sink {
            Sink::Pin(c, p) => pin_edge[c][p] = Some(k),
            Sink::Out(b, i) => out_edge[b][i] = Some(k),
        }
    }
    for &(s, v) in &g.consts {
        match s {
            Sink::Pin(c, p) => pin_const[c][p] = Some(v),
            Sink::Out(b, i) => out_const[b][i] = Some(v),
        }
    }

    // cell order: topological over zero-weight edges, stable by index
    let mut indeg = vec![0u32; cell_count];
    for (k, e) in g.edges.iter().enumerate() {
        if wr[k] == 0 && e.from != HOST && e.to != HOST {
            indeg[e.to - 1] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..cell_count).filter(|&c| indeg[c] == 0).map(Reverse).collect();
    let tap = |map: &[NetId], chains: &[Vec<(usize, NetId)>], e: &Edge, w: i64| -> NetId {
        if w == 0 {
            map[e.src.index()]
        } else {
            chains[e.src.index()][w as usize - 1].1
        }
    };
    while let Some(Reverse(c)) = ready.pop() {
        let cell = &n.cells()[c];
        let ins: Vec<NetId> = (0..cell.inputs.len())
            .map(|p| match (pin_edge[c][p], pin_const[c][p]) {
                (Some(k), _) => tap(&map, &chains, &g.edges[k], wr[k]),
                (None, Some(v)) => NetId::constant(v),
                (None, None) => unreachable!("every pin is an edge or a constant"),
            })
            .collect();
        out.set_stage(cell.stage);
        map[cell.output.index()] = out.add_cell(cell.kind, &ins);
        for &k in &g.out_edges[c + 1] {
            let e = &g.edges[k];
            if wr[k] == 0 && e.to != HOST {
                indeg[e.to - 1] -= 1;
                if indeg[e.to - 1] == 0 {
                    ready.push(Reverse(e.to - 1));
                }
            }
        }
    }
    out.set_stage(None);
    for (net, chain) in chains.iter().enumerate() {
        let mut d = map[net];
        for &(f, q) in chain {
            out.connect_flop(f, d);
            d = q;
        }
    }
    for (b, bus) in n.outputs().iter().enumerate() {
        let nets = (0..bus.width())
            .map(|i| match (out_edge[b][i], out_const[b][i]) {
                (Some(k), _) => tap(&map, &chains, &g.edges[k], wr[k]),
                (None, Some(v)) => NetId::constant(v),
                (None, None) => unreachable!("every output bit is an edge or a constant"),
            })
            .collect();
        out.add_output(bus.name.clone(), nets);
    }
    out.set_latency(n.latency());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{check_equiv, CellKind, EquivOptions};
    use crate::timing::insert_pipeline_stages;

    /// Input, nine unit-delay cells, one tagged flop, output.
    fn nine_cell_block() -> Netlist {
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        n.set_stage(Some(0));
        let mut s = x[0];
        for i in 0..9 {
            let kind = if i % 2 == 0 { CellKind::Inv } else { CellKind::Buf };
            s = n.add_cell(kind, &[s]);
        }
        let q = n.add_flop(s);
        n.add_output("y", vec![q]);
        n.set_latency(1);
        n
    }

    #[test]
    fn two_inserted_ranks_retime_from_13_to_7() {
        let t = TimingModel::default();
        let n = nine_cell_block();
        let staged = insert_pipeline_stages(&n, 2).unwrap();
        assert_eq!(sta_min_period(&staged, &t).unwrap().period, 13);
        let r = retime(&staged, &t).unwrap();
        assert_eq!(r.original_period, 13);
        assert_eq!(r.period, 7);
        assert_eq!(r.netlist.cells().len(), 9);
        assert_eq!(r.netlist.latency(), 3);
        let opts = EquivOptions {
            warmup: 3,
            trials: 1000,
            ..Default::default()
        };
        assert!(check_equiv(&staged, &r.netlist, &opts).unwrap().is_equivalent());
    }

    #[test]
    fn balanced_pipeline_is_left_alone() {
        let t = TimingModel::default();
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let a = n.add_cell(CellKind::And2, &[x[0], x[1]]);
        let q = n.add_flop(a);
        let b = n.add_cell(CellKind::Inv, &[q]);
        n.add_output("y", vec![b]);
        let r = retime(&n, &t).unwrap();
        assert_eq!(r.period, 5);
        assert_eq!(r.original_period, 5);
        assert_eq!(r.netlist.flops().len(), 1);
    }

    #[test]
    fn feedback_loops_bound_the_period() {
        // q -> 4 cells -> q: the loop holds one register, so no retiming can
        // beat 4 cells of delay
        let t = TimingModel::default();
        let mut n = Netlist::new();
        let x = n.add_input("x", 1);
        let (f, q) = n.add_flop_deferred();
        let mut s = n.add_cell(CellKind::Xor2, &[q, x[0]]);
        for _ in 0..3 {
            s = n.add_cell(CellKind::Inv, &[s]);
        }
        n.connect_flop(f, s);
        n.add_output("y", vec![s]);
        let r = retime(&n, &t).unwrap();
        assert!(r.period <= sta_min_period(&n, &t).unwrap().period);
        assert!(r.period >= t.period_for(4));
        assert!(retime_to_period(&n, &t, 7).unwrap().is_none());
    }

    #[test]
    fn pure_register_loop_is_reported() {
        let mut n = Netlist::new();
        let (f, q) = n.add_flop_deferred();
        n.connect_flop(f, q);
        let a = n.add_cell(CellKind::Inv, &[q]);
        n.add_output("y", vec![a]);
        assert!(matches!(
            retime(&n, &TimingModel::default()),
            Err(TimingError::RegisterCycle(0))
        ));
    }

    /// Minimum period over every label vector in `[-span, span]`, with the
    /// host pinned at 0, by exhaustive search.
    fn brute_force_period(g: &Graph, t: &TimingModel, span: i64) -> i64 {
        let v = g.vertices();
        let overhead = (t.clk_to_q + t.setup) as i64;
        let mut r = vec![-span; v];
        r[HOST] = 0;
        let mut best = i64::MAX;
        loop {
            let wr: Vec<i64> = g.edges.iter().map(|e| e.w + r[e.to] - r[e.from]).collect();
            if wr.iter().all(|&w| w >= 0) {
                if let Some(p) = zero_weight_critical_path(g, &wr) {
                    best = best.min(overhead + p);
                }
            }
            // odometer over the cell labels
            let mut k = 1;
            while k < v && r[k] == span {
                r[k] = -span;
                k += 1;
            }
            if k == v {
                return best;
            }
            r[k] += 1;
        }
    }

    /// Longest delay along register-free paths; `None` if they loop.
    fn zero_weight_critical_path(g: &Graph, wr: &[i64]) -> Option<i64> {
        fn arrive(g: &Graph, wr: &[i64], x: usize, memo: &mut [Option<i64>], busy: &mut [bool]) -> Option<i64> {
            if let Some(a) = memo[x] {
                return Some(a);
            }
            if busy[x] {
                return None;
            }
            busy[x] = true;
            let mut a = 0;
            for (k, e) in g.edges.iter().enumerate() {
                if e.to == x && wr[k] == 0 && e.from != HOST {
                    a = a.max(arrive(g, wr, e.from, memo, busy)?);
                }
            }
            busy[x] = false;
            memo[x] = Some(a + g.delay[x]);
            memo[x]
        }
        let v = g.vertices();
        let mut memo = vec![None; v];
        memo[HOST] = Some(0);
        let mut busy = vec![false; v];
        let mut worst = 0;
        for x in 1..v {
            worst = worst.max(arrive(g, wr, x, &mut memo, &mut busy)?);
        }
        Some(worst)
    }

    #[test]
    fn matches_exhaustive_search_on_small_netlists() {
        use crate::netlist::{random_netlist, RandomNetlistSpec};
        use rand::SeedableRng;
        let t = TimingModel::default();
        let spec = RandomNetlistSpec {
            input_buses: 2,
            max_bus_width: 2,
            cells: 5,
            output_bits: 2,
            flop_prob: 0.35,
            const_prob: 0.0,
            feedback: false,
        };
        let mut improved = 0;
        for seed in 0..60 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = random_netlist(&spec, &mut rng);
            let g = build_graph(&n, &t).unwrap();
            let r = retime(&n, &t).unwrap();
            let oracle = brute_force_period(&g, &t, 4);
            assert_eq!(r.period as i64, oracle, "seed {seed}");
            if r.period < r.original_period {
                improved += 1;
            }
            let warmup = 2 * (n.flops().len() + 2);
            let opts = EquivOptions {
                warmup,
                trials: 500,
                seed,
                ..Default::default()
            };
            let verdict = check_equiv(&n, &r.netlist, &opts).unwrap();
            assert!(verdict.is_equivalent(), "seed {seed}: {verdict:?}");
        }
        assert!(improved > 0);
    }
}
