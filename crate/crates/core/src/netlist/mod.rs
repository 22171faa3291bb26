//! Gate-level sequential netlist.
//!
//! Every net has exactly one driver: one of the two constant nets, a bit of
//! a primary input bus, a cell output or a flip-flop Q. Cells are kept in
//! topological order of their combinational dependencies, which the
//! simulator, the simplifier and the timing engine all rely on. Netlists are
//! built with [`Netlist::add_cell`] and friends (which can only create
//! acyclic logic) or restored from JSON, which re-checks every invariant.

mod equiv;
mod random;
mod simplify;
mod sim;
mod stats;
mod verilog;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use equiv::{check_equiv, Counterexample, EquivOptions, Verdict};
pub use random::{random_netlist, RandomNetlistSpec};
pub use sim::{from_signed, simulate, to_signed, LaneStimulus, Simulator, LANES};
pub use simplify::{simplify, simplify_with, SimplifyOptions};
pub use stats::{stats, NetlistStats};
pub use verilog::emit_verilog;

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("combinational cycle through cell {0}")]
    CombinationalCycle(usize),
    #[error("net {0} has more than one driver")]
    MultipleDrivers(NetId),
    #[error("net {0} is used but never driven")]
    Undriven(NetId),
    #[error("net {0} is out of range")]
    BadNet(NetId),
    #[error("cell {cell}: {kind} takes {expected} inputs, got {got}")]
    Arity {
        cell: usize,
        kind: CellKind,
        expected: usize,
        got: usize,
    },
    #[error("bus {0:?} is empty or wider than 64 bits")]
    BusWidth(String),
    #[error("duplicate bus name {0:?}")]
    DuplicateBus(String),
    #[error("stimulus has {got} input values per cycle, netlist has {expected} input buses")]
    UnassignedInput { expected: usize, got: usize },
    #[error("bus signatures differ: {0}")]
    SignatureMismatch(String),
    #[error("malformed netlist file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identifier of a single-bit net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetId(pub u32);

impl NetId {
    /// The constant-0 net.
    pub const ZERO: NetId = NetId(0);
    /// The constant-1 net.
    pub const ONE: NetId = NetId(1);

    pub fn constant(bit: bool) -> NetId {
        if bit {
            NetId::ONE
        } else {
            NetId::ZERO
        }
    }

    pub fn is_const(self) -> bool {
        self.0 < 2
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellKind {
    Inv,
    Buf,
    And2,
    Or2,
    Nand2,
    Nor2,
    Xor2,
    Xnor2,
    /// Inputs are `[data0, data1, select]`.
    Mux2,
}

impl CellKind {
    pub const ALL: [CellKind; 9] = [
        CellKind::Inv,
        CellKind::Buf,
        CellKind::And2,
        CellKind::Or2,
        CellKind::Nand2,
        CellKind::Nor2,
        CellKind::Xor2,
        CellKind::Xnor2,
        CellKind::Mux2,
    ];

    pub fn arity(self) -> usize {
        match self {
            CellKind::Inv | CellKind::Buf => 1,
            CellKind::Mux2 => 3,
            _ => 2,
        }
    }

    pub fn is_commutative(self) -> bool {
        self.arity() == 2
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Inv => "INV",
            CellKind::Buf => "BUF",
            CellKind::And2 => "AND2",
            CellKind::Or2 => "OR2",
            CellKind::Nand2 => "NAND2",
            CellKind::Nor2 => "NOR2",
            CellKind::Xor2 => "XOR2",
            CellKind::Xnor2 => "XNOR2",
            CellKind::Mux2 => "MUX2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Bitwise evaluation; works on one bit or 64 packed lanes alike.
    #[inline]
    pub fn eval(self, a: u64, b: u64, c: u64) -> u64 {
        match self {
            CellKind::Inv => !a,
            CellKind::Buf => a,
            CellKind::And2 => a & b,
            CellKind::Or2 => a | b,
            CellKind::Nand2 => !(a & b),
            CellKind::Nor2 => !(a | b),
            CellKind::Xor2 => a ^ b,
            CellKind::Xnor2 => !(a ^ b),
            CellKind::Mux2 => (a & !c) | (b & c),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per cell kind; keys are the lowercase kind names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindTable<T> {
    pub inv: T,
    pub buf: T,
    pub and2: T,
    pub or2: T,
    pub nand2: T,
    pub nor2: T,
    pub xor2: T,
    pub xnor2: T,
    pub mux2: T,
}

impl<T: Copy> KindTable<T> {
    pub fn uniform(v: T) -> Self {
        KindTable {
            inv: v,
            buf: v,
            and2: v,
            or2: v,
            nand2: v,
            nor2: v,
            xor2: v,
            xnor2: v,
            mux2: v,
        }
    }

    pub fn get(&self, kind: CellKind) -> T {
        match kind {
            CellKind::Inv => self.inv,
            CellKind::Buf => self.buf,
            CellKind::And2 => self.and2,
            CellKind::Or2 => self.or2,
            CellKind::Nand2 => self.nand2,
            CellKind::Nor2 => self.nor2,
            CellKind::Xor2 => self.xor2,
            CellKind::Xnor2 => self.xnor2,
            CellKind::Mux2 => self.mux2,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> KindTable<U> {
        KindTable {
            inv: f(self.inv),
            buf: f(self.buf),
            and2: f(self.and2),
            or2: f(self.or2),
            nand2: f(self.nand2),
            nor2: f(self.nor2),
            xor2: f(self.xor2),
            xnor2: f(self.xnor2),
            mux2: f(self.mux2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CellKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    /// Pipeline stage (network layer) that produced this cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
}

/// D flip-flop with synchronous reset to 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipFlop {
    pub d: NetId,
    pub q: NetId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
}

/// Named bus of nets, least significant bit first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub name: String,
    pub nets: Vec<NetId>,
}

impl Bus {
    pub fn width(&self) -> usize {
        self.nets.len()
    }
}

/// What drives a net.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Const(bool),
    Input { bus: usize, bit: usize },
    Cell(usize),
    Flop(usize),
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    net_count: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    net_names: Vec<(NetId, String)>,
    inputs: Vec<Bus>,
    outputs: Vec<Bus>,
    cells: Vec<Cell>,
    flops: Vec<FlipFlop>,
    /// Cycles between an input vector and the outputs it produces.
    #[serde(default)]
    latency: u32,
    #[serde(skip)]
    stage: Option<u32>,
}

impl Netlist {
    pub fn new() -> Self {
        Netlist {
            net_count: 2,
            ..Default::default()
        }
    }

    pub fn inputs(&self) -> &[Bus] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Bus] {
        &self.outputs
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn flops(&self) -> &[FlipFlop] {
        &self.flops
    }

    /// Total number of net ids, including the two constant nets.
    pub fn net_count(&self) -> usize {
        self.net_count as usize
    }

    pub fn latency(&self) -> u32 {
        self.latency
    }

    pub fn set_latency(&mut self, latency: u32) {
        self.latency = latency;
    }

    pub fn net_name(&self, net: NetId) -> Option<&str> {
        self.net_names
            .iter()
            .find(|(n, _)| *n == net)
            .map(|(_, s)| s.as_str())
    }

    pub fn set_net_name(&mut self, net: NetId, name: impl Into<String>) {
        self.net_names.retain(|(n, _)| *n != net);
        self.net_names.push((net, name.into()));
        self.net_names.sort();
    }

    /// Stage tag applied to cells and flops created from now on.
    pub fn set_stage(&mut self, stage: Option<u32>) {
        self.stage = stage;
    }

    pub fn input_bus(&self, name: &str) -> Option<&Bus> {
        self.inputs.iter().find(|b| b.name == name)
    }

    pub fn output_bus(&self, name: &str) -> Option<&Bus> {
        self.outputs.iter().find(|b| b.name == name)
    }

    fn fresh_net(&mut self) -> NetId {
        let id = NetId(self.net_count);
        self.net_count += 1;
        id
    }

    /// Add a primary input bus and return its nets, LSB first.
    pub fn add_input(&mut self, name: impl Into<String>, width: usize) -> Vec<NetId> {
        let name = name.into();
        assert!(
            (1..=64).contains(&width),
            "bus {name:?} must be 1..=64 bits wide"
        );
        assert!(self.input_bus(&name).is_none(), "duplicate input bus {name:?}");
        let nets: Vec<NetId> = (0..width).map(|_| self.fresh_net()).collect();
        self.inputs.push(Bus {
            name,
            nets: nets.clone(),
        });
        nets
    }

    pub fn add_output(&mut self, name: impl Into<String>, nets: Vec<NetId>) {
        let name = name.into();
        assert!(
            (1..=64).contains(&nets.len()),
            "bus {name:?} must be 1..=64 bits wide"
        );
        assert!(self.output_bus(&name).is_none(), "duplicate output bus {name:?}");
        debug_assert!(nets.iter().all(|n| n.0 < self.net_count));
        self.outputs.push(Bus { name, nets });
    }

    /// Append a cell whose inputs already exist. Cells added this way can
    /// never form a combinational cycle.
    pub fn add_cell(&mut self, kind: CellKind, inputs: &[NetId]) -> NetId {
        assert_eq!(inputs.len(), kind.arity(), "{kind} arity");
        debug_assert!(inputs.iter().all(|n| n.0 < self.net_count));
        let output = self.fresh_net();
        self.cells.push(Cell {
            kind,
            inputs: inputs.to_vec(),
            output,
            stage: self.stage,
        });
        output
    }

    pub fn add_flop(&mut self, d: NetId) -> NetId {
        debug_assert!(d.0 < self.net_count);
        let q = self.fresh_net();
        self.flops.push(FlipFlop {
            d,
            q,
            stage: self.stage,
        });
        q
    }

    /// Add a flop whose D is connected later with [`Netlist::connect_flop`];
    /// needed for feedback through registers. Returns `(flop index, q)`.
    pub fn add_flop_deferred(&mut self) -> (usize, NetId) {
        let q = self.add_flop(NetId::ZERO);
        (self.flops.len() - 1, q)
    }

    pub fn connect_flop(&mut self, flop: usize, d: NetId) {
        assert!(d.0 < self.net_count);
        self.flops[flop].d = d;
    }

    /// Driver of every net, indexed by net id.
    pub fn drivers(&self) -> Vec<Driver> {
        let mut drv = vec![Driver::None; self.net_count()];
        drv[0] = Driver::Const(false);
        drv[1] = Driver::Const(true);
        for (b, bus) in self.inputs.iter().enumerate() {
            for (bit, n) in bus.nets.iter().enumerate() {
                drv[n.index()] = Driver::Input { bus: b, bit };
            }
        }
        for (i, c) in self.cells.iter().enumerate() {
            drv[c.output.index()] = Driver::Cell(i);
        }
        for (i, f) in self.flops.iter().enumerate() {
            drv[f.q.index()] = Driver::Flop(i);
        }
        drv
    }

    /// Number of sinks (cell pins, flop D pins, output bits) per net.
    pub fn fanouts(&self) -> Vec<u32> {
        let mut fo = vec![0u32; self.net_count()];
        for c in &self.cells {
            for n in &c.inputs {
                fo[n.index()] += 1;
            }
        }
        for f in &self.flops {
            fo[f.d.index()] += 1;
        }
        for b in &self.outputs {
            for n in &b.nets {
                fo[n.index()] += 1;
            }
        }
        fo
    }

    /// Whether any cell or flop carries a stage tag.
    pub fn is_tagged(&self) -> bool {
        self.flops.iter().any(|f| f.stage.is_some())
    }

    /// Same input and output bus names and widths, in order.
    pub fn same_signature(&self, other: &Netlist) -> Result<(), NetlistError> {
        let sig = |buses: &[Bus]| -> Vec<(String, usize)> {
            buses.iter().map(|b| (b.name.clone(), b.width())).collect()
        };
        if sig(&self.inputs) != sig(&other.inputs) {
            return Err(NetlistError::SignatureMismatch(format!(
                "inputs {:?} vs {:?}",
                sig(&self.inputs),
                sig(&other.inputs)
            )));
        }
        if sig(&self.outputs) != sig(&other.outputs) {
            return Err(NetlistError::SignatureMismatch(format!(
                "outputs {:?} vs {:?}",
                sig(&self.outputs),
                sig(&other.outputs)
            )));
        }
        Ok(())
    }

    /// Assemble a netlist from raw parts, checking every invariant and
    /// putting cells into topological order.
    pub fn from_parts(
        net_count: u32,
        inputs: Vec<Bus>,
        outputs: Vec<Bus>,
        cells: Vec<Cell>,
        flops: Vec<FlipFlop>,
        latency: u32,
    ) -> Result<Self, NetlistError> {
        let mut n = Netlist {
            net_count,
            net_names: Vec::new(),
            inputs,
            outputs,
            cells,
            flops,
            latency,
            stage: None,
        };
        n.check_and_order()?;
        Ok(n)
    }

    fn check_and_order(&mut self) -> Result<(), NetlistError> {
        let count = self.net_count();
        if count < 2 {
            return Err(NetlistError::BadNet(NetId(0)));
        }
        let check = |n: NetId| {
            if n.index() < count {
                Ok(())
            } else {
                Err(NetlistError::BadNet(n))
            }
        };
        let mut driven = vec![false; count];
        driven[0] = true;
        driven[1] = true;
        let mut drive = |n: NetId| -> Result<(), NetlistError> {
            check(n)?;
            if std::mem::replace(&mut driven[n.index()], true) {
                return Err(NetlistError::MultipleDrivers(n));
            }
            Ok(())
        };
        let mut names = std::collections::HashSet::new();
        for bus in self.inputs.iter().chain(&self.outputs) {
            if bus.nets.is_empty() || bus.nets.len() > 64 {
                return Err(NetlistError::BusWidth(bus.name.clone()));
            }
        }
        for bus in &self.inputs {
            if !names.insert(("in", bus.name.clone())) {
                return Err(NetlistError::DuplicateBus(bus.name.clone()));
            }
            for &n in &bus.nets {
                drive(n)?;
            }
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.inputs.len() != c.kind.arity() {
                return Err(NetlistError::Arity {
                    cell: i,
                    kind: c.kind,
                    expected: c.kind.arity(),
                    got: c.inputs.len(),
                });
            }
            drive(c.output)?;
        }
        for f in &self.flops {
            drive(f.q)?;
        }
        let used = self
            .cells
            .iter()
            .flat_map(|c| c.inputs.iter())
            .chain(self.flops.iter().map(|f| &f.d))
            .chain(self.outputs.iter().flat_map(|b| b.nets.iter()));
        for &n in used {
            check(n)?;
            if !driven[n.index()] {
                return Err(NetlistError::Undriven(n));
            }
        }
        for bus in &self.outputs {
            if !names.insert(("out", bus.name.clone())) {
                return Err(NetlistError::DuplicateBus(bus.name.clone()));
            }
        }
        let order = topo_order(self)?;
        if order.iter().enumerate().any(|(i, &c)| i != c) {
            let mut cells = std::mem::take(&mut self.cells);
            let mut slots: Vec<Option<Cell>> = cells.drain(..).map(Some).collect();
            self.cells = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("netlist serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetlistError> {
        let mut n: Netlist = serde_json::from_str(text)?;
        n.check_and_order()?;
        Ok(n)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetlistError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetlistError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    #[cfg(test)]
    pub(crate) fn cells_mut(&mut self) -> &mut Vec<Cell> {
        &mut self.cells
    }

    /// Disjoint union: `other` is appended with its nets renumbered. Bus
    /// names must not clash.
    pub fn merge(&mut self, other: &Netlist) {
        let offset = self.net_count - 2;
        let map = |n: NetId| if n.is_const() { n } else { NetId(n.0 + offset) };
        self.net_count += other.net_count - 2;
        for b in &other.inputs {
            assert!(self.input_bus(&b.name).is_none(), "bus clash {:?}", b.name);
            self.inputs.push(Bus {
                name: b.name.clone(),
                nets: b.nets.iter().copied().map(map).collect(),
            });
        }
        for b in &other.outputs {
            assert!(self.output_bus(&b.name).is_none(), "bus clash {:?}", b.name);
            self.outputs.push(Bus {
                name: b.name.clone(),
                nets: b.nets.iter().copied().map(map).collect(),
            });
        }
        self.cells.extend(other.cells.iter().map(|c| Cell {
            kind: c.kind,
            inputs: c.inputs.iter().copied().map(map).collect(),
            output: map(c.output),
            stage: c.stage,
        }));
        self.flops.extend(other.flops.iter().map(|f| FlipFlop {
            d: map(f.d),
            q: map(f.q),
            stage: f.stage,
        }));
        self.latency = self.latency.max(other.latency);
    }

    /// Copy `block` into this netlist, wiring its input buses (in order) to
    /// `inputs`. Cells and flops take the current stage tag. Returns the
    /// nets of each output bus of the copy.
    pub fn instantiate(&mut self, block: &Netlist, inputs: &[&[NetId]]) -> Vec<Vec<NetId>> {
        assert_eq!(inputs.len(), block.inputs.len(), "input bus count");
        let mut map = vec![NetId::ZERO; block.net_count()];
        map[1] = NetId::ONE;
        for (bus, nets) in block.inputs.iter().zip(inputs) {
            assert_eq!(bus.width(), nets.len(), "width of bus {:?}", bus.name);
            for (o, n) in bus.nets.iter().zip(nets.iter()) {
                map[o.index()] = *n;
            }
        }
        let mut pending = Vec::with_capacity(block.flops.len());
        for f in &block.flops {
            let (i, q) = self.add_flop_deferred();
            map[f.q.index()] = q;
            pending.push((i, f.d));
        }
        let mut ins = Vec::with_capacity(3);
        for c in &block.cells {
            ins.clear();
            ins.extend(c.inputs.iter().map(|n| map[n.index()]));
            map[c.output.index()] = self.add_cell(c.kind, &ins);
        }
        for (i, d) in pending {
            self.connect_flop(i, map[d.index()]);
        }
        block
            .outputs
            .iter()
            .map(|b| b.nets.iter().map(|n| map[n.index()]).collect())
            .collect()
    }

    /// Largest number of flops on any input-to-output path, or `None` when
    /// the register graph has a cycle.
    pub fn register_depth(&self) -> Option<u32> {
        let drivers = self.drivers();
        // depth[net] = max flops from any source to this net
        let mut depth: Vec<Option<u32>> = vec![None; self.net_count()];
        for (i, d) in drivers.iter().enumerate() {
            if matches!(d, Driver::Const(_) | Driver::Input { .. }) {
                depth[i] = Some(0);
            }
        }
        // Relax over flops repeatedly; each round resolves one register level.
        let mut remaining: Vec<usize> = (0..self.flops.len()).collect();
        loop {
            for c in &self.cells {
                if c.inputs.iter().all(|n| depth[n.index()].is_some()) {
                    depth[c.output.index()] =
                        c.inputs.iter().map(|n| depth[n.index()].unwrap()).max();
                }
            }
            let before = remaining.len();
            remaining.retain(|&f| {
                let fl = &self.flops[f];
                match depth[fl.d.index()] {
                    Some(d) => {
                        depth[fl.q.index()] = Some(d + 1);
                        false
                    }
                    None => true,
                }
            });
            if remaining.is_empty() {
                for c in &self.cells {
                    depth[c.output.index()] =
                        c.inputs.iter().map(|n| depth[n.index()].unwrap()).max();
                }
                break;
            }
            if remaining.len() == before {
                return None;
            }
        }
        Some(
            self.outputs
                .iter()
                .flat_map(|b| b.nets.iter())
                .map(|n| depth[n.index()].unwrap_or(0))
                .max()
                .unwrap_or(0),
        )
    }
}

/// Cell indices in a topological order of combinational dependencies,
/// stable with respect to the stored order.
pub(crate) fn topo_order(n: &Netlist) -> Result<Vec<usize>, NetlistError> {
    let mut producer: Vec<Option<usize>> = vec![None; n.net_count()];
    for (i, c) in n.cells.iter().enumerate() {
        producer[c.output.index()] = Some(i);
    }
    let mut indeg = vec![0u32; n.cells.len()];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n.cells.len()];
    for (i, c) in n.cells.iter().enumerate() {
        for inp in &c.inputs {
            if let Some(p) = producer[inp.index()] {
                indeg[i] += 1;
                users[p].push(i);
            }
        }
    }
    // Min-heap on index keeps the result identical to the stored order
    // whenever that order is already topological.
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indeg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| std::cmp::Reverse(i))
        .collect();
    let mut order = Vec::with_capacity(n.cells.len());
    while let Some(std::cmp::Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(std::cmp::Reverse(u));
            }
        }
    }
    if order.len() != n.cells.len() {
        let stuck = (0..n.cells.len()).find(|&i| indeg[i] > 0).unwrap_or(0);
        return Err(NetlistError::CombinationalCycle(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_assigns_drivers() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 2);
        let a = n.add_cell(CellKind::And2, &[x[0], x[1]]);
        let q = n.add_flop(a);
        n.add_output("y", vec![q, NetId::ONE]);
        let d = n.drivers();
        assert_eq!(d[x[1].index()], Driver::Input { bus: 0, bit: 1 });
        assert_eq!(d[a.index()], Driver::Cell(0));
        assert_eq!(d[q.index()], Driver::Flop(0));
        assert_eq!(n.fanouts()[a.index()], 1);
        assert_eq!(n.register_depth(), Some(1));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut n = Netlist::new();
        let x = n.add_input("x", 3);
        let a = n.add_cell(CellKind::Mux2, &[x[0], x[1], x[2]]);
        n.set_net_name(a, "sel_out");
        n.add_output("y", vec![a]);
        let back = Netlist::from_json(&n.to_json()).unwrap();
        assert_eq!(back, n);
        assert_eq!(back.net_name(a), Some("sel_out"));

        let bad = n.to_json().replace("\"output\":5", "\"output\":2");
        assert!(Netlist::from_json(&bad).is_err());
    }

    #[test]
    fn from_parts_reorders_and_detects_cycles() {
        let bus = |name: &str, nets: Vec<u32>| Bus {
            name: name.into(),
            nets: nets.into_iter().map(NetId).collect(),
        };
        let cell = |kind, ins: Vec<u32>, out| Cell {
            kind,
            inputs: ins.into_iter().map(NetId).collect(),
            output: NetId(out),
            stage: None,
        };
        // cell 0 consumes the output of cell 1
        let n = Netlist::from_parts(
            5,
            vec![bus("x", vec![2])],
            vec![bus("y", vec![4])],
            vec![cell(CellKind::Inv, vec![3], 4), cell(CellKind::Inv, vec![2], 3)],
            vec![],
            0,
        )
        .unwrap();
        assert_eq!(n.cells()[0].output, NetId(3));

        let cyc = Netlist::from_parts(
            5,
            vec![bus("x", vec![2])],
            vec![bus("y", vec![4])],
            vec![cell(CellKind::Inv, vec![3], 4), cell(CellKind::Inv, vec![4], 3)],
            vec![],
            0,
        );
        assert!(matches!(cyc, Err(NetlistError::CombinationalCycle(_))));

        let undriven = Netlist::from_parts(
            5,
            vec![bus("x", vec![2])],
            vec![bus("y", vec![4])],
            vec![cell(CellKind::And2, vec![2, 3], 4)],
            vec![],
            0,
        );
        assert!(matches!(undriven, Err(NetlistError::Undriven(NetId(3)))));
    }

    #[test]
    fn instantiate_copies_a_block() {
        let mut blk = Netlist::new();
        let a = blk.add_input("a", 2);
        let t = blk.add_cell(CellKind::Xor2, &[a[0], a[1]]);
        let q = blk.add_flop(t);
        blk.add_output("y", vec![q, NetId::ONE]);
        let mut top = Netlist::new();
        let x = top.add_input("x", 2);
        top.set_stage(Some(3));
        let out = top.instantiate(&blk, &[&[x[1], x[0]]]);
        top.add_output("z", out[0].clone());
        assert_eq!(top.cells()[0].inputs, vec![x[1], x[0]]);
        assert_eq!(top.flops()[0].stage, Some(3));
        assert_eq!(out[0][1], NetId::ONE);
    }

    #[test]
    fn merge_renumbers() {
        let mut a = Netlist::new();
        let x = a.add_input("x", 1);
        let y = a.add_cell(CellKind::Inv, &[x[0]]);
        a.add_output("y", vec![y]);
        let mut b = Netlist::new();
        let u = b.add_input("u", 1);
        let v = b.add_cell(CellKind::Buf, &[u[0]]);
        b.add_output("v", vec![v, NetId::ZERO]);
        a.merge(&b);
        assert_eq!(a.net_count(), 6);
        assert_eq!(a.output_bus("v").unwrap().nets, vec![NetId(5), NetId::ZERO]);
        assert!(Netlist::from_json(&a.to_json()).is_ok());
    }
}
