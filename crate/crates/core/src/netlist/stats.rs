//! Structural summary of a netlist.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Driver, Netlist};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistStats {
    pub cells: usize,
    /// Keyed by cell kind name; kinds with no instances are omitted.
    pub cells_by_kind: BTreeMap<String, usize>,
    pub flops: usize,
    /// Nets excluding the two constants.
    pub nets: usize,
    /// Longest combinational path, in cells.
    pub depth: usize,
}

pub fn stats(n: &Netlist) -> NetlistStats {
    let mut by_kind = BTreeMap::new();
    for c in n.cells() {
        *by_kind.entry(c.kind.name().to_string()).or_insert(0) += 1;
    }
    NetlistStats {
        cells: n.cells().len(),
        cells_by_kind: by_kind,
        flops: n.flops().len(),
        nets: n.net_count().saturating_sub(2),
        depth: logic_depth(n),
    }
}

/// Cells are stored in topological order, so one forward sweep suffices.
fn logic_depth(n: &Netlist) -> usize {
    let drivers = n.drivers();
    let mut depth = vec![0usize; n.net_count()];
    let mut max = 0;
    for c in n.cells() {
        let d = 1 + c
            .inputs
            .iter()
            .map(|i| match drivers[i.index()] {
                Driver::Cell(_) => depth[i.index()],
                _ => 0,
            })
            .max()
            .unwrap_or(0);
        depth[c.output.index()] = d;
        max = max.max(d);
    }
    max
}
