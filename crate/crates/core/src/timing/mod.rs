//! Static timing analysis, pipeline-stage insertion and minimum-period
//! retiming under a per-kind unit delay model.
//!
//! Primary inputs are treated as launched by a flop and primary outputs as
//! captured by one, so every path pays `clk_to_q + setup`.

mod retime;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{Driver, FlipFlop, KindTable, NetId, Netlist, NetlistError};

pub use retime::{retime, retime_to_period, RetimingResult};

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("netlist has no stage tags; pipeline stages can only be added to compiled networks")]
    Untagged,
    #[error("flop {0} is part of a loop that contains no logic")]
    RegisterCycle(usize),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    pub delay: KindTable<u32>,
    pub clk_to_q: u32,
    pub setup: u32,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            delay: KindTable::uniform(1),
            clk_to_q: 3,
            setup: 1,
        }
    }
}

impl TimingModel {
    /// Period for a longest combinational delay of `comb`.
    pub fn period_for(&self, comb: u32) -> u32 {
        self.clk_to_q + comb + self.setup
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaReport {
    pub period: u32,
    /// Longest combinational delay.
    pub comb_delay: u32,
    /// Cell indices along one longest path, source first.
    pub critical_path: Vec<usize>,
}

/// Minimum clock period. Paths end at flop D pins, primary outputs and
/// cell outputs that drive nothing.
pub fn sta_min_period(n: &Netlist, t: &TimingModel) -> Result<StaReport, NetlistError> {
    let order = crate::netlist::topo_order(n)?;
    let drivers = n.drivers();
    let mut arrival = vec![0u32; n.net_count()];
    let mut pred: Vec<Option<usize>> = vec![None; n.cells().len()];
    for &i in &order {
        let c = &n.cells()[i];
        let mut best = 0;
        for inp in &c.inputs {
            if let Driver::Cell(j) = drivers[inp.index()] {
                let a = arrival[inp.index()];
                if pred[i].is_none() || a > best {
                    best = a;
                    pred[i] = Some(j);
                }
            }
        }
        arrival[c.output.index()] = best + t.delay.get(c.kind);
    }
    let fanouts = n.fanouts();
    let endpoints = n
        .flops()
        .iter()
        .map(|f| f.d)
        .chain(n.outputs().iter().flat_map(|b| b.nets.iter().copied()))
        .chain(n.cells().iter().filter(|c| fanouts[c.output.index()] == 0).map(|c| c.output));
    let mut worst: Option<NetId> = None;
    for e in endpoints {
        if worst.is_none_or(|w| arrival[e.index()] > arrival[w.index()]) {
            worst = Some(e);
        }
    }
    let comb = worst.map_or(0, |w| arrival[w.index()]);
    let mut path = Vec::new();
    if let Some(Driver::Cell(mut i)) = worst.map(|w| drivers[w.index()]) {
        path.push(i);
        while let Some(p) = pred[i] {
            path.push(p);
            i = p;
        }
        path.reverse();
    }
    Ok(StaReport {
        period: t.period_for(comb),
        comb_delay: comb,
        critical_path: path,
    })
}

/// Append `k` flop ranks after every stage-tagged flop. All consumers of a
/// tagged flop move to the end of its new chain, so latency grows by `k`
/// per distinct stage.
pub fn insert_pipeline_stages(n: &Netlist, k: usize) -> Result<Netlist, TimingError> {
    if !n.is_tagged() {
        return Err(TimingError::Untagged);
    }
    if k == 0 {
        return Ok(n.clone());
    }
    let mut next_net = n.net_count() as u32;
    let mut redirect: Vec<NetId> = (0..n.net_count() as u32).map(NetId).collect();
    let mut flops: Vec<FlipFlop> = Vec::with_capacity(n.flops().len() * (k + 1));
    // chain flops read their own predecessor; only original D pins move
    let mut is_chain: Vec<bool> = Vec::with_capacity(flops.capacity());
    let mut stages = std::collections::BTreeSet::new();
    for f in n.flops() {
        flops.push(f.clone());
        is_chain.push(false);
        let Some(stage) = f.stage else { continue };
        stages.insert(stage);
        let mut q = f.q;
        for _ in 0..k {
            let nq = NetId(next_net);
            next_net += 1;
            flops.push(FlipFlop {
                d: q,
                q: nq,
                stage: Some(stage),
            });
            is_chain.push(true);
            q = nq;
        }
        redirect[f.q.index()] = q;
    }
    for (f, &chain) in flops.iter_mut().zip(&is_chain) {
        if !chain {
            f.d = redirect[f.d.index()];
        }
    }
    let mut cells = n.cells().to_vec();
    for c in &mut cells {
        for i in &mut c.inputs {
            *i = redirect[i.index()];
        }
    }
    let mut outputs = n.outputs().to_vec();
    for b in &mut outputs {
        for x in &mut b.nets {
            *x = redirect[x.index()];
        }
    }
    let latency = n.latency() + (k * stages.len()) as u32;
    let mut out = Netlist::from_parts(next_net, n.inputs().to_vec(), outputs, cells, flops, latency)?;
    for b in n.inputs() {
        for &x in &b.nets {
            if let Some(name) = n.net_name(x) {
                out.set_net_name(x, name);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub k: usize,
    pub period: u32,
    pub flops: usize,
}

/// Insert `k` extra ranks and retime, for `k = 0..=max_k`.
pub fn explore_stages(
    n: &Netlist,
    t: &TimingModel,
    max_k: usize,
) -> Result<Vec<StageRow>, TimingError> {
    (0..=max_k)
        .map(|k| {
            let staged = insert_pipeline_stages(n, k)?;
            let r = retime(&staged, t)?;
            Ok(StageRow {
                k,
                period: r.period,
                flops: r.netlist.flops().len(),
            })
        })
        .collect()
}

pub fn write_stage_csv(rows: &[StageRow], w: impl Write) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "period", "flops"])?;
    for r in rows {
        wr.write_record(&[r.k.to_string(), r.period.to_string(), r.flops.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_stage_csv(rows: &[StageRow], path: impl AsRef<Path>) -> csv::Result<()> {
    write_stage_csv(rows, std::fs::File::create(path)?)
}
