//! Area of the simplified constant multiplier for every int8 weight.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_area, CostModel};
use crate::synth::gen_const_mult;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightAreaEntry {
    pub weight: i8,
    pub area: u64,
    /// Position in the ranking, 0 = cheapest.
    pub rank: usize,
}

/// Multiplier area per weight at 8-bit input width, with a total order:
/// ascending area, then ascending `|w|`, then negative first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightAreaTable {
    /// Indexed by `w + 128`.
    entries: Vec<WeightAreaEntry>,
    ranking: Vec<i8>,
}

/// Build all 256 constant multipliers and measure them.
pub fn rank_weight_areas(cost: &CostModel) -> WeightAreaTable {
    let areas: Vec<u64> = (-128i64..=127)
        .into_par_iter()
        .map(|w| estimate_area(&gen_const_mult(w, 8), cost))
        .collect();
    WeightAreaTable::from_areas(&areas)
}

impl WeightAreaTable {
    /// `areas[w + 128]` is the area of weight `w`.
    pub fn from_areas(areas: &[u64]) -> Self {
        assert_eq!(areas.len(), 256);
        let mut ranking: Vec<i8> = (-128i16..=127).map(|w| w as i8).collect();
        ranking.sort_by_key(|&w| (areas[idx(w)], (w as i16).abs(), w));
        let mut entries: Vec<WeightAreaEntry> = (-128i16..=127)
            .map(|w| WeightAreaEntry {
                weight: w as i8,
                area: areas[idx(w as i8)],
                rank: 0,
            })
            .collect();
        for (r, &w) in ranking.iter().enumerate() {
            entries[idx(w)].rank = r;
        }
        WeightAreaTable { entries, ranking }
    }

    pub fn area(&self, w: i8) -> u64 {
        self.entries[idx(w)].area
    }

    pub fn rank(&self, w: i8) -> usize {
        self.entries[idx(w)].rank
    }

    /// Weights from cheapest to most expensive.
    pub fn ranking(&self) -> &[i8] {
        &self.ranking
    }

    pub fn entries(&self) -> &[WeightAreaEntry] {
        &self.entries
    }

    /// The `n` cheapest weights, always including 0.
    pub fn select_top_n(&self, n: usize) -> WeightSet {
        assert!((1..=256).contains(&n), "set size {n} out of range");
        let mut chosen: Vec<i8> = self.ranking[..n].to_vec();
        if !chosen.contains(&0) {
            chosen.pop();
            chosen.push(0);
        }
        WeightSet::new(chosen, self)
    }

    /// CSV with columns weight, area, rank, rows in ranking order.
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["weight", "area", "rank"])?;
        for &wt in &self.ranking {
            let e = &self.entries[idx(wt)];
            wr.write_record(&[
                e.weight.to_string(),
                e.area.to_string(),
                e.rank.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(r: impl std::io::Read) -> csv::Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut areas = vec![u64::MAX; 256];
        for rec in rd.records() {
            let rec = rec?;
            let w: i8 = rec[0].trim().parse().map_err(bad)?;
            areas[idx(w)] = rec[1].trim().parse().map_err(bad)?;
        }
        if areas.contains(&u64::MAX) {
            return Err(bad("table does not cover all 256 weights"));
        }
        Ok(Self::from_areas(&areas))
    }
}

fn bad(e: impl ToString) -> csv::Error {
    csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

fn idx(w: i8) -> usize {
    (w as i16 + 128) as usize
}

/// A set of allowed weight values with their multiplier areas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightSet {
    /// Ascending.
    weights: Vec<i8>,
    areas: Vec<u64>,
}

impl WeightSet {
    pub fn new(mut weights: Vec<i8>, table: &WeightAreaTable) -> Self {
        weights.sort_unstable();
        weights.dedup();
        assert!(!weights.is_empty(), "empty weight set");
        let areas = weights.iter().map(|&w| table.area(w)).collect();
        WeightSet { weights, areas }
    }

    pub fn all(table: &WeightAreaTable) -> Self {
        Self::new((-128i16..=127).map(|w| w as i8).collect(), table)
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn contains(&self, w: i8) -> bool {
        self.weights.binary_search(&w).is_ok()
    }

    pub fn is_subset(&self, other: &WeightSet) -> bool {
        self.weights.iter().all(|&w| other.contains(w))
    }

    /// Closest member to `v` (in units of the weight scale). Ties go to the
    /// member with the smaller multiplier area, then the smaller `|s|`.
    pub fn project(&self, v: f64) -> i8 {
        let mut best = 0;
        let mut key = (f64::INFINITY, u64::MAX, i16::MAX);
        for (i, (&s, &a)) in self.weights.iter().zip(&self.areas).enumerate() {
            let k = ((v - s as f64).abs(), a, (s as i16).abs());
            if k.0 < key.0 || (k.0 == key.0 && (k.1, k.2) < (key.1, key.2)) {
                key = k;
                best = i;
            }
        }
        self.weights[best]
    }
}
