//! Integer datasets and their CSV form.
//!
//! CSV layout: a header row, one column per feature, the target in the last
//! column, and an optional `split` column (`train`, `val` or `test`)
//! anywhere. Integer features in `[-128, 127]` are taken as-is; anything
//! else is read as real values and quantized with one global scale. Without
//! a `split` column, rows are assigned by index: 14 of every 20 rows train,
//! 3 validate, 3 test.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "val" | "valid" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub(crate) fn by_index(i: usize) -> Split {
        match i % 20 {
            0..=13 => Split::Train,
            14..=16 => Split::Val,
            _ => Split::Test,
        }
    }
}

/// One labelled input vector. Class labels are stored as integral targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<i8>,
    pub target: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Real value of one input LSB.
    pub input_scale: f64,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, input_scale: f64) -> Result<Self, ModelError> {
        let ds = Dataset {
            samples,
            input_scale,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let Some(first) = self.samples.first() else {
            return Err(ModelError::Dataset("no samples".into()));
        };
        let n = first.input.len();
        if n == 0 {
            return Err(ModelError::Dataset("samples have no features".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| s.input.len() != n) {
            return Err(ModelError::Dataset(format!(
                "row {i} has {} features, expected {n}",
                self.samples[i].input.len()
            )));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(ModelError::Dataset("input scale must be positive".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.input.len())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Number of classes implied by integral targets (max label + 1).
    pub fn num_classes(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.target.max(0.0) as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ModelError::Dataset(e.to_string()))?
            .clone();
        let split_col = headers.iter().position(|h| h.trim() == "split");
        let value_cols: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != split_col).collect();
        if value_cols.len() < 2 {
            return Err(ModelError::Dataset(
                "need at least one feature column and a target column".into(),
            ));
        }
        let (feature_cols, target_col) = value_cols.split_at(value_cols.len() - 1);
        let target_col = target_col[0];

        let mut raw: Vec<(Vec<f64>, f64, Split)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ModelError::Dataset(e.to_string()))?;
            let num = |c: usize| -> Result<f64, ModelError> {
                let cell = rec.get(c).unwrap_or("").trim();
                cell.parse::<f64>().map_err(|_| {
                    ModelError::Dataset(format!("row {}: column {c}: bad number {cell:?}", i + 1))
                })
            };
            let features = feature_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
            let split = match split_col {
                Some(c) => {
                    let cell = rec.get(c).unwrap_or("");
                    Split::parse(cell).ok_or_else(|| {
                        ModelError::Dataset(format!("row {}: unknown split {cell:?}", i + 1))
                    })?
                }
                None => Split::by_index(i),
            };
            raw.push((features, num(target_col)?, split));
        }

        let integral = raw.iter().flat_map(|r| r.0.iter()).all(|&v| {
            v.fract() == 0.0 && (-128.0..=127.0).contains(&v)
        });
        let (scale, input_scale) = if integral {
            (1.0, 1.0 / 128.0)
        } else {
            let max = raw
                .iter()
                .flat_map(|r| r.0.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let s = if max > 0.0 { max / 127.0 } else { 1.0 };
            (s, s)
        };
        let samples = raw
            .into_iter()
            .map(|(f, target, split)| Sample {
                input: f
                    .iter()
                    .map(|v| (v / scale).round().clamp(-128.0, 127.0) as i8)
                    .collect(),
                target,
                split,
            })
            .collect();
        Dataset::new(samples, input_scale)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Write the integer form with an explicit `split` column.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| ModelError::Dataset(e.to_string());
        let mut header: Vec<String> = (0..self.features()).map(|i| format!("f{i}")).collect();
        header.push("target".into());
        header.push("split".into());
        w.write_record(&header).map_err(to_err)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.input.iter().map(|v| v.to_string()).collect();
            row.push(s.target.to_string());
            row.push(s.split.as_str().into());
            w.write_record(&row).map_err(to_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
