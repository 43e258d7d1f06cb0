use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// What produced a report: seed, dimensions and content hashes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    pub k: usize,
    pub d_s: usize,
    pub d_g: usize,
    pub d_w: usize,
    pub vocab: usize,
    pub config_sha256: String,
    pub checkpoint_sha256: Option<String>,
}

impl Fingerprint {
    pub fn new(seed: u64, model: &ModelConfig, config_sha256: String, checkpoint_sha256: Option<String>) -> Self {
        Fingerprint {
            seed,
            k: model.k,
            d_s: model.d_s,
            d_g: model.d_g,
            d_w: model.d_w,
            vocab: model.vocab,
            config_sha256,
            checkpoint_sha256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub id: String,
    pub scores: BTreeMap<String, f64>,
}

/// Evaluation output. Keys serialize in a fixed order: struct fields in
/// declaration order, score maps sorted by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub fingerprint: Fingerprint,
    pub aggregate: BTreeMap<String, f64>,
    pub items: Vec<ItemScores>,
    /// Free-form remarks, e.g. the λ = 0 contrast.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn new(task: &str, fingerprint: Fingerprint) -> Self {
        MetricReport {
            task: task.to_string(),
            fingerprint,
            aggregate: BTreeMap::new(),
            items: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_item(&mut self, id: impl Into<String>, scores: &[(&str, f64)]) {
        self.items.push(ItemScores {
            id: id.into(),
            scores: scores.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        });
    }

    /// Mean of per-item score `name`.
    pub fn item_mean(&self, name: &str) -> Option<f64> {
        let vals: Vec<f64> = self.items.iter().filter_map(|i| i.scores.get(name).copied()).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Sets each aggregate in `names` to the mean of its per-item scores.
    pub fn aggregate_means(&mut self, names: &[&str]) {
        for &n in names {
            if let Some(m) = self.item_mean(n) {
                self.aggregate.insert(n.to_string(), m);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per item, then one `aggregate` row. Columns are the union of
    /// item and aggregate score names, sorted.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<&String> = self
            .items
            .iter()
            .flat_map(|i| i.scores.keys())
            .chain(self.aggregate.keys())
            .collect();
        cols.sort();
        cols.dedup();
        let mut out = String::from("item");
        for c in &cols {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        let mut row = |id: &str, m: &BTreeMap<String, f64>| {
            out.push_str(id);
            for c in &cols {
                out.push(',');
                if let Some(v) = m.get(*c) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        };
        for i in &self.items {
            row(&i.id, &i.scores);
        }
        row("aggregate", &self.aggregate);
        out
    }

    /// Writes `<task>.json` and `<task>.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{}.json", self.task));
        let csv = dir.join(format!("{}.csv", self.task));
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok((json, csv))
    }
}
