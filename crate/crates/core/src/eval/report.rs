//! Result rows, fold macro-averages and the banded summaries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::methods::Method;
use crate::error::{Error, Result};
use crate::model::MetricCounts;
use crate::synth::{FaultType, ScenarioConfig};

/// Held-out metrics of one (machine, fault) on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub fold: usize,
    pub machine_id: u32,
    pub fault: FaultType,
    pub group_id: u32,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ResultRow {
    pub fn new(
        method: Method,
        fold: usize,
        machine_id: u32,
        fault: FaultType,
        group_id: u32,
        c: MetricCounts,
    ) -> Self {
        let m = c.metrics();
        ResultRow {
            method,
            fold,
            machine_id,
            fault,
            group_id,
            f1: m.f1,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
        }
    }

    pub fn test_positives(&self) -> u64 {
        self.tp + self.fn_
    }
}

/// Fold macro-average of one (method, machine, fault). Folds whose test
/// records hold no positive of the fault are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub machine_id: u32,
    pub fault: FaultType,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub folds: usize,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut by: BTreeMap<(Method, u32, FaultType), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.test_positives() > 0) {
        by.entry((r.method, r.machine_id, r.fault))
            .or_default()
            .push(r);
    }
    by.into_iter()
        .map(|((method, machine_id, fault), rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                method,
                machine_id,
                fault,
                f1: mean(|r| r.f1),
                accuracy: mean(|r| r.accuracy),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                folds: rs.len(),
            }
        })
        .collect()
}

/// Mean F1 per method over all summary rows.
pub fn method_means(summary: &[SummaryRow]) -> BTreeMap<Method, f64> {
    mean_by(summary.iter().map(|r| (r.method, r.f1)))
}

/// Mean F1 per (method, fault).
pub fn fault_type_summary(summary: &[SummaryRow]) -> BTreeMap<(Method, FaultType), f64> {
    mean_by(summary.iter().map(|r| ((r.method, r.fault), r.f1)))
}

fn mean_by<K: Ord>(items: impl Iterator<Item = (K, f64)>) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (k, v) in items {
        let e = acc.entry(k).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

/// Fault-rate bands, as upper bounds in fractions: 0-5%, 5-15%, 15-30%,
/// 30-50%, above 50%.
pub const RATE_BANDS: [(&str, f64, f64); 5] = [
    ("0-5%", 0.0, 0.05),
    ("5-15%", 0.05, 0.15),
    ("15-30%", 0.15, 0.30),
    ("30-50%", 0.30, 0.50),
    (">50%", 0.50, 1.0),
];

/// Band label of a fault rate; lower bounds are exclusive except for zero.
pub fn rate_band(rate: f64) -> &'static str {
    RATE_BANDS
        .iter()
        .find(|(_, lo, hi)| rate > *lo && rate <= *hi)
        .map_or(RATE_BANDS[0].0, |b| b.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub method: Method,
    pub band: String,
    pub f1: f64,
    pub rows: usize,
}

/// Mean F1 per (method, rate band); bands without rows are omitted.
pub fn fault_rate_bands(summary: &[SummaryRow], scenario: &ScenarioConfig) -> Vec<BandRow> {
    let mut acc: BTreeMap<(Method, usize), (f64, usize)> = BTreeMap::new();
    for r in summary {
        let Some(spec) = scenario.machine(r.machine_id) else {
            continue;
        };
        let label = rate_band(spec.rate(r.fault));
        let b = RATE_BANDS.iter().position(|x| x.0 == label).unwrap();
        let e = acc.entry((r.method, b)).or_default();
        e.0 += r.f1;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((method, b), (s, n))| BandRow {
            method,
            band: RATE_BANDS[b].0.to_string(),
            f1: s / n as f64,
            rows: n,
        })
        .collect()
}

/// SHA-256 of the compact JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in summary {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Machine x fault rows with one F1 column per method.
pub fn write_comparison(path: &Path, summary: &[SummaryRow], methods: &[Method]) -> Result<()> {
    let mut table: BTreeMap<(u32, FaultType), BTreeMap<Method, f64>> = BTreeMap::new();
    for r in summary {
        table
            .entry((r.machine_id, r.fault))
            .or_default()
            .insert(r.method, r.f1);
    }
    let mut w = writer(path)?;
    let mut header = vec!["machine_id".to_string(), "fault".to_string()];
    header.extend(methods.iter().map(|m| m.name().to_string()));
    w.write_record(&header)?;
    for ((m, f), vals) in table {
        let mut rec = vec![m.to_string(), f.name().to_string()];
        rec.extend(
            methods
                .iter()
                .map(|meth| vals.get(meth).map_or(String::new(), |v| format!("{v:.6}"))),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_fault_types(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "fault", "f1"])?;
    for ((m, f), v) in fault_type_summary(summary) {
        w.write_record([m.name(), f.name(), &format!("{v:.6}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_bands(path: &Path, bands: &[BandRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "band", "f1", "rows"])?;
    for b in bands {
        w.write_record([
            b.method.name(),
            &b.band,
            &format!("{:.6}", b.f1),
            &b.rows.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
