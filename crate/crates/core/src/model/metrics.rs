//! Threshold metrics per task.

use serde::{Deserialize, Serialize};

pub const THRESHOLD: f64 = 0.5;

/// Confusion counts of one task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricCounts {
    pub fn push(&mut self, prob: f64, label: u8, threshold: f64) {
        match (prob > threshold, label != 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn add(&mut self, other: &MetricCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Zero conventions: empty denominators give 0.
    pub fn metrics(&self) -> TaskMetrics {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        TaskMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

/// Per-task counts over `preds` (n x N) against `labels` (n x N).
pub fn metric_counts<P: AsRef<[f64]>, L: AsRef<[u8]>>(
    preds: &[P],
    labels: &[L],
    threshold: f64,
) -> Vec<MetricCounts> {
    let n_tasks = labels.first().map_or(0, |l| l.as_ref().len());
    let mut counts = vec![MetricCounts::default(); n_tasks];
    for (p, l) in preds.iter().zip(labels) {
        for ((c, &pv), &lv) in counts.iter_mut().zip(p.as_ref()).zip(l.as_ref()) {
            c.push(pv, lv, threshold);
        }
    }
    counts
}

pub fn metrics<P: AsRef<[f64]>, L: AsRef<[u8]>>(
    preds: &[P],
    labels: &[L],
    threshold: f64,
) -> Vec<(TaskMetrics, MetricCounts)> {
    metric_counts(preds, labels, threshold)
        .into_iter()
        .map(|c| (c.metrics(), c))
        .collect()
}

/// Mean F1 over tasks that have at least one positive; `None` if none do.
pub fn mean_f1_with_positives(counts: &[MetricCounts]) -> Option<f64> {
    let f: Vec<f64> = counts
        .iter()
        .filter(|c| c.positives() > 0)
        .map(|c| c.metrics().f1)
        .collect();
    (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
}
