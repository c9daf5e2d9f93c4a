//! Adaptive sensitive-cost loss.

use serde::{Deserialize, Serialize};

use super::metrics::MetricCounts;
use crate::error::{Error, Result};

/// Floor applied to F1 scores before any division by them.
pub const F1_FLOOR: f64 = 0.05;

/// Per-task F1 of the last epoch and positive rate of the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub f: Vec<f64>,
    pub r: Vec<f64>,
}

impl TaskState {
    /// Neutral start: every f is 1.
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(bad) = r.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::Domain(format!("fault rate {bad} outside [0, 1)")));
        }
        Ok(TaskState {
            f: vec![1.0; r.len()],
            r,
        })
    }

    /// Rates measured on the training labels.
    pub fn from_labels<L: AsRef<[u8]>>(labels: &[L], n_tasks: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data(
                "cannot derive fault rates from zero samples".into(),
            ));
        }
        let mut pos = vec![0usize; n_tasks];
        for l in labels {
            for (p, &v) in pos.iter_mut().zip(l.as_ref()) {
                *p += (v != 0) as usize;
            }
        }
        let n = labels.len() as f64;
        // A partition made only of positives would give r = 1; keep it just below.
        Self::new(
            pos.iter()
                .map(|&p| (p as f64 / n).min(1.0 - 1e-9))
                .collect(),
        )
    }

    pub fn n_tasks(&self) -> usize {
        self.f.len()
    }

    /// Refreshes f from epoch counts. Tasks without positives keep their value,
    /// since their F1 is undefined rather than poor.
    pub fn update(&mut self, counts: &[MetricCounts]) {
        for (f, c) in self.f.iter_mut().zip(counts) {
            if c.positives() > 0 {
                *f = c.metrics().f1;
            }
        }
    }
}

/// `T_i = sum_j f_j / f_i` on floored scores.
pub fn sensitive_coefficients(state: &TaskState) -> Vec<f64> {
    let f: Vec<f64> = state.f.iter().map(|v| v.max(F1_FLOOR)).collect();
    let total: f64 = f.iter().sum();
    f.iter().map(|v| total / v).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub total: f64,
    /// Per-element weights, n x N.
    pub weights: Vec<Vec<f64>>,
    /// dL/dy, n x N.
    pub grad: Vec<Vec<f64>>,
}

/// `L = sum (y - l)^2 C` with `C = (l (1 - r) + 1) T`, treating C as constant.
pub fn adaptive_loss<Y: AsRef<[f64]>, L: AsRef<[u8]>>(
    outputs: &[Y],
    labels: &[L],
    state: &TaskState,
) -> Result<LossOutput> {
    if outputs.len() != labels.len() {
        return Err(Error::Size(format!(
            "{} outputs vs {} label rows",
            outputs.len(),
            labels.len()
        )));
    }
    if let Some(bad) = state.r.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return Err(Error::Domain(format!("fault rate {bad} outside [0, 1)")));
    }
    let t = sensitive_coefficients(state);
    let n_tasks = t.len();
    let mut out = LossOutput {
        total: 0.0,
        weights: Vec::with_capacity(outputs.len()),
        grad: Vec::with_capacity(outputs.len()),
    };
    for (y, l) in outputs.iter().zip(labels) {
        let (y, l) = (y.as_ref(), l.as_ref());
        if y.len() != n_tasks || l.len() != n_tasks {
            return Err(Error::Size(format!(
                "row has {} outputs, {} labels, {n_tasks} tasks",
                y.len(),
                l.len()
            )));
        }
        let mut w = Vec::with_capacity(n_tasks);
        let mut g = Vec::with_capacity(n_tasks);
        for i in 0..n_tasks {
            let li = l[i] as f64;
            let c = (li * (1.0 - state.r[i]) + 1.0) * t[i];
            let d = y[i] - li;
            out.total += d * d * c;
            w.push(c);
            g.push(2.0 * d * c);
        }
        out.weights.push(w);
        out.grad.push(g);
    }
    Ok(out)
}
