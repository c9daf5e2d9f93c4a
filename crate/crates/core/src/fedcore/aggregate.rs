//! Adaptive aggregation weights and weighted parameter averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::F1_FLOOR;
use crate::nn::ParamSet;

/// How uploads are weighted when averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Lower-F1 agents weigh more.
    Adaptive,
    /// Plain FedAvg.
    Uniform,
}

/// `c_k = sum_m F_m / F_k^2` on floored scores.
pub fn adaptive_weights(f1: &[f64]) -> Vec<f64> {
    let f: Vec<f64> = f1.iter().map(|v| v.max(F1_FLOOR)).collect();
    let total: f64 = f.iter().sum();
    f.iter().map(|v| total / (v * v)).collect()
}

pub fn weights(f1: &[f64], scheme: Weighting) -> Vec<f64> {
    match scheme {
        Weighting::Adaptive => adaptive_weights(f1),
        Weighting::Uniform => vec![1.0; f1.len()],
    }
}

pub fn normalized(c: &[f64]) -> Vec<f64> {
    let total: f64 = c.iter().sum();
    c.iter().map(|v| v / total).collect()
}

/// `sum_k a_k c_k / sum_k c_k`, accumulated in f64.
pub fn aggregate(sets: &[&ParamSet<f32>], c: &[f64]) -> Result<ParamSet<f32>> {
    let first = *sets
        .first()
        .ok_or_else(|| Error::Protocol("nothing to aggregate".into()))?;
    if sets.len() != c.len() {
        return Err(Error::Protocol(format!(
            "{} parameter sets but {} weights",
            sets.len(),
            c.len()
        )));
    }
    if c.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Protocol(
            "aggregation weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        return Err(Error::Protocol("aggregation weights are all zero".into()));
    }
    for s in &sets[1..] {
        first.ensure_same_structure(s, "aggregate")?;
    }
    let mut out = first.clone();
    for (a, arr) in out.arrays.iter_mut().enumerate() {
        for (i, v) in arr.values.iter_mut().enumerate() {
            let acc: f64 = sets
                .iter()
                .zip(c)
                .map(|(s, &w)| s.arrays[a].values[i] as f64 * w)
                .sum();
            *v = (acc / total) as f32;
        }
    }
    Ok(out)
}
