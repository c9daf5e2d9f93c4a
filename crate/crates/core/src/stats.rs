//! Per-dimension moment sums that can be merged across parties.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSums {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl MomentSums {
    pub fn new(dim: usize) -> Self {
        MomentSums {
            count: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn push<T: Copy + Into<f64>>(&mut self, row: &[T]) {
        debug_assert_eq!(row.len(), self.dim());
        self.count += 1;
        for ((s, q), &v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(row) {
            let v: f64 = v.into();
            *s += v;
            *q += v * v;
        }
    }

    pub fn merge(&mut self, other: &MomentSums) {
        assert_eq!(self.dim(), other.dim(), "moment dimension mismatch");
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    /// Population mean and standard deviation per dimension.
    pub fn mean_std(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count.max(1) as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
            .collect();
        (mean, std)
    }
}

/// Z-score parameters. Dimensions with zero spread are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub const MIN_STD: f64 = 1e-12;

    pub fn from_moments(m: &MomentSums) -> Self {
        let (mean, std) = m.mean_std();
        Standardizer { mean, std }
    }

    #[inline]
    pub fn scale(&self, i: usize) -> f64 {
        if self.std[i] > Self::MIN_STD {
            self.std[i]
        } else {
            1.0
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i]) / self.scale(i))
            .collect()
    }

    pub fn apply_f32<T: Copy + Into<f64>>(&self, row: &[T]) -> Vec<f32> {
        row.iter()
            .enumerate()
            .map(|(i, &v)| ((v.into() - self.mean[i]) / self.scale(i)) as f32)
            .collect()
    }
}
