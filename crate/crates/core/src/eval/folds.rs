//! Stratified k-fold plans per machine.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::synth::Dataset;

/// Fold id of every record, per machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: usize,
    pub assignment: BTreeMap<u32, Vec<u8>>,
}

impl FoldPlan {
    pub fn test_indices(&self, machine_id: u32, fold: usize) -> Vec<usize> {
        self.indices(machine_id, |f| f == fold)
    }

    pub fn train_indices(&self, machine_id: u32, fold: usize) -> Vec<usize> {
        self.indices(machine_id, |f| f != fold)
    }

    fn indices(&self, machine_id: u32, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignment
            .get(&machine_id)
            .map(|a| (0..a.len()).filter(|&i| keep(a[i] as usize)).collect())
            .unwrap_or_default()
    }
}

/// Deals positives fault by fault, rarest first, each to the fold holding the
/// fewest positives of that fault; the remaining records even out fold sizes.
pub fn stratify(labels: &[Vec<u8>], folds: usize, seed: u64) -> Vec<u8> {
    let n_tasks = labels.first().map_or(0, Vec::len);
    let mut fold_of: Vec<Option<u8>> = vec![None; labels.len()];
    let mut size = vec![0usize; folds];
    let mut pos = vec![vec![0usize; n_tasks]; folds];
    let mut rng = seed::rng(seed, &[stream::FOLDS]);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);

    let mut tasks: Vec<usize> = (0..n_tasks).collect();
    let prevalence = |t: usize| labels.iter().filter(|l| l[t] != 0).count();
    tasks.sort_by_key(|&t| (prevalence(t), t));

    let assign = |i: usize,
                  f: usize,
                  fold_of: &mut Vec<Option<u8>>,
                  size: &mut Vec<usize>,
                  pos: &mut Vec<Vec<usize>>| {
        fold_of[i] = Some(f as u8);
        size[f] += 1;
        for (t, &v) in labels[i].iter().enumerate() {
            pos[f][t] += (v != 0) as usize;
        }
    };
    for &t in tasks.iter().filter(|&&t| prevalence(t) > 0) {
        for &i in &order {
            if fold_of[i].is_none() && labels[i][t] != 0 {
                let f = (0..folds).min_by_key(|&f| (pos[f][t], size[f], f)).unwrap();
                assign(i, f, &mut fold_of, &mut size, &mut pos);
            }
        }
    }
    for &i in &order {
        if fold_of[i].is_none() {
            let f = (0..folds).min_by_key(|&f| (size[f], f)).unwrap();
            assign(i, f, &mut fold_of, &mut size, &mut pos);
        }
    }
    fold_of.into_iter().map(|f| f.unwrap()).collect()
}

pub fn make_folds(dataset: &Dataset, folds: usize, seed: u64) -> Result<FoldPlan> {
    if !(2..=255).contains(&folds) {
        return Err(Error::Config(format!(
            "fold count must be in [2, 255], got {folds}"
        )));
    }
    let mut assignment = BTreeMap::new();
    for (&id, records) in dataset {
        if records.len() < folds {
            return Err(Error::Data(format!(
                "machine {id} has {} records, fewer than {folds} folds",
                records.len()
            )));
        }
        let labels: Vec<Vec<u8>> = records.iter().map(|r| r.labels.clone()).collect();
        assignment.insert(
            id,
            stratify(&labels, folds, seed::derive(seed, &[id as u64])),
        );
    }
    Ok(FoldPlan { folds, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_positives() {
        let labels: Vec<Vec<u8>> = (0..100).map(|i| vec![(i < 10) as u8, 0]).collect();
        let f = stratify(&labels, 5, 3);
        for k in 0..5u8 {
            let idx: Vec<usize> = (0..100).filter(|&i| f[i] == k).collect();
            assert_eq!(idx.len(), 20);
            assert_eq!(idx.iter().filter(|&&i| labels[i][0] == 1).count(), 2);
        }
        assert_eq!(f, stratify(&labels, 5, 3));
    }
}
