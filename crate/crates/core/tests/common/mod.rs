//! Small fixtures shared by the integration tests.
#![allow(dead_code)]

use fspn_core::dsp::{ChannelShape, FeatureProfile, ModelInput};
use fspn_core::model::{ArchConfig, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three channels of 16 samples, 8 spectrum bins and 4 x 8 scalograms.
pub fn tiny_profile() -> FeatureProfile {
    let ch = ChannelShape {
        signal_len: 16,
        spectrum_len: 8,
        cwt_scales: 4,
        cwt_time: 8,
    };
    FeatureProfile {
        name: "tiny".into(),
        channels: vec![ch; 3],
    }
}

pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        branch_widths: [2, 4],
        cwt_widths: [2, 2],
        cwt_rows: 2,
        join_len: 4,
        trunk_width: 4,
        head_units: 8,
    }
}

/// Task 0 fires when the first signal sits above zero (below zero when
/// `flip`); task 1 never fires.
pub fn toy_data(n: usize, seed: u64, flip: bool) -> (Vec<ModelInput>, Vec<Vec<u8>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = tiny_profile().input_shapes();
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let pos = i % 3 == 0;
        let high = pos != flip;
        let x = shapes
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let len: usize = s.iter().product();
                let offset = match (k, high) {
                    (0, true) => 1.0,
                    (0, false) => -1.0,
                    _ => 0.0,
                };
                (0..len)
                    .map(|_| offset + rng.random::<f32>() * 0.6 - 0.3)
                    .collect()
            })
            .collect();
        inputs.push(ModelInput(x));
        labels.push(vec![pos as u8, 0]);
    }
    (inputs, labels)
}

pub fn samples<'a>(inputs: &'a [ModelInput], labels: &'a [Vec<u8>]) -> Vec<Sample<'a>> {
    inputs
        .iter()
        .zip(labels)
        .map(|(input, l)| Sample { input, labels: l })
        .collect()
}
