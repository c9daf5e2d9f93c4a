//! Inputs shared by the benchmarks: records of one desk machine, featurised
//! and normalised once.

use fspn_core::dsp::{FeatureBundle, FeatureExtractor, FeatureProfile, FeatureStats, ModelInput};
use fspn_core::synth::{generate_scenario, ScenarioConfig, VibrationRecord};

pub struct Fixture {
    pub scenario: ScenarioConfig,
    pub records: Vec<VibrationRecord>,
    pub extractor: FeatureExtractor,
    pub bundles: Vec<FeatureBundle>,
    pub inputs: Vec<ModelInput>,
}

impl Fixture {
    /// `records` records of machine 9, which carries three fault types.
    pub fn new(records: usize) -> Self {
        let mut scenario = ScenarioConfig::desk_default(0);
        scenario.machines.retain(|m| m.machine_id == 9);
        scenario.machines[0].sample_count = records;
        let dataset = generate_scenario(&scenario).expect("fixture scenario");
        let records = dataset.into_values().next().unwrap();
        let extractor = FeatureExtractor::new(&scenario.channels, &FeatureProfile::desk())
            .expect("desk extractor");
        let bundles = extractor.featurize_all(&records).expect("featurize");
        let stats = FeatureStats::fit(&bundles).expect("fit");
        let inputs = bundles.iter().map(|b| stats.normalize(b)).collect();
        Fixture {
            scenario,
            records,
            extractor,
            bundles,
            inputs,
        }
    }
}
