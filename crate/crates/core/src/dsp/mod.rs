//! Signal processing: spectra, wavelet scalograms and condition indices.

mod cwt;
mod features;
mod indices;
mod spectrum;

pub use cwt::{cwt, CwtConfig, CwtPlan, Scalogram, MORLET_W0};
pub use features::{
    ChannelShape, FeatureBundle, FeatureExtractor, FeatureProfile, FeatureStats, ModelInput,
};
pub use indices::{
    freq_indices, time_indices, write_index_csv, IndexVector, TimeIndices, FREQ_INDEX_NAMES,
    INDICES_PER_CHANNEL, ORDERS, TIME_INDEX_NAMES,
};
pub use spectrum::{spectrum, Spectrum, SpectrumPlan};
