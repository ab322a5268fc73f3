//! Synthetic two-feeder distribution system and its hourly P/Q load data.

mod dataset;
mod network;
mod profile;

pub use dataset::{
    dataset_start, generate_dataset, meta_path, window, DatasetGenerator, DatasetMeta, LoadDataset, WindowedSamples,
    GENERATOR_VERSION,
};
pub use network::{build_network, DistributionNetwork, LoadClass, Node, NUM_EDGES, NUM_NODES};
pub use profile::{
    derive_reactive, scale_to_node, synthesize_base_profile, target_mean_kw, unit_normalize, LoadProfileSpec,
    COMMERCIAL_KWH_PER_SQFT_YEAR, HOURS_PER_YEAR, RESIDENTIAL_KWH_PER_DAY,
};
