//! The linear-Gaussian signal/observation model and its path simulators.

mod assumptions;
mod noise;
mod params;
mod simulate;

pub use assumptions::{validate_assumptions, AssumptionReport};
pub use noise::{derive_seed, GaussianSource, NoiseBundle, StreamRole};
pub use params::{ModelConfig, ModelParams, TimeGrid};
pub use simulate::{
    observations_from_noise, simulate_observations, simulate_truth, write_path_csv,
    ObservationIncrements, TruthPath,
};
