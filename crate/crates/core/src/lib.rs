//! Reduced-order engine drive-cycle simulator and surrogate-modeling toolkit.
//!
//! The crate is organized bottom-up:
//!
//! - [`engine`]: crank-angle energy equation for one closed engine cycle.
//! - [`emissions`]: equilibrium burned-gas chemistry, Zeldovich NO and frozen CO.
//! - [`drive_cycle`]: 1 Hz transient traces, the vehicle gear map and campaign task farm.
//! - [`sampling`]: Latin hypercube and full-factorial designs.
//! - [`dataset`]: the 10-input/5-output table, scaler pipeline and CSV persistence.
//! - [`surrogate`]: the feed-forward network, backpropagation and Adam training.
//! - [`baselines`]: linear, ridge, k-nearest-neighbor and regression-tree models.
//! - [`evaluation`]: accuracy metrics and report emission.

pub mod baselines;
pub mod dataset;
pub mod drive_cycle;
pub mod emissions;
pub mod engine;
pub mod evaluation;
pub mod rng;
pub mod sampling;
pub mod surrogate;

pub use dataset::{Dataset, ScalerParams, INPUT_NAMES, N_INPUTS, N_OUTPUTS, OUTPUT_NAMES};
pub use engine::{
    simulate_engine_cycle, CombustionSpec, CycleOutputs, EngineGeometry, OperatingPoint,
    WorkingFluid,
};
