//! Distances to Gaussianity, theoretical bounds and seeded Monte Carlo
//! experiments.

pub mod bounds;
pub mod experiment;
pub mod report;
pub mod stats;

pub use bounds::{bound_table, theoretical_bound, BoundContext, BoundKind, LevelConstants};
pub use experiment::{run_experiment, run_sweep, ExperimentConfig};
pub use report::{format_float, write_sweep_csv, CltReport};
pub use stats::{empirical_cumulants, empirical_distance, Cumulants, Metric};
