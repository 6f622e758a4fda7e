//! Experiment runner, scenario presets, and report emitters around
//! `recon-core`: JSON-configured sweeps over methods, noise levels, and
//! seeds, with CSV histories, measurement dumps, comparison tables, and
//! legacy-VTK field output.

pub mod config;
pub mod gradcheck;
pub mod presets;
pub mod runner;
pub mod table;
pub mod vtk;

pub use config::ExperimentConfig;
pub use runner::{prepare_scenario, run_experiment, run_single};
pub use table::ComparisonTable;
