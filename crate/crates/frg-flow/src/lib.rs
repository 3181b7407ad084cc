//! Experiment runner for GP-collocated FRG flows: configuration, drivers,
//! CSV/JSON output, SVG plots and run comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plots;
pub mod run;

pub use run::execute;
