//! Datasets, experiment protocols and result files around [`pnml_core`].

pub mod config;
pub mod data;
pub mod experiments;
pub mod output;
pub mod pool;
pub mod run;

pub use pnml_core as core;
