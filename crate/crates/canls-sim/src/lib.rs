//! Monte Carlo experiment harness for the `canls` detectors: run
//! configuration, deterministic trial scheduling, the synthetic
//! reconstruction scene, and CSV/manifest/plot output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod scene3d;
