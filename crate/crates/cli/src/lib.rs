//! Experiment harness for private sparse linear contextual bandits: sweep
//! configuration, parallel execution, CSV and SVG reports, and the
//! acceptance checks behind `fliphat verify`.

pub mod checks;
pub mod config;
pub mod plot;
pub mod report;
pub mod sweep;
