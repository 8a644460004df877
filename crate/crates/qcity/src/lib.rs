//! Std companion of `qcity-core`: configuration files, parallel repeated
//! runs, tabular output and the `qcity` command line.

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;
