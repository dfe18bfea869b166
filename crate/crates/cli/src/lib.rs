//! Experiment harness behind the `sketch-nla` binary.

pub mod report;
pub mod run;
pub mod spec;
