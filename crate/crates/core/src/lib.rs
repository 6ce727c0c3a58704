// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod gaussian_optics;
pub mod rng;
pub mod stats;
pub mod trainer;
pub mod transduction;
