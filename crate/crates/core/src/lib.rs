// `!(x > 0.0)` is used deliberately so NaN is rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod group_models;
pub mod numerics;
pub mod reduction;
pub mod ruin;
pub mod simulation;

pub use distributions::{ClaimDistribution, GriddedDistribution, LatticeSpec};
pub use error::{Error, Result};
