//! Weighted Alpert wavelets and two-weight Sobolev T1 experiments on dyadic grids.

pub mod cli;
pub mod config;
pub mod corona;
pub mod energy;
pub mod error;
pub mod goodbad;
pub mod grid;
pub mod measure;
pub mod operator;
pub mod poisson;
pub mod poly;
pub mod sobolev;
pub mod t1;
pub mod wavelet;

pub use error::{LabError, Result};
