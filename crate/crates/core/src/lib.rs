//! Bayesian adaptive-enrichment trial design built on a reversible-jump
//! sampler that averages over free-knot spline submodels.

pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod sampler;
pub mod scenario;
pub mod spline;
pub mod trial;

pub use error::{Error, Result};
