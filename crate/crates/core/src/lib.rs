// Range checks are written as `!(x > lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod constructions;
pub mod em;
pub mod error;
pub mod experiments;
pub mod gmm;
pub mod landscape;
pub mod parallel;
pub mod population;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use gmm::MixtureModel;
pub use quadrature::QuadratureSpec;
