//! Personalized speech enhancement with a two-stage ERB-gain plus deep-filter
//! network, its training objective, data synthesis, and evaluation tools.

pub mod dsp;
mod error;
mod fsutil;
mod real;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use fsutil::write_atomic;
pub use real::Real;
pub mod model;
pub mod metrics;
pub mod mixer;
pub mod train;
