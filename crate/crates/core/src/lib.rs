pub mod emd;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
