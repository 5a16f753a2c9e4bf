//! Offline policy learning for joint pricing and inventory control under
//! censored, autocorrelated demand.

pub mod approx;
pub mod censor;
pub mod data;
pub mod env;
pub mod error;
pub mod fqi;
pub mod history;
pub mod oracle;
pub mod rng;
pub mod survival;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
