//! Event detectors and impact-based verification metrics for extreme
//! weather forecasts: heat waves, freezes, marginal temperature days,
//! atmospheric rivers, tropical cyclones and convective outbreak days.

pub mod ar_tracker;
pub mod climatology;
pub mod convective;
pub mod error;
pub mod grid;
pub mod harness;
pub mod landfall;
pub mod metrics;
pub mod tc_tracker;
pub mod timefmt;

pub use error::{Error, Result};
