//! Chimeric epidemic forecasting.
//!
//! A discrete-time Kermack-McKendrick hospitalization model fit to weekly
//! surveillance counts, optionally augmented with human-judgment forecasts of
//! the season's peak week and peak intensity, plus the tooling to extend
//! human forecasts to new locations and to score quantile forecasts.

pub mod ad;
pub mod error;
pub mod extend;
pub mod hj;
pub mod inference;
pub mod io;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod ts;

pub use error::{Error, Result};
