//! Spatio-temporal Cox rate-and-state model for earthquakes induced by gas
//! extraction.
//!
//! Earthquake counts on a regular grid of cells and annual steps are modelled
//! as Poisson with intensity driven by produced volume and by pore-pressure
//! history through a rate-and-state normaliser. Pressure is a deterministic
//! mean field plus an independent Gaussian error, which makes the point process
//! a Cox process.
//!
//! - [`datamodel`]: grid, time axis, catalog and production ingestion.
//! - [`pressure`]: mean pressure fields and error variance.
//! - [`ratestate`]: state normaliser and intensity.
//! - [`estimation`]: composite-likelihood fit and sandwich confidence intervals.
//! - [`latent`]: MALA sampling of the latent pressure error.
//! - [`forecast`]: predictive intensity maps and the Cox-process simulator.
//! - [`reservoir`]: CGR pressure matching, subsidence, and RMSE history matching.

pub mod datamodel;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod latent;
pub mod numeric;
pub mod pressure;
pub mod ratestate;
pub mod reservoir;

pub use error::{Error, Result};
pub use ratestate::ModelParams;
