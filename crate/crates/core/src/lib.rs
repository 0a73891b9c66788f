//! Clinical pathway mining and patient-flow simulation.
//!
//! The pipeline runs from timestamped event logs to a discrete-event
//! simulation of patient flow:
//!
//! 1. [`eventlog`]: ingest, clean, or synthesize event logs;
//! 2. [`pathway`]: encode cases as state-code strings with tree features;
//! 3. [`cluster`]: Levenshtein k-medoids with CV-ratio selection of k;
//! 4. [`classify`]: CART tree over sequence features;
//! 5. [`cpmodel`]: template alignment, pathway graphs, fitted distributions;
//! 6. [`simengine`]: event-calendar simulation with a shared angiography
//!    resource;
//! 7. [`analysis`]: KS / QQ / queue statistics against observed stays.

pub mod error;
pub mod analysis;
pub mod classify;
pub mod cluster;
pub mod cpmodel;
pub mod eventlog;
pub mod pathway;
pub mod pipeline;
pub mod rng;
pub mod simengine;

pub use error::{Error, Result};
