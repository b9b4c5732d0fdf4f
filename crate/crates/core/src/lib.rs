//! Ventricular digital-twin engine.
//!
//! The crate simulates ventricular depolarisation and repolarisation on
//! tetrahedral meshes with an anisotropic eikonal activation model and a
//! lookup-table reaction step, computes body-surface pseudo-ECGs, and layers
//! three analyses on top of that forward model:
//!
//! * [`inference`] — sequential ABC recovery of the six parameters that shape
//!   the action-potential-duration field from a target 12-lead ECG,
//! * [`sensitivity`] — Saltelli/Sobol variance decomposition of the T-wave
//!   biomarkers over the same parameter space,
//! * [`therapy`] — dose-response evaluation of a repolarisation-blocking
//!   compound across an inferred parameter population.
//!
//! Everything is deterministic given a seed: random streams are derived
//! per-task from explicit counters, and all parallel reductions collect in
//! index order, so outputs are byte-stable across runs and thread counts.

pub mod activation;
pub mod cellular;
pub mod ecg;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod repolarisation;
pub mod rng;
pub mod sensitivity;
pub mod therapy;

pub use error::{Error, Result};
