//! Simulation and diagnostics for distribution-dependent stochastic delay
//! equations: segment spaces, empirical laws with Wasserstein distances,
//! Euler–Maruyama for frozen-law delay equations, Picard iteration and
//! interacting particles for the McKean–Vlasov problem, a spectral Galerkin
//! scheme for a porous-medium equation with delay, and explicit bound checks.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod euler;
pub mod galerkin;
pub mod io;
pub mod law;
pub mod mckean;
pub mod models;
pub mod noise;
pub mod numeric;
pub mod ot;
pub mod par;
pub mod segment;

pub use error::{Error, Result};
pub use law::{GroundMetric, LawFlow, SegmentEnsemble};
pub use segment::{GridPath, Segment, SegmentMeta, SegmentView, TimeGrid};
