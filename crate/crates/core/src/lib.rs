//! Tip-set dynamics of DAG-structured ledgers.
//!
//! * [`tangle`]: the DAG, its free/pending tip partition and cumulative weights.
//! * [`selection`]: uniform, random-walk, age-weighted and hybrid tip selection.
//! * [`sim`]: the time-stepped agent simulation and Monte Carlo batches.
//! * [`fluid`]: the large-arrival-rate delayed transport model, solved along
//!   characteristics.
//! * [`steady`]: time-independent profiles of the fluid model.
//! * [`experiments`]: presets, verdicts and output files behind the CLI.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fluid;
pub mod quad;
pub mod scalar;
pub mod selection;
pub mod sim;
pub mod stats;
pub mod steady;
pub mod tangle;
pub mod weight;

pub use error::ParseError;
pub use scalar::Scalar;
pub use selection::{SelectionPolicy, SelectionRecord};
pub use sim::{RunTrace, ScenarioConfig};
pub use tangle::{SiteId, Step, TangleState};
pub use weight::WeightFunction;

pub type Weight = WeightFunction<f64>;
pub type FluidGrid64 = fluid::FluidGrid<f64>;
pub type FluidGrid32 = fluid::FluidGrid<f32>;
pub type SteadyProfile64 = steady::SteadyProfile<f64>;
