//! Robust control-barrier-function safety filtering for a unicycle under
//! bounded state-estimation error.
//!
//! The safe set is described by a Poisson safety field ([`field`]) built from
//! the scenario geometry ([`world`]). A heading-augmented barrier
//! ([`barrier`]) feeds a two-input R-CBF quadratic program ([`qp`]) whose
//! robustness parameters are selected online ([`adapt`]). [`sim`] runs the
//! closed loop and [`metrics`] scores the resulting logs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapt;
pub mod barrier;
pub mod cli;
pub mod field;
pub mod heading;
pub mod log;
pub mod metrics;
pub mod pipeline;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod vehicle;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    World(#[from] world::WorldError),
    #[error(transparent)]
    Field(#[from] field::FieldError),
    #[error(transparent)]
    Adapt(#[from] adapt::AdaptError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Log(#[from] log::LogError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

pub use adapt::{adapt_gamma, AdaptationConfig, AdaptationResult};
pub use barrier::{Barrier, BarrierEval, ModifiedBarrier, PlainBarrier};
pub use field::{build_field, solve_poisson, Forcing, GridField};
pub use qp::{constraint_terms, solve_filter, FilterResult, RobustnessParams};
pub use scenario::Scenario;
pub use sim::{run_simulation, ControllerVariant, RunStatus};
pub use vehicle::{ControlInput, VehicleState};
