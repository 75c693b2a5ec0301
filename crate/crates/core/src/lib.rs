//! Constructive preference elicitation with the Choice Perceptron.
//!
//! The crate is `no_std` (with `alloc`) and holds the algorithmic core:
//!
//! - [`domain`]: attribute schemas, linear feasibility constraints, the
//!   linear feature map and utility evaluation.
//! - [`solver`]: a small mixed-integer linear programming layer with an
//!   exhaustive backend and an LP-relaxation branch-and-bound backend.
//! - [`query`]: joint selection of `k` feature-distinct configurations
//!   trading off diversity against estimated utility.
//! - [`perceptron`]: the set-wise Perceptron update, step-size adaptation
//!   and the elicitation loop.
//! - [`usersim`]: simulated Plackett-Luce users.
//! - [`metrics`]: regret and regret-bound diagnostics.
//! - [`benchmarks`]: builders for the synthetic, PC and trip domains.
//!
//! IO, file formats, the experiment harness and the HTTP service live in
//! the `cforge` crate.

#![no_std]

extern crate alloc;

pub mod benchmarks;
pub mod domain;
pub mod error;
pub mod math;
pub mod metrics;
pub mod perceptron;
pub mod query;
pub mod solver;
pub mod usersim;

pub use domain::{
    AttributeKind, Cmp, Configuration, Context, DomainDef, DomainSpec, Value, WeightVector,
};
pub use error::{DomainError, ElicitError, MetricsError, QueryError, SimError, SolverError};
pub use perceptron::{
    run_elicitation, Session, SessionConfig, SessionState, SessionTrace, TraceRow, UpdateDelta,
    UserChannel,
};
pub use query::{QuerySet, QueryStrategy, Selection};
pub use solver::{BackendKind, Clock, MilpProblem, SolveOutcome, SolveStatus, Solver};
pub use usersim::{PopulationSpec, SimulatedUser, UserPopulation, WeightDistribution};

