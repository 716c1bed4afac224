//! Simulation core for Stochastic Gradient Coding (SGC) and the straggler-mitigation
//! baselines it is compared against.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational: dense linear
//! algebra, data placement, straggler draws, gradient aggregation and the convergence
//! bounds. File formats, configuration, the parallel experiment runner and the CLI
//! live in the `sgc-sim` companion crate.
//!
//! ```text
//!  Dataset ──► DegreeProfile ──► Assignment ──┐
//!                                             ├──► run_scheme ──► RunTrace
//!  StragglerModel ── sample_round(t) ─────────┘
//! ```

#![no_std]

extern crate alloc;

pub mod assignment;
pub mod bounds;
pub mod data;
pub mod engine;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod straggler;

pub use assignment::{Assignment, AssignmentError, DegreeProfile};
pub use bounds::{BoundError, BoundInputs};
pub use data::{Dataset, DataError, SynthConfig};
pub use engine::{
    EngineError, ProjectionSpec, RunTrace, SchemeKind, SchemeSpec, Simulation, StepSchedule,
};
pub use linalg::{Matrix, NumericsError, SpectralSummary};
pub use straggler::{StragglerModel, WorkerMask};
