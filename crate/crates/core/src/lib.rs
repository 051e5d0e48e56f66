//! Simulation and analysis of a vertically constrained, lossy spring-loaded
//! inverted pendulum hopper whose leg carries a slider-crank mechanism for
//! energy injection.
//!
//! * [`simulator`] integrates the full hybrid dynamics (ground truth).
//! * [`analytic`] is the closed-form approximate stance solution.
//! * [`control`] picks crank targets with a deadbeat apex-height controller.
//! * [`stability`] locates fixed points and their return-map derivatives.
//! * [`harness`] runs the prediction-error grid and related experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod control;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod maps;
pub mod model;
pub mod roots;
pub mod simulator;
pub mod stability;
pub mod svg;

pub use error::{Result, SlipError};
pub use maps::{AnalyticMap, NumericMap, ReturnMap, StrideSummary};
pub use model::{
    validate, ApexState, ControlInput, CrankDrive, HybridState, ModelParams, Phase, StrideRecord,
};
