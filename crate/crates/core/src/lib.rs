//! Sequential break monitoring for linear regressions.
//!
//! A model is fitted on a break-free training window of length `m`; afterwards each new
//! observation's prediction residual is added to a CUSUM and compared against a weighted
//! boundary. Renyi weights (`eta > 1/2`) catch breaks right after monitoring starts, light
//! weights (`eta < 1/2`) catch later ones, and the veto monitor combines both.
//!
//! Estimation and monitoring are generic over [`Scalar`] (`f32`/`f64`); critical values and
//! the simulation harness work in `f64`. The aliases below fix the scalar to `f64`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod critval;
pub mod detector;
pub mod error;
pub mod format;
pub mod io;
pub mod linalg;
pub mod lrv;
pub mod regression;
pub mod scalar;
pub mod simulation;
pub mod veto;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use critval::{CriticalValueTable, ReducedExponent, WienerSimSettings};
pub use detector::{Decision, SequentialMonitor, Status, TrimRule};
pub use lrv::BandwidthRule;
pub use simulation::{BreakSpec, DgpConfig, ExperimentConfig, ExperimentResult, MonitorSpec};

pub type Dataset = regression::Dataset<f64>;
pub type Observation = regression::Observation<f64>;
pub type LagSpec = regression::LagSpec<f64>;
pub type TrainedModel = regression::TrainedModel<f64>;
pub type MonitoringModel = regression::MonitoringModel<f64>;
pub type LrvEstimate = lrv::LrvEstimate<f64>;
pub type MonitorConfig = detector::MonitorConfig<f64>;
pub type MonitorState = detector::MonitorState<f64>;
pub type StepEvent = detector::StepEvent<f64>;
pub type Monitor<'a> = detector::Monitor<'a, f64>;
pub type VetoConfig = veto::VetoConfig<f64>;
pub type VetoState = veto::VetoState<f64>;
pub type VetoMonitor<'a> = veto::VetoMonitor<'a, f64>;

pub type DatasetF32 = regression::Dataset<f32>;
pub type TrainedModelF32 = regression::TrainedModel<f32>;
pub type MonitorConfigF32 = detector::MonitorConfig<f32>;
