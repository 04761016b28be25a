//! Federated anomaly detection on echo state network reservoir states.
//!
//! The primary detector scores each timestep by the squared Mahalanobis
//! distance of its reservoir state from the states seen on normal training
//! data ([`mdrs`]). Clients federate by summing state covariances
//! ([`federation`]), which yields exactly the centralized model. A ridge
//! readout with reconstruction-error scoring ([`readout`]) is provided as a
//! baseline.

pub mod data;
pub mod error;
pub mod federation;
pub mod mdrs;
pub mod metrics;
pub mod pipeline;
pub mod readout;
pub mod reservoir;
pub mod rng;

pub use error::{Error, ErrorClass, ProtocolError, Result};
pub use mdrs::{batch_precision, CovarianceAccumulator, PrecisionModel, PrecisionPath, ScoreSeries};
pub use pipeline::{Method, TrainOptions, TrainedModel};
pub use reservoir::{Reservoir, ReservoirSpec, ReservoirWeights, StateTrajectory};

pub use nalgebra;
