//! Single-anchor position and orientation estimation over mm-wave MIMO-OFDM.
//!
//! A base station with a known location transmits beamformed OFDM pilots; a
//! mobile station with unknown position and array rotation receives them over
//! the line-of-sight path and a handful of single-bounce scatterer paths.
//! This crate provides both sides of the evaluation problem:
//!
//! * **Bounds** — the exact Fisher information of the per-path channel
//!   parameters (delay, AOD, AOA, complex gain), its transformation into
//!   position/rotation space, and the resulting PEB/REB and per-parameter
//!   CRBs ([`crb`]).
//! * **Estimation** — a three-stage estimator: joint-sparse beamspace
//!   recovery with a false-alarm-calibrated stopping rule ([`somp`]),
//!   off-grid refinement by space-alternating EM ([`sage`]), and weighted
//!   least-squares pose recovery with Levenberg-Marquardt ([`pose`]).
//!
//! [`harness`]-style campaign orchestration (config files, CSV emission,
//! Monte Carlo sweeps) lives in the companion `mmloc-harness` crate.
//!
//! With the default `parallel` feature, embarrassingly parallel inner loops
//! (rotation-trial searches, batch bound evaluation) run on rayon; without
//! it everything is sequential with identical results.

pub mod beamspace;
pub mod channel;
pub mod crb;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod pose;
pub mod sage;
pub mod somp;

mod par;

pub use error::{LocError, Result};
pub use geometry::{ChannelParamSet, PathParams, Pose, Scenario, Vec2};
