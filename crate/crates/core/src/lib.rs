//! Closed-loop affective music intervention engine.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`signal`]: EEG ingestion, windowing and Welch band powers.
//! - [`decoder`]: band powers to a valence/arousal state and trajectory.
//! - [`planner`]: BM25 retrieval over a knowledge base and deterministic
//!   synthesis of an [`planner::InterventionPlan`].
//! - [`engine`]: global/section controls, procedural score and audio.
//! - [`metrics`]: Emo-MSE, Dyn-Corr, Plan-Cons, ICC(2,k) and friends.
//!
//! [`bench`] sweeps the metrics over random plans. [`session`] wires them into the residual target-update loop and
//! [`service`] hosts sessions over HTTP/WebSocket with an append-only log.

pub mod bench;
pub mod canonical;
pub mod decoder;
pub mod engine;
pub mod hook;
pub mod metrics;
pub mod planner;
pub mod service;
pub mod session;
pub mod signal;

pub use decoder::{AffectState, AffectTrajectory};
pub use engine::{AudioClip, Score};
pub use planner::InterventionPlan;
