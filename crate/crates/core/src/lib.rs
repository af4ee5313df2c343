//! Hybrid-cloud infrastructure simulator with a discrete-time state-space
//! control loop.
//!
//! The crate is organized around six pieces:
//!
//! - [`model`] — the linear plant `x(t+1) = A·x(t) + B·u(t)` with box
//!   constraints on states and controls.
//! - [`ident`] — least-squares identification of `A`, `B` from recorded
//!   `(x, u)` trajectories.
//! - [`control`] — control policies: a one-step model-based regulator plus
//!   static and proportional-thresholding baselines.
//! - [`sim`] — a deterministic discrete-event simulator of local/cloud
//!   service nodes, QoS links, request duplication, and the control loop.
//! - [`metrics`] — latency histograms, tail statistics, and the two
//!   optimality criteria computed from traces.
//! - [`scenario`] — declarative JSON scenario files driving all of the above.

pub mod control;
pub mod ident;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use linalg::Matrix;
pub use model::{BoxConstraints, ControlVector, LinearModel, StateSemantics, StateVector};
pub use scenario::Scenario;
pub use trace::Trace;
