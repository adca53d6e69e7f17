//! Boundary-control synthesis for quasi-static Stokes flow.
//!
//! The crate moves a blob of fluid — represented by a Jordan curve — onto a
//! target shape by blowing and sucking on a controllable sub-arc of the
//! domain boundary. The pieces:
//!
//! * [`geometry`] — Jordan curves, multiply connected domains, tube
//!   collocation, and curve distances.
//! * [`basis`] — Stokeslet / point-source fundamental solutions and their
//!   analytic derivatives.
//! * [`approximation`] — least-squares fitting of a target field on a tube by
//!   a singularity expansion (truncated SVD).
//! * [`control`] — time-dependent synthesis: fit a model flow at partition
//!   nodes, blend with a partition of unity, audit flux.
//! * [`model_flow`] — divergence-free reference flows (translation, radial
//!   morph, composite) that carry the start curve to the target.
//! * [`pipeline`] — end-to-end driver: advect, track, verify, write
//!   artifacts.
//! * [`scenario`] — config files and artifact formats.

pub mod approximation;
pub mod basis;
pub mod control;
pub mod error;
pub mod geometry;
pub mod model_flow;
pub mod pipeline;
pub mod scenario;
pub mod svg;
pub mod tsvd;

pub use error::{Error, Result};
