//! Curves, domains with holes, and collocation geometry.

mod collocation;
mod curve;
mod domain;

pub use collocation::{tube, CollocationSet, MIN_KEPT_FRACTION, TUBE_LAYER_OFFSETS};
pub use curve::{
    hausdorff_distance, parametric_distance, shoelace_area, JordanCurve, MAX_SPACING_RATIO,
    MIN_SAMPLES,
};
pub use domain::{BoundarySample, Domain, SigmaArc};
