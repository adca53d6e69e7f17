//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("point ({x}, {y}) lies on a domain boundary (within tolerance {tol})")]
    OnBoundary { x: f64, y: f64, tol: f64 },

    #[error("curve is not contained in the domain")]
    CurveNotInDomain,

    #[error("tube of thickness {delta} leaves the domain: only {kept_fraction:.3} of curve nodes keep a full normal column")]
    TubeLeavesDomain { delta: f64, kept_fraction: f64 },

    #[error("curves have different sample counts: {a} vs {b}")]
    SampleCountMismatch { a: usize, b: usize },

    #[error("source offset {offset} too large: {reason}")]
    OffsetTooLarge { offset: f64, reason: String },

    #[error("field evaluated within {dist:.3e} of a singular source")]
    EvaluationAtSingularity { dist: f64 },

    #[error("finite-difference stencil too close to a source: distance {dist:.3e} < 10h = {min_dist:.3e}")]
    TooCloseToSingularity { dist: f64, min_dist: f64 },

    #[error("degenerate least-squares problem: {0}")]
    DegenerateProblem(String),

    #[error("match targets imply net flux {flux:.3e} through the matched curve (tolerance {tol:.3e}); target is not volume-compatible")]
    InfeasibleFlux { flux: f64, tol: f64 },

    #[error("collocation points carry no normals; flux needs them")]
    MissingNormals,

    #[error("enclosed areas differ beyond tolerance: {a0} vs {a1} (relative gap {rel:.3e})")]
    AreaMismatch { a0: f64, a1: f64, rel: f64 },

    #[error("curves enclose different hole sets; no admissible flow connects them")]
    HomotopyClassMismatch,

    #[error("straight-line sweep of the curve leaves the domain; translation scenario infeasible")]
    SweepLeavesDomain,

    #[error("curve is not star-shaped about ({x}, {y}); radial morph infeasible")]
    NotStarShaped { x: f64, y: f64 },

    #[error("model flow misses its target: end-curve distance {distance:.3e} exceeds {tol:.3e}")]
    ModelFlowMissesTarget { distance: f64, tol: f64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("advected curve left the domain at t = {t}: point ({x}, {y})")]
    CurveLeftDomain { t: f64, x: f64, y: f64 },

    #[error("advected curve self-intersects at t = {t}")]
    SelfIntersection { t: f64 },

    #[error("synthesis residual {residual:.3e} at node {node} exceeds tolerance {tol:.3e}")]
    SynthesisResidualTooLarge {
        node: usize,
        residual: f64,
        tol: f64,
    },

    #[error("trajectory is incomplete: {0}")]
    IncompleteTrajectory(String),

    #[error("blob escapes the domain during the start-up ramp even after {bisections} halvings of tau")]
    BlobEscapesDuringRamp { bisections: u32 },

    #[error("missing or unreadable artifact: {0}")]
    MissingArtifacts(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the violated invariant, for CLI
    /// messages and log scraping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCurve(_) => "InvalidCurve",
            Error::OnBoundary { .. } => "OnBoundary",
            Error::CurveNotInDomain => "CurveNotInDomain",
            Error::TubeLeavesDomain { .. } => "TubeLeavesDomain",
            Error::SampleCountMismatch { .. } => "SampleCountMismatch",
            Error::OffsetTooLarge { .. } => "OffsetTooLarge",
            Error::EvaluationAtSingularity { .. } => "EvaluationAtSingularity",
            Error::TooCloseToSingularity { .. } => "TooCloseToSingularity",
            Error::DegenerateProblem(_) => "DegenerateProblem",
            Error::InfeasibleFlux { .. } => "InfeasibleFlux",
            Error::MissingNormals => "MissingNormals",
            Error::AreaMismatch { .. } => "AreaMismatch",
            Error::HomotopyClassMismatch => "HomotopyClassMismatch",
            Error::SweepLeavesDomain => "SweepLeavesDomain",
            Error::NotStarShaped { .. } => "NotStarShaped",
            Error::ModelFlowMissesTarget { .. } => "ModelFlowMissesTarget",
            Error::OutOfRange(_) => "OutOfRange",
            Error::CurveLeftDomain { .. } => "CurveLeftDomain",
            Error::SelfIntersection { .. } => "SelfIntersection",
            Error::SynthesisResidualTooLarge { .. } => "SynthesisResidualTooLarge",
            Error::IncompleteTrajectory(_) => "IncompleteTrajectory",
            Error::BlobEscapesDuringRamp { .. } => "BlobEscapesDuringRamp",
            Error::MissingArtifacts(_) => "MissingArtifacts",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
