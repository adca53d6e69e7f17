//! Scenario files and run artifacts: the JSON configuration the batch
//! front end consumes, and the trajectory/control files a run writes and
//! the verifier reads back.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{FieldCoefficients, StokesBasis};
use crate::control::SynthesizedControl;
use crate::error::{Error, Result};
use crate::geometry::{Domain, JordanCurve, SigmaArc};
use crate::model_flow::{FlowDescriptor, FlowScenario, ModelFlow};
use crate::pipeline::{
    BlendedControl, DiagnosticRow, PartitionOfUnity, RampPhase, RunConfig, RunOutput, Trajectory,
};

/// Curve shorthand in scenario files: an explicit polygon or a sampled
/// circle/ellipse.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        center: [f64; 2],
        radius: f64,
        samples: usize,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        samples: usize,
    },
    Points(Vec<[f64; 2]>),
}

impl CurveSpec {
    pub fn build(&self) -> Result<JordanCurve> {
        match self {
            CurveSpec::Circle {
                center,
                radius,
                samples,
            } => JordanCurve::circle(nalgebra::Point2::new(center[0], center[1]), *radius, *samples),
            CurveSpec::Ellipse {
                center,
                semi_axes,
                samples,
            } => JordanCurve::ellipse(
                nalgebra::Point2::new(center[0], center[1]),
                semi_axes[0],
                semi_axes[1],
                *samples,
            ),
            CurveSpec::Points(pts) => JordanCurve::new(
                pts.iter()
                    .map(|[x, y]| nalgebra::Point2::new(*x, *y))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub outer: CurveSpec,
    #[serde(default)]
    pub holes: Vec<CurveSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub gamma0: CurveSpec,
    pub gamma1: CurveSpec,
    /// How the model flow carries gamma0 to gamma1.
    pub flow: FlowScenario,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Sources per boundary component, outermost first.
    pub counts: Vec<usize>,
    /// Source ring offset from the boundary.
    pub offset: f64,
    /// Relative singular-value cutoff for the least-squares solves.
    #[serde(default = "default_tau_svd")]
    pub tau_svd: f64,
}

fn default_tau_svd() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Per-node synthesis residual, relative to the node's largest target
    /// speed; the run aborts beyond it.
    #[serde(default = "default_residual_tol")]
    pub residual: f64,
    /// Minimum clearance the endpoint curves must keep from the walls.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_residual_tol() -> f64 {
    0.1
}

fn default_clearance() -> f64 {
    0.02
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: default_residual_tol(),
            clearance: default_clearance(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// Number of time nodes.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Partition hat half-width; defaults to 1.2 × half the node spacing.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Tube half-width for collocation.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Advection time step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Weight ratio of no-leak rows over match rows.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_nodes() -> usize {
    8
}

fn default_delta() -> f64 {
    0.08
}

fn default_dt() -> f64 {
    5e-3
}

fn default_rho() -> f64 {
    10.0
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            eta: None,
            delta: default_delta(),
            dt: default_dt(),
            rho: default_rho(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// trajectory.json and control.json.
    Json,
    /// diagnostics.csv (and sweep.csv for sweeps).
    Csv,
    /// Per-snapshot SVG frames.
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Exterior source counts, strictly ascending.
    pub sizes: Vec<usize>,
}

/// Top-level scenario document. Unknown keys are rejected everywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub domain: DomainSection,
    pub curves: CurvesSection,
    /// Control-region arcs on the boundary.
    pub sigma: Vec<SigmaArc>,
    pub basis: BasisSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Builds the validated run configuration this scenario describes.
    pub fn run_config(&self) -> Result<RunConfig> {
        let outer = self.domain.outer.build()?;
        let holes = self
            .domain
            .holes
            .iter()
            .map(|h| h.build())
            .collect::<Result<Vec<_>>>()?;
        let domain = Domain::new(outer, holes, self.sigma.clone())?;
        let gamma0 = self.curves.gamma0.build()?;
        let gamma1 = self.curves.gamma1.build()?;
        let p = &self.pipeline;
        let eta = p
            .eta
            .unwrap_or_else(|| 0.6 / (p.nodes.max(2) - 1) as f64);
        let config = RunConfig {
            domain,
            gamma0,
            gamma1,
            scenario: self.curves.flow,
            counts: self.basis.counts.clone(),
            offset: self.basis.offset,
            tau_svd: self.basis.tau_svd,
            nodes: p.nodes,
            eta,
            delta: p.delta,
            dt: p.dt,
            weight_ratio: p.rho,
            residual_tol: p.tolerances.residual,
            clearance_margin: p.tolerances.clearance,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// One stored snapshot of the advected curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub t: f64,
    pub curve: JordanCurve,
}

/// Self-contained trajectory artifact: everything the verifier needs to
/// re-check a run without the original scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub domain: Domain,
    pub gamma1: JordanCurve,
    pub flow: FlowDescriptor,
    /// Tube half-width the run used (the Gronwall re-check needs it).
    pub delta: f64,
    pub seed: u64,
    pub snapshots: Vec<SnapshotRecord>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub final_hausdorff: f64,
    pub final_parametric: Option<f64>,
    pub area_drift_rel: f64,
    pub resamples: usize,
}

impl TrajectoryFile {
    /// Assembles the artifact from a (possibly partial) trajectory.
    pub fn new(config: &RunConfig, flow: &FlowDescriptor, trajectory: &Trajectory) -> Self {
        Self {
            domain: config.domain.clone(),
            gamma1: config.gamma1.clone(),
            flow: flow.clone(),
            delta: config.delta,
            seed: config.seed,
            snapshots: trajectory
                .snapshots
                .iter()
                .map(|(t, curve)| SnapshotRecord {
                    t: *t,
                    curve: curve.clone(),
                })
                .collect(),
            diagnostics: trajectory.diagnostics.clone(),
            final_hausdorff: trajectory.final_hausdorff,
            final_parametric: trajectory.final_parametric,
            area_drift_rel: trajectory.area_drift_rel,
            resamples: trajectory.resamples,
        }
    }

    pub fn from_run(config: &RunConfig, out: &RunOutput) -> Self {
        Self::new(config, &out.flow, &out.trajectory)
    }

    /// Rebuilds the in-memory trajectory.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            snapshots: self
                .snapshots
                .iter()
                .map(|s| (s.t, s.curve.clone()))
                .collect(),
            diagnostics: self.diagnostics.clone(),
            final_hausdorff: self.final_hausdorff,
            final_parametric: self.final_parametric,
            area_drift_rel: self.area_drift_rel,
            resamples: self.resamples,
        }
    }

    pub fn model_flow(&self) -> Result<ModelFlow> {
        ModelFlow::from_descriptor(&self.flow)
    }
}

/// The control at one time node, as stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeControlRecord {
    pub t: f64,
    pub control: SynthesizedControl,
}

/// Start-up ramp metadata, as stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampRecord {
    pub tau: f64,
    pub bisections: u32,
    pub u0: FieldCoefficients,
}

/// Control artifact: the basis, the partition of unity, and every node
/// control with its trace and residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlFile {
    pub basis: StokesBasis,
    pub pou_nodes: Vec<f64>,
    pub pou_radii: Vec<f64>,
    pub nodes: Vec<NodeControlRecord>,
    pub ramp: Option<RampRecord>,
}

impl ControlFile {
    /// Assembles the artifact from the blended field and its node controls.
    pub fn from_parts(
        blended: &BlendedControl,
        node_controls: &[crate::pipeline::NodeControl],
        ramp: Option<&RampPhase>,
    ) -> Self {
        Self {
            basis: blended.basis().clone(),
            pou_nodes: blended.partition().nodes().to_vec(),
            pou_radii: blended.partition().radii().to_vec(),
            nodes: node_controls
                .iter()
                .map(|nc| NodeControlRecord {
                    t: nc.t,
                    control: nc.control.clone(),
                })
                .collect(),
            ramp: ramp.map(|r| RampRecord {
                tau: r.tau,
                bisections: r.bisections,
                u0: r.u0.clone(),
            }),
        }
    }

    pub fn from_run(out: &RunOutput) -> Self {
        Self::from_parts(&out.blended, &out.node_controls, out.ramp.as_ref())
    }

    /// Rebuilds the blended control field.
    pub fn blended(&self) -> Result<BlendedControl> {
        let pou = PartitionOfUnity::new(self.pou_nodes.clone(), self.pou_radii.clone())?;
        let coefficients = self
            .nodes
            .iter()
            .map(|n| n.control.coefficients.clone())
            .collect();
        BlendedControl::new(self.basis.clone(), pou, coefficients)
    }

    pub fn ramp_phase(&self) -> Option<RampPhase> {
        self.ramp.as_ref().map(|r| RampPhase {
            tau: r.tau,
            bisections: r.bisections,
            u0: r.u0.clone(),
        })
    }
}

/// Writes a value as pretty JSON with a trailing newline (deterministic:
/// fixed field order, shortest-round-trip floats).
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_artifact<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingArtifacts(format!("{what} at {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::MissingArtifacts(format!("{what} at {}: {e}", path.display())))
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile> {
    load_artifact(path, "trajectory artifact")
}

pub fn load_control(path: &Path) -> Result<ControlFile> {
    load_artifact(path, "control artifact")
}
