//! Python bindings for the core boundary-control toolkit.
//!
//! The module exposes the main types and operations: Jordan curves and
//! control domains, source placement, single-target control synthesis, and
//! the end-to-end scenario pipeline. Build with
//! `cargo build -p stokes-lagrange-py --release`; the resulting
//! `libstokes_lagrange_py.so` loads directly as the Python extension module
//! `stokes_lagrange_py` (see `python/smoke_test.py`).

use nalgebra::{Point2, Vector2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use stokes_lagrange::basis::{place_sources as core_place_sources, FieldCoefficients, StokesBasis};
use stokes_lagrange::control::{synthesize as core_synthesize, ControlProblem, SynthesizedControl};
use stokes_lagrange::geometry::{self, JordanCurve, SigmaArc};
use stokes_lagrange::pipeline;
use stokes_lagrange::scenario::{ControlFile, ScenarioFile, TrajectoryFile};

fn to_py(e: stokes_lagrange::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A closed, positively oriented, non-self-intersecting polyline.
#[pyclass(frozen, module = "stokes_lagrange_py")]
struct Curve {
    inner: JordanCurve,
}

#[pymethods]
impl Curve {
    /// Builds a curve from an explicit vertex list.
    #[new]
    fn new(points: Vec<(f64, f64)>) -> PyResult<Self> {
        let pts = points.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        Ok(Curve {
            inner: JordanCurve::new(pts).map_err(to_py)?,
        })
    }

    /// A circle of radius `radius` about `(cx, cy)` sampled at `samples`
    /// vertices.
    #[staticmethod]
    fn circle(cx: f64, cy: f64, radius: f64, samples: usize) -> PyResult<Self> {
        Ok(Curve {
            inner: JordanCurve::circle(Point2::new(cx, cy), radius, samples).map_err(to_py)?,
        })
    }

    /// An axis-aligned ellipse with semi-axes `a`, `b` about `(cx, cy)`.
    #[staticmethod]
    fn ellipse(cx: f64, cy: f64, a: f64, b: f64, samples: usize) -> PyResult<Self> {
        Ok(Curve {
            inner: JordanCurve::ellipse(Point2::new(cx, cy), a, b, samples).map_err(to_py)?,
        })
    }

    /// Vertex list as `[(x, y), ...]`.
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points().iter().map(|p| (p.x, p.y)).collect()
    }

    /// Signed enclosed area (positive for counterclockwise orientation).
    fn signed_area(&self) -> f64 {
        self.inner.signed_area()
    }

    /// Perimeter of the polyline.
    fn total_length(&self) -> f64 {
        self.inner.total_length()
    }

    /// The same curve shifted by `(dx, dy)`.
    fn translated(&self, dx: f64, dy: f64) -> Curve {
        Curve {
            inner: self.inner.translated(Vector2::new(dx, dy)),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Curve({} vertices, area {:.6})",
            self.inner.len(),
            self.inner.signed_area()
        )
    }
}

/// Symmetric Hausdorff distance between two curves' vertex sets.
#[pyfunction]
fn hausdorff_distance(a: &Curve, b: &Curve) -> f64 {
    geometry::hausdorff_distance(&a.inner, &b.inner)
}

/// A bounded, possibly multiply connected flow domain with a controllable
/// boundary part Σ given as `(component, t0, t1)` arc fractions.
#[pyclass(frozen, module = "stokes_lagrange_py")]
struct Domain {
    inner: geometry::Domain,
}

#[pymethods]
impl Domain {
    #[new]
    #[pyo3(signature = (outer, holes = Vec::new(), sigma = Vec::new()))]
    fn new(outer: &Curve, holes: Vec<Py<Curve>>, sigma: Vec<(usize, f64, f64)>) -> PyResult<Self> {
        let holes = holes.iter().map(|h| h.get().inner.clone()).collect();
        let sigma = sigma
            .into_iter()
            .map(|(component, t0, t1)| SigmaArc { component, t0, t1 })
            .collect();
        Ok(Domain {
            inner: geometry::Domain::new(outer.inner.clone(), holes, sigma).map_err(to_py)?,
        })
    }

    /// Whether `(x, y)` lies strictly inside the fluid region.
    fn contains(&self, x: f64, y: f64) -> PyResult<bool> {
        self.inner.contains(&Point2::new(x, y)).map_err(to_py)
    }

    /// Diagonal of the outer boundary's bounding box (the length scale used
    /// for tolerances).
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    /// Number of boundary components (outer boundary plus holes).
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    /// Perimeter of boundary component `index` (0 is the outer boundary).
    fn component_length(&self, index: usize) -> f64 {
        self.inner.component_length(index)
    }

    /// Distance from `(x, y)` to the nearest boundary vertex-edge.
    fn min_boundary_distance(&self, x: f64, y: f64) -> f64 {
        self.inner.min_boundary_distance(&Point2::new(x, y))
    }

    fn __repr__(&self) -> String {
        format!(
            "Domain({} components, diameter {:.6})",
            self.inner.n_components(),
            self.inner.diameter()
        )
    }
}

/// A fundamental-solution basis: `counts[i]` source locations offset outside
/// boundary component `i`, two scalar fields per location.
#[pyclass(frozen, module = "stokes_lagrange_py")]
struct Basis {
    inner: StokesBasis,
}

#[pymethods]
impl Basis {
    /// Number of scalar basis fields (coefficient vector length).
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Distance from `(x, y)` to the nearest source location.
    fn min_source_distance(&self, x: f64, y: f64) -> f64 {
        self.inner.min_source_distance(&Point2::new(x, y))
    }

    /// Velocity of the combination `coefficients` at `(x, y)`.
    fn velocity(&self, coefficients: Vec<f64>, x: f64, y: f64) -> PyResult<(f64, f64)> {
        let c = FieldCoefficients::new(coefficients).map_err(to_py)?;
        let u = self
            .inner
            .eval_velocity(&c, &Point2::new(x, y))
            .map_err(to_py)?;
        Ok((u.x, u.y))
    }

    fn __repr__(&self) -> String {
        format!("Basis({} fields)", self.inner.len())
    }
}

/// Places `counts[i]` sources at distance `offset` outside boundary
/// component `i` and returns the resulting basis.
#[pyfunction]
fn place_sources(domain: &Domain, counts: Vec<usize>, offset: f64) -> PyResult<Basis> {
    Ok(Basis {
        inner: core_place_sources(&domain.inner, &counts, offset).map_err(to_py)?,
    })
}

/// A synthesized boundary control with its diagnostics.
#[pyclass(frozen, module = "stokes_lagrange_py")]
struct Control {
    inner: SynthesizedControl,
}

#[pymethods]
impl Control {
    /// Basis coefficients of the control field.
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.as_slice().to_vec()
    }

    /// max |u - target| over the match collocation.
    #[getter]
    fn residual_match(&self) -> f64 {
        self.inner.residual_match
    }

    /// max |u| over the uncontrolled boundary collocation.
    #[getter]
    fn residual_homogeneous(&self) -> f64 {
        self.inner.residual_homogeneous
    }

    /// Net flux through the controllable arc (divergence-identity value).
    #[getter]
    fn sigma_flux(&self) -> f64 {
        self.inner.sigma_flux
    }

    /// Number of scalar basis fields behind the coefficients.
    #[getter]
    fn basis_size(&self) -> usize {
        self.inner.basis_size
    }

    fn __repr__(&self) -> String {
        format!(
            "Control(match {:.3e}, leak {:.3e}, flux {:.3e})",
            self.inner.residual_match, self.inner.residual_homogeneous, self.inner.sigma_flux
        )
    }
}

/// Synthesizes a control whose field matches the constant `target` velocity
/// on a `delta`-tube around `curve` while staying near zero on the
/// uncontrolled boundary (weighted by `weight_ratio`).
#[pyfunction]
#[pyo3(signature = (domain, curve, delta, target, weight_ratio, basis, tau_svd = 1e-10))]
fn synthesize_tube_control(
    domain: &Domain,
    curve: &Curve,
    delta: f64,
    target: (f64, f64),
    weight_ratio: f64,
    basis: &Basis,
    tau_svd: f64,
) -> PyResult<Control> {
    let velocity = Vector2::new(target.0, target.1);
    let problem =
        ControlProblem::tube_match(&domain.inner, &curve.inner, delta, |_| velocity, weight_ratio)
            .map_err(to_py)?;
    Ok(Control {
        inner: core_synthesize(&problem, &basis.inner, tau_svd).map_err(to_py)?,
    })
}

/// Outcome of an end-to-end scenario run.
#[pyclass(frozen, module = "stokes_lagrange_py")]
struct RunResult {
    final_hausdorff: f64,
    area_drift_rel: f64,
    snapshots: usize,
    trajectory_json: String,
    control_json: String,
}

#[pymethods]
impl RunResult {
    /// Hausdorff distance between the final curve and the target.
    #[getter]
    fn final_hausdorff(&self) -> f64 {
        self.final_hausdorff
    }

    /// Relative enclosed-area drift over the whole trajectory.
    #[getter]
    fn area_drift_rel(&self) -> f64 {
        self.area_drift_rel
    }

    /// Number of stored trajectory snapshots.
    #[getter]
    fn snapshots(&self) -> usize {
        self.snapshots
    }

    /// The trajectory artifact as a JSON string (same bytes the CLI writes).
    #[getter]
    fn trajectory_json(&self) -> &str {
        &self.trajectory_json
    }

    /// The control artifact as a JSON string (same bytes the CLI writes).
    #[getter]
    fn control_json(&self) -> &str {
        &self.control_json
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(final_hausdorff {:.3e}, {} snapshots)",
            self.final_hausdorff, self.snapshots
        )
    }
}

/// Runs a full scenario given the scenario file contents as a JSON string:
/// builds the model flow, synthesizes and blends the node controls, advects
/// the curve, and returns the summary plus both artifacts.
#[pyfunction]
fn run_scenario(scenario_json: &str) -> PyResult<RunResult> {
    let scenario: ScenarioFile =
        serde_json::from_str(scenario_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let config = scenario.run_config().map_err(to_py)?;
    let out = pipeline::run(&config).map_err(to_py)?;
    let trajectory = TrajectoryFile::from_run(&config, &out);
    let control = ControlFile::from_run(&out);
    Ok(RunResult {
        final_hausdorff: trajectory.final_hausdorff,
        area_drift_rel: trajectory.area_drift_rel,
        snapshots: trajectory.snapshots.len(),
        trajectory_json: serde_json::to_string_pretty(&trajectory)
            .map_err(|e| PyValueError::new_err(e.to_string()))?,
        control_json: serde_json::to_string_pretty(&control)
            .map_err(|e| PyValueError::new_err(e.to_string()))?,
    })
}

#[pymodule]
fn stokes_lagrange_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Curve>()?;
    m.add_class::<Domain>()?;
    m.add_class::<Basis>()?;
    m.add_class::<Control>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(hausdorff_distance, m)?)?;
    m.add_function(wrap_pyfunction!(place_sources, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_tube_control, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
