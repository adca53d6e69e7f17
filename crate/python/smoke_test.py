#!/usr/bin/env python3
"""Smoke test for the stokes_lagrange_py extension module.

Loads the cdylib produced by `cargo build -p stokes-lagrange-py --release`
(or the debug build) straight from the target directory and exercises the
main types and operations end to end:

  geometry  -> Curve / Domain constructors and queries
  basis     -> source placement and field evaluation
  synthesis -> single-target tube control with mass-conservation checks
  pipeline  -> a full scenario run, twice, with byte-identical artifacts

Run from anywhere: `python3 python/smoke_test.py`.
"""

import importlib.util
import json
import math
import sys
from importlib.machinery import ExtensionFileLoader
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libstokes_lagrange_py.so",
        REPO / "target" / "debug" / "libstokes_lagrange_py.so",
    ]
    for so in candidates:
        if so.is_file():
            loader = ExtensionFileLoader("stokes_lagrange_py", str(so))
            spec = importlib.util.spec_from_loader("stokes_lagrange_py", loader)
            module = importlib.util.module_from_spec(spec)
            sys.modules["stokes_lagrange_py"] = module
            loader.exec_module(module)
            print(f"loaded {so.relative_to(REPO)}")
            return module
    sys.exit(
        "extension module not found; build it first:\n"
        "  cargo build -p stokes-lagrange-py --release"
    )


def check(name, ok, detail=""):
    print(f"  {name}: {'ok' if ok else 'FAIL'}{' — ' + detail if detail else ''}")
    if not ok:
        sys.exit(1)


def main():
    sl = load_module()
    print(f"stokes_lagrange_py {sl.__version__}")

    # --- geometry ---------------------------------------------------------
    print("geometry")
    blob = sl.Curve.circle(0.0, 0.0, 0.2, 128)
    check(
        "circle area",
        abs(blob.signed_area() - math.pi * 0.2**2) < 1e-3,
        f"{blob.signed_area():.6f}",
    )
    check(
        "circle length",
        abs(blob.total_length() - 2 * math.pi * 0.2) < 1e-3,
        f"{blob.total_length():.6f}",
    )
    moved = blob.translated(0.3, 0.0)
    check(
        "hausdorff of a translate",
        abs(sl.hausdorff_distance(blob, moved) - 0.3) < 1e-6,
    )
    check("vertex count", len(moved) == 128)

    outer = sl.Curve.circle(0.0, 0.0, 1.0, 256)
    # Controllable arc: three quarters of the outer circle (wrapping past
    # the parameter origin), the uncontrolled quarter centered on (-1, 0).
    domain = sl.Domain(outer, [], [(0, 0.625, 0.375)])
    check("contains origin", domain.contains(0.0, 0.0))
    check("excludes exterior", not domain.contains(1.5, 0.0))
    check(
        "diameter is the bounding-box diagonal",
        abs(domain.diameter() - 2.0 * math.sqrt(2.0)) < 1e-2,
        f"{domain.diameter():.4f}",
    )
    check(
        "boundary distance",
        abs(domain.min_boundary_distance(0.5, 0.0) - 0.5) < 1e-2,
    )

    # --- basis ------------------------------------------------------------
    print("basis")
    basis = sl.place_sources(domain, [64], 0.15)
    check("two fields per source", len(basis) == 128, f"len {len(basis)}")
    check(
        "sources sit off the fluid",
        basis.min_source_distance(0.0, 0.0) > 1.0,
        f"{basis.min_source_distance(0.0, 0.0):.4f}",
    )
    coeffs = [0.0] * len(basis)
    coeffs[0] = 1.0
    ux, uy = basis.velocity(coeffs, 0.1, -0.2)
    check("field evaluation is finite", math.isfinite(ux) and math.isfinite(uy))

    # --- synthesis --------------------------------------------------------
    print("synthesis")
    control = sl.synthesize_tube_control(domain, blob, 0.05, (1.0, 0.0), 3.0, basis)
    check(
        "tube residual small",
        control.residual_match < 0.1,
        f"{control.residual_match:.3e}",
    )
    check(
        "boundary leak small",
        control.residual_homogeneous < 0.05,
        f"{control.residual_homogeneous:.3e}",
    )
    complement_len = 0.25 * domain.component_length(0)
    leak_bound = complement_len * control.residual_homogeneous + 1e-10
    check(
        "arc flux within leak bound",
        abs(control.sigma_flux) <= leak_bound,
        f"|{control.sigma_flux:.3e}| <= {leak_bound:.3e}",
    )
    check("coefficient count", len(control.coefficients) == len(basis))
    ux, uy = basis.velocity(control.coefficients, 0.0, 0.0)
    check(
        "control pushes the blob right",
        abs(ux - 1.0) < 0.1 and abs(uy) < 0.1,
        f"u(0,0) = ({ux:.3f}, {uy:.3f})",
    )

    # --- pipeline ---------------------------------------------------------
    print("pipeline")
    scenario = {
        "domain": {
            "outer": {"circle": {"center": [0.0, 0.0], "radius": 1.0, "samples": 128}}
        },
        "curves": {
            "gamma0": {"circle": {"center": [-0.3, 0.0], "radius": 0.2, "samples": 64}},
            "gamma1": {"circle": {"center": [0.3, 0.0], "radius": 0.2, "samples": 64}},
            "flow": "translation",
        },
        "sigma": [{"component": 0, "t0": 0.625, "t1": 0.375}],
        "basis": {"counts": [64], "offset": 0.15},
        "pipeline": {"nodes": 4, "delta": 0.06, "dt": 0.01, "rho": 3.0},
        "output": {"directory": "unused", "formats": ["json"]},
        "seed": 7,
    }
    result = sl.run_scenario(json.dumps(scenario))
    check(
        "blob reaches the target",
        result.final_hausdorff < 0.05,
        f"hausdorff {result.final_hausdorff:.3e}",
    )
    check(
        "area is conserved",
        abs(result.area_drift_rel) < 1e-3,
        f"drift {result.area_drift_rel:.3e}",
    )
    check("snapshots recorded", result.snapshots >= 2, f"{result.snapshots}")

    trajectory = json.loads(result.trajectory_json)
    check(
        "trajectory artifact parses",
        len(trajectory["snapshots"]) == result.snapshots,
    )
    control_artifact = json.loads(result.control_json)
    check(
        "control artifact parses",
        len(control_artifact["nodes"]) == 4 and control_artifact["ramp"] is None,
    )

    again = sl.run_scenario(json.dumps(scenario))
    check(
        "reruns are byte-identical",
        again.trajectory_json == result.trajectory_json
        and again.control_json == result.control_json,
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
