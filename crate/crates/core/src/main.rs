//! Batch front end: run steering scenarios, sweep basis sizes, verify
//! stored runs. Exit codes: 0 success, 1 failed verification, 2 invalid
//! configuration or unreadable input, 3 runtime abort (partial artifacts
//! are left on disk).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stokes_lagrange::approximation::{self, ApproximationProblem, TargetPoint};
use stokes_lagrange::basis::place_sources;
use stokes_lagrange::control::{synthesize, ControlProblem};
use stokes_lagrange::error::{Error, Result};
use stokes_lagrange::geometry::{hausdorff_distance, tube};
use stokes_lagrange::model_flow::{advect, build_model_flow};
use stokes_lagrange::pipeline::{
    self, diagnostics_to_csv, verify_gronwall, RealizedControlField, RealizedPlanField,
};
use stokes_lagrange::scenario::{
    load_control, load_trajectory, save_json, ControlFile, OutputFormat, ScenarioFile,
    TrajectoryFile,
};
use stokes_lagrange::svg::render_frame;

#[derive(Parser)]
#[command(
    name = "stokes-lagrange",
    version,
    about = "Steer a fluid blob onto a target shape by controlling part of the boundary of a quasi-static Stokes flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario: synthesize controls, advect, write artifacts.
    Run(RunArgs),
    /// Basis-size convergence sweep (approximation + synthesis residuals).
    Sweep(RunArgs),
    /// Re-check a stored trajectory.json against its control.json.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the scenario's `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-snapshot SVG frames; overrides the scenario's formats.
    #[arg(long, value_parser = ["on", "off"])]
    frames: Option<String>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Stored trajectory.json; its control.json must sit beside it.
    trajectory: PathBuf,
    /// Only report through the exit code.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::from(error_exit(&e))
        }
    }
}

/// 3 for aborts of a structurally valid run, 2 for anything wrong with the
/// inputs themselves.
fn error_exit(e: &Error) -> u8 {
    match e {
        Error::CurveLeftDomain { .. }
        | Error::SelfIntersection { .. }
        | Error::SynthesisResidualTooLarge { .. }
        | Error::BlobEscapesDuringRamp { .. }
        | Error::DegenerateProblem(_)
        | Error::InfeasibleFlux { .. }
        | Error::EvaluationAtSingularity { .. }
        | Error::TooCloseToSingularity { .. } => 3,
        _ => 2,
    }
}

fn init_threads() {
    if let Ok(v) = std::env::var("STOKES_LAGRANGE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
        }
    }
}

fn output_dir(args: &RunArgs, scenario: &ScenarioFile) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&scenario.output.directory));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let scenario = ScenarioFile::load(&args.config)?;
    let config = scenario.run_config()?;
    let dir = output_dir(args, &scenario)?;
    let frames_on = match args.frames.as_deref() {
        Some("on") => true,
        Some("off") => false,
        _ => scenario.output.formats.contains(&OutputFormat::Svg),
    };

    let plan = pipeline::plan(&config)?;
    // The controls go to disk before any advection, so a runtime abort
    // still leaves the synthesized fields for inspection.
    save_json(
        &dir.join("control.json"),
        &ControlFile::from_parts(&plan.blended, &plan.node_controls, None),
    )?;
    if let Some(f) = plan.residual_failures.first() {
        return Err(Error::SynthesisResidualTooLarge {
            node: f.node,
            residual: f.residual,
            tol: f.tol,
        });
    }

    let (trajectory, run_error) = pipeline::advect_plan(&config, &plan);
    save_json(
        &dir.join("trajectory.json"),
        &TrajectoryFile::new(&config, &plan.flow.descriptor(), &trajectory),
    )?;
    std::fs::write(
        dir.join("diagnostics.csv"),
        diagnostics_to_csv(&trajectory.diagnostics),
    )?;
    if frames_on {
        let frame_dir = dir.join("frames");
        std::fs::create_dir_all(&frame_dir)?;
        for (i, (t, curve)) in trajectory.snapshots.iter().enumerate() {
            let svg = render_frame(&config.domain, curve, &config.gamma1, *t);
            std::fs::write(frame_dir.join(format!("frame_{i:04}.svg")), svg)?;
        }
    }
    if let Some(e) = run_error {
        return Err(e);
    }
    if !args.quiet {
        println!(
            "final hausdorff distance: {:.6e}",
            trajectory.final_hausdorff
        );
        if let Some(p) = trajectory.final_parametric {
            println!("final parametric distance: {p:.6e}");
        }
        println!("relative area drift: {:.3e}", trajectory.area_drift_rel);
        println!("artifacts written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &RunArgs) -> Result<ExitCode> {
    let scenario = ScenarioFile::load(&args.config)?;
    let config = scenario.run_config()?;
    let sweep = scenario.sweep.as_ref().ok_or_else(|| {
        Error::InvalidConfig("sweep requires a \"sweep\" section with ascending sizes".into())
    })?;
    let dir = output_dir(args, &scenario)?;

    let flow = build_model_flow(
        &config.gamma0,
        &config.gamma1,
        &config.domain,
        config.scenario,
        config.clearance_margin,
    )?;

    // Static approximation residuals on the tube of gamma0, targeting the
    // flow at its fastest instant.
    let coll = tube(&config.gamma0, config.delta, Some(&config.domain))?;
    let targets: Vec<TargetPoint> = coll
        .points()
        .iter()
        .zip(coll.weights())
        .map(|(p, w)| TargetPoint {
            point: *p,
            velocity: flow.eval(0.5, p),
            gradient: None,
            weight: *w,
        })
        .collect();
    let problem = ApproximationProblem::new(targets, 0, config.tau_svd)?;
    let rows = approximation::convergence_sweep(&problem, &config.domain, &sweep.sizes, config.offset)?;

    // Worst per-node synthesis residual at each size, over the same time
    // nodes a run would use.
    let times = config.node_times();
    let mut node_curves = vec![config.gamma0.clone()];
    for w in times.windows(2) {
        let prev = node_curves.last().expect("nonempty");
        node_curves.push(advect(
            &flow,
            prev,
            w[0],
            w[1],
            config.dt,
            Some(&config.domain),
            false,
        )?);
    }
    let mut synth = Vec::with_capacity(sweep.sizes.len());
    for &size in &sweep.sizes {
        let counts = approximation::region_counts(&config.domain, size);
        let basis = place_sources(&config.domain, &counts, config.offset)?;
        let mut worst = 0.0f64;
        for (t_i, curve) in times.iter().zip(&node_curves) {
            let t_node = *t_i;
            let node_problem = ControlProblem::tube_match(
                &config.domain,
                curve,
                config.delta,
                |p| flow.eval(t_node, p),
                config.weight_ratio,
            )?;
            let control = synthesize(&node_problem, &basis, config.tau_svd)?;
            worst = worst.max(control.residual_match);
        }
        synth.push(worst);
    }

    let mut csv = String::from("basis_size,residual_c0,residual_c1,smax,smin,synth_residual_max\n");
    for (row, s) in rows.iter().zip(&synth) {
        let c1 = row
            .residual_c1
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{:.12e},{},{:.12e},{:.12e},{:.12e}\n",
            row.basis_size, row.residual_c0, c1, row.smax, row.smin, s
        ));
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;
    if !args.quiet {
        println!(
            "sweep over {} sizes: residual_c0 {:.3e} -> {:.3e}, synthesis {:.3e} -> {:.3e}",
            rows.len(),
            rows.first().expect("nonempty").residual_c0,
            rows.last().expect("nonempty").residual_c0,
            synth.first().expect("nonempty"),
            synth.last().expect("nonempty"),
        );
        println!("sweep written to {}", dir.join("sweep.csv").display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let tf = load_trajectory(&args.trajectory)?;
    let control_path = match args.trajectory.parent() {
        Some(d) => d.join("control.json"),
        None => PathBuf::from("control.json"),
    };
    let cf = load_control(&control_path)?;
    let trajectory = tf.trajectory();
    let flow = tf.model_flow()?;
    let blended = cf.blended()?;
    let ramp = cf.ramp_phase();

    let mut all_pass = true;
    let report = |name: &str, pass: bool, detail: &str| {
        if !pass {
            // surfaced even with --quiet: failures are the command's output
            println!("{name}: FAIL ({detail})");
        } else if !args.quiet {
            println!("{name}: pass{}{}", if detail.is_empty() { "" } else { " — " }, detail);
        }
        pass
    };

    // Time grid: strictly increasing from 0 to 1, one diagnostic per snapshot.
    let times: Vec<f64> = trajectory.snapshots.iter().map(|(t, _)| *t).collect();
    let grid_ok = times.len() >= 2
        && times.windows(2).all(|w| w[1] > w[0])
        && times[0].abs() < 1e-12
        && (times.last().expect("nonempty") - 1.0).abs() < 1e-12
        && trajectory.diagnostics.len() == trajectory.snapshots.len();
    all_pass &= report(
        "time grid",
        grid_ok,
        &format!("{} snapshots on [0, 1]", times.len()),
    );

    // Containment: every stored curve point inside the fluid domain.
    let mut violation = None;
    'outer: for (t, curve) in &trajectory.snapshots {
        for p in curve.points() {
            if !matches!(tf.domain.contains(p), Ok(true)) {
                violation = Some((*t, *p));
                break 'outer;
            }
        }
    }
    all_pass &= report(
        "containment",
        violation.is_none(),
        &violation
            .map(|(t, p)| format!("containment violated at t = {t}: point ({}, {})", p.x, p.y))
            .unwrap_or_default(),
    );

    // Area conservation along the whole trajectory.
    let area0 = trajectory.snapshots[0].1.signed_area();
    let max_drift = trajectory
        .snapshots
        .iter()
        .map(|(_, c)| (c.signed_area() - area0).abs() / area0)
        .fold(0.0, f64::max);
    all_pass &= report(
        "area conservation",
        max_drift <= 1e-3,
        &format!("max relative drift {max_drift:.3e}"),
    );

    // Final metrics stored in the artifact match the snapshots.
    let final_curve = &trajectory.snapshots.last().expect("nonempty").1;
    let hausdorff = hausdorff_distance(final_curve, &tf.gamma1);
    let drift = (final_curve.signed_area() - area0).abs() / area0;
    let finals_ok = (hausdorff - tf.final_hausdorff).abs() <= 1e-9 * (1.0 + tf.final_hausdorff)
        && (drift - tf.area_drift_rel).abs() <= 1e-9 * (1.0 + tf.area_drift_rel);
    all_pass &= report(
        "final metrics",
        finals_ok,
        &format!("hausdorff {hausdorff:.6e}, area drift {drift:.3e}"),
    );

    // Gronwall certificate, re-marched from the stored fields.
    let u_field = RealizedControlField {
        blended: &blended,
        ramp: ramp.as_ref(),
    };
    let x_field = RealizedPlanField {
        flow: &flow,
        basis: blended.basis(),
        ramp: ramp.as_ref(),
    };
    match verify_gronwall(&trajectory, &x_field, &u_field, tf.delta, Some(&tf.domain)) {
        Ok(r) => {
            all_pass &= report(
                "gronwall certificate",
                r.pass,
                &format!("lhs {:.3e} vs bound {:.3e}", r.lhs, r.rhs),
            );
        }
        Err(e) => {
            all_pass &= report("gronwall certificate", false, &format!("{e}"));
        }
    }

    if all_pass {
        if !args.quiet {
            println!("all invariants hold");
        }
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
