use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use stfit::material::{scheme_blocks, write_matrix_market, Material, MaterialBlocks, Method};
use stfit::mesh::{product_vanishes, Mesh3, Mesh4, MeshError};
use stfit::resonator::{
    energy_plot_script, error_table, estimate_shift, linear_plot_script, project_initial, run_with, signal_plot_script,
    AnnularMode, ExperimentConfig, InitialDofs, TimeSignal, PROJECTION_POINTS,
};
use stfit::solver::{Scheme, SolverError, State, Stepper};
use stfit::sparse;

use crate::config::{natural_to_rad_per_s, RunConfig, SchemeName, SPEED_OF_LIGHT};
use crate::error::{CliError, Failure, InPhase, Phase};
use crate::report::{self, PhaseTimer};

/// Relative b/e difference below which implicit and leapfrog runs count as identical.
const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

/// Largest number of Δt halvings tried when suggesting an admissible step.
const MAX_HALVINGS: usize = 40;

fn build_mesh3(exp: &ExperimentConfig) -> Result<Mesh3, MeshError> {
    Mesh3::ring(exp.a, exp.b, exp.h, exp.n_r, exp.n_theta, exp.n_z)
}

/// Largest dt/2^k (k ≥ 1) accepted by `passes`.
fn admissible_dt(dt: f64, passes: impl Fn(f64) -> bool) -> Option<f64> {
    std::iter::successors(Some(0.5 * dt), |d| Some(0.5 * d)).take(MAX_HALVINGS).find(|&d| passes(d))
}

/// Extrudes over three intervals; on a causality failure prints the largest halved Δt that
/// would pass.
fn extrude(mesh3: &Mesh3, dt: f64, omega: f64) -> Result<Mesh4, MeshError> {
    Mesh4::extrude(mesh3, dt, 3, omega).inspect_err(|e| {
        if matches!(e, MeshError::NotTimelike { .. } | MeshError::NotSpacelike { .. }) {
            if let Some(d) = admissible_dt(dt, |d| Mesh4::extrude(mesh3, d, 3, omega).is_ok()) {
                eprintln!(
                    "hint: dt = {:.6e} s ({d:.6e} in natural units) passes the causality check",
                    d / SPEED_OF_LIGHT
                );
            }
        }
    })
}

fn nilpotency_holds(m4: &Mesh4) -> bool {
    let m3 = &m4.mesh3;
    product_vanishes(&m3.curl(), &m3.gradient())
        && product_vanishes(&m3.divergence(), &m3.curl())
        && (0..3).all(|k| product_vanishes(&m4.incidence(k + 1), &m4.incidence(k)))
}

fn units(exp: &ExperimentConfig, steps: usize) -> Value {
    json!({
        "dt_natural": exp.time_step(),
        "dt_s": exp.time_step() / SPEED_OF_LIGHT,
        "omega_natural": exp.omega,
        "omega_rad_per_s": natural_to_rad_per_s(exp.omega),
        "rim_speed": (exp.b * exp.omega).tanh(),
        "steps": steps,
    })
}

fn say(text: &str) {
    print!("{text}");
}

pub fn mesh(config: &RunConfig) -> Result<(), Failure> {
    let mut timer = PhaseTimer::default();
    let exp = config.experiment().in_phase(Phase::Config)?;
    let mesh3 = timer.time(Phase::Mesh, || build_mesh3(&exp)).in_phase(Phase::Mesh)?;
    let m4 = timer.time(Phase::Mesh, || extrude(&mesh3, exp.time_step(), exp.omega)).in_phase(Phase::Mesh)?;
    if !timer.time(Phase::SelfCheck, || nilpotency_holds(&m4)) {
        return Err(CliError::SelfCheck("incidence products do not vanish".into())).in_phase(Phase::SelfCheck);
    }
    let out = &config.output;
    report::create_dir(out).in_phase(Phase::Output)?;
    let mut json_bytes = Vec::new();
    mesh3.write_json(&mut json_bytes).expect("writing to memory cannot fail");
    report::write_file(&out.join("mesh.json"), json_bytes).in_phase(Phase::Output)?;
    let mut vtk = Vec::new();
    mesh3.write_vtk(&mut vtk).map_err(CliError::Write).in_phase(Phase::Output)?;
    report::write_file(&out.join("mesh.vtk"), vtk).in_phase(Phase::Output)?;

    let summary = json!({
        "metadata": report::metadata("mesh", config.deterministic, &timer),
        "geometry_mm": {"a": 1e3 * exp.a, "b": 1e3 * exp.b, "h": 1e3 * exp.h},
        "divisions": {"n_r": exp.n_r, "n_theta": exp.n_theta, "n_z": exp.n_z},
        "counts": report::to_value(&m4.summary()),
        "units": units(&exp, exp.steps()),
        "self_check": {"incidence_nilpotent": true},
        "files": ["mesh.json", "mesh.vtk", "summary.json"],
    });
    report::write_json(&out.join("summary.json"), &summary).in_phase(Phase::Output)?;
    say(&report::to_text(&summary));
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum ShiftOutcome {
    Value {
        t0_natural: f64,
        delta_omega_natural: f64,
        delta_omega_rad_per_s: f64,
        expected_natural: f64,
        expected_rad_per_s: f64,
        relative_error: f64,
        refined: bool,
    },
    Failed {
        reason: String,
    },
    NotApplicable {
        reason: String,
    },
}

impl ShiftOutcome {
    fn measure(signal: &TimeSignal, carrier: f64, m: u32, omega: f64, refine: bool) -> Self {
        if m == 0 {
            return Self::NotApplicable { reason: "m = 0 has no rotational splitting".into() };
        }
        if omega == 0.0 {
            return Self::NotApplicable { reason: "no rotation".into() };
        }
        match estimate_shift(signal, carrier, refine) {
            Ok(est) => {
                let measured = est.delta_omega();
                let expected = f64::from(m) * omega;
                Self::Value {
                    t0_natural: est.t0,
                    delta_omega_natural: measured,
                    delta_omega_rad_per_s: natural_to_rad_per_s(measured),
                    expected_natural: expected,
                    expected_rad_per_s: natural_to_rad_per_s(expected),
                    relative_error: (measured - expected).abs() / expected,
                    refined: est.refined.is_some(),
                }
            }
            Err(e) => Self::Failed { reason: e.to_string() },
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
enum Stability {
    Stable { relative_energy_drift: f64 },
    Diverged { step: usize, message: String },
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum Equivalence {
    LeapfrogEquivalent { steps: usize, max_relative_difference: f64 },
    Differs { steps: usize, max_relative_difference: f64 },
    NotApplicable { reason: String },
}

/// Runs implicit and leapfrog stepping side by side from the same start.
fn leapfrog_equivalence(
    m4: &Mesh4,
    blocks: &MaterialBlocks,
    init: &InitialDofs,
    steps: usize,
) -> Result<Equivalence, CliError> {
    if m4.omega != 0.0 {
        return Ok(Equivalence::NotApplicable { reason: "rotating mesh".into() });
    }
    let curl = sparse::to_f64(&m4.mesh3.curl());
    let pec = &m4.mesh3.boundary_edge;
    let leapfrog = match Stepper::new(Scheme::Leapfrog, blocks, &curl, pec) {
        Ok(s) => s,
        Err(SolverError::CrossBlocks { max }) => {
            return Ok(Equivalence::NotApplicable {
                reason: format!("coupling blocks do not vanish (largest entry {max:e})"),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let implicit = Stepper::new(Scheme::Implicit, blocks, &curl, pec)?;
    let start = State::start(init.b0.clone(), init.e_half.clone(), &curl, pec, m4.dt)?;
    let (mut a, mut b) = (start.clone(), start);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        a = implicit.step(&a)?;
        b = leapfrog.step(&b)?;
        let scale = b.b_curr.iter().chain(&b.e_half).fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a.b_curr.iter().zip(&b.b_curr).chain(a.e_half.iter().zip(&b.e_half));
        let diff = diff.fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst = worst.max(diff / scale.max(f64::MIN_POSITIVE));
    }
    Ok(if worst <= EQUIVALENCE_TOLERANCE {
        Equivalence::LeapfrogEquivalent { steps, max_relative_difference: worst }
    } else {
        Equivalence::Differs { steps, max_relative_difference: worst }
    })
}

pub struct SimulateOptions {
    pub matrix_market: bool,
    pub equivalence_steps: usize,
}

pub fn simulate(config: &RunConfig, options: &SimulateOptions) -> Result<(), Failure> {
    let mut timer = PhaseTimer::default();
    let exp = config.experiment().in_phase(Phase::Config)?;
    let mesh3 = timer.time(Phase::Mesh, || build_mesh3(&exp)).in_phase(Phase::Mesh)?;
    let m4 = timer.time(Phase::Mesh, || extrude(&mesh3, exp.time_step(), exp.omega)).in_phase(Phase::Mesh)?;
    let materials = vec![Material::VACUUM; mesh3.n_volumes()];
    let blocks =
        timer.time(Phase::Assembly, || scheme_blocks(&m4, &materials, exp.method)).in_phase(Phase::Assembly)?;
    let mode = timer.time(Phase::Mode, || AnnularMode::new(exp.m, exp.a, exp.b, exp.h)).in_phase(Phase::Mode)?;
    let init = timer
        .time(Phase::Projection, || project_initial(&mode, &m4, exp.excitation, PROJECTION_POINTS))
        .in_phase(Phase::Projection)?;
    let equivalence = timer
        .time(Phase::SelfCheck, || leapfrog_equivalence(&m4, &blocks, &init, options.equivalence_steps))
        .in_phase(Phase::SelfCheck)?;
    let carrier = mode.omega;
    let mode_k = mode.k;
    let run = timer.time(Phase::Stepping, || run_with(&exp, &m4, &blocks, mode, init)).in_phase(Phase::Stepping)?;

    let (shift, stability) = match run.diverged_at {
        Some(step) => (
            ShiftOutcome::NotApplicable { reason: "run diverged".into() },
            Stability::Diverged { step, message: format!("diverged at step {step}") },
        ),
        None => (
            timer
                .time(Phase::Analysis, || ShiftOutcome::measure(&run.signal, carrier, exp.m, exp.omega, config.refine)),
            Stability::Stable { relative_energy_drift: run.energy.relative_drift() },
        ),
    };

    let out = &config.output;
    report::create_dir(out).in_phase(Phase::Output)?;
    let mut files = vec!["signal.csv", "energy.csv", "signal.gp", "energy.gp", "report.json", "report.txt"];
    let mut signal_csv = Vec::new();
    run.signal.write_csv(&mut signal_csv, carrier).map_err(CliError::Write).in_phase(Phase::Output)?;
    report::write_file(&out.join("signal.csv"), signal_csv).in_phase(Phase::Output)?;
    let mut energy_csv = Vec::new();
    run.energy.write_csv(&mut energy_csv).map_err(CliError::Write).in_phase(Phase::Output)?;
    report::write_file(&out.join("energy.csv"), energy_csv).in_phase(Phase::Output)?;
    report::write_file(&out.join("signal.gp"), signal_plot_script("signal.csv", "signal.png"))
        .in_phase(Phase::Output)?;
    report::write_file(&out.join("energy.gp"), energy_plot_script("energy.csv", "energy.png"))
        .in_phase(Phase::Output)?;
    if options.matrix_market {
        let dir = out.join("matrices");
        report::create_dir(&dir).in_phase(Phase::Output)?;
        for (name, matrix) in blocks.named() {
            write_matrix_market(&dir.join(format!("{name}.mtx")), matrix).in_phase(Phase::Output)?;
        }
        files.push("matrices/");
    }

    let nnz: BTreeMap<&str, usize> = blocks.named().iter().map(|(name, m)| (*name, m.nnz())).collect();
    let report = json!({
        "metadata": report::metadata("simulate", config.deterministic, &timer),
        "config": config_echo(config),
        "units": units(&exp, exp.steps()),
        "mode": {"m": exp.m, "wavenumber": mode_k, "carrier_natural": carrier,
                 "carrier_rad_per_s": natural_to_rad_per_s(carrier)},
        "mesh": report::to_value(&m4.summary()),
        "matrices": {"edges": run.n_edges, "faces": run.n_faces, "block_nnz": nnz},
        "probe": {"position": run.probe, "samples": run.signal.values.len()},
        "shift": report::to_value(&shift),
        "stability": report::to_value(&stability),
        "leapfrog_equivalence": report::to_value(&equivalence),
        "files": files,
    });
    report::write_json(&out.join("report.json"), &report).in_phase(Phase::Output)?;
    let text = report::to_text(&report);
    report::write_file(&out.join("report.txt"), &text).in_phase(Phase::Output)?;
    say(&text);
    Ok(())
}

pub fn analyze(config: &RunConfig, signal_path: &Path, carrier: Option<f64>) -> Result<(), Failure> {
    let timer = PhaseTimer::default();
    let exp = config.experiment().in_phase(Phase::Config)?;
    let text =
        std::fs::read_to_string(signal_path).map_err(|e| CliError::io(signal_path, e)).in_phase(Phase::Analysis)?;
    let signal = TimeSignal::read_csv(&text).in_phase(Phase::Analysis)?;
    let carrier = match carrier {
        Some(c) => c,
        None => AnnularMode::new(exp.m, exp.a, exp.b, exp.h).in_phase(Phase::Mode)?.omega,
    };
    let estimate = estimate_shift(&signal, carrier, config.refine).in_phase(Phase::Analysis)?;
    let measured = estimate.delta_omega();
    let mut report = json!({
        "metadata": report::metadata("analyze", config.deterministic, &timer),
        "signal": {
            "file": signal_path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "samples": signal.values.len(),
            "duration_natural": signal.duration(),
        },
        "carrier_natural": carrier,
        "estimate": {
            "t0_natural": estimate.t0,
            "from_null_natural": estimate.from_null,
            "refined_natural": estimate.refined,
            "delta_omega_natural": measured,
            "delta_omega_rad_per_s": natural_to_rad_per_s(measured),
        },
    });
    if exp.m > 0 && exp.omega > 0.0 {
        let expected = f64::from(exp.m) * exp.omega;
        report["comparison"] = json!({
            "m": exp.m,
            "expected_natural": expected,
            "relative_error": (measured - expected).abs() / expected,
        });
    }
    let out = &config.output;
    report::create_dir(out).in_phase(Phase::Output)?;
    report::write_json(&out.join("analysis.json"), &report).in_phase(Phase::Output)?;
    say(&report::to_text(&report));
    Ok(())
}

pub fn table(config: &RunConfig) -> Result<(), Failure> {
    let exp = config.experiment().in_phase(Phase::Config)?;
    let sweep = &config.table;
    if sweep.modes.is_empty() || sweep.rim_speeds.is_empty() || sweep.methods.is_empty() {
        return Err(CliError::Config("table needs at least one mode, rim speed and method".into()))
            .in_phase(Phase::Config);
    }
    if let Some(v) = sweep.rim_speeds.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return Err(CliError::Config(format!("rim speed must lie in [0, 1), got {v}"))).in_phase(Phase::Config);
    }
    let out = &config.output;
    report::create_dir(out).in_phase(Phase::Output)?;
    for &method in &sweep.methods {
        let mut timer = PhaseTimer::default();
        let base = ExperimentConfig { method, ..exp.clone() };
        let table = timer.time(Phase::Stepping, || error_table(&base, &sweep.modes, &sweep.rim_speeds, config.refine));
        let name = method_name(method);
        let report = json!({
            "metadata": report::metadata("table", config.deterministic, &timer),
            "scheme": SchemeName(exp.scheme).to_string(),
            "table": report::to_value(&table),
        });
        report::write_json(&out.join(format!("table_{name}.json")), &report).in_phase(Phase::Output)?;
        let text = table.to_text();
        report::write_file(&out.join(format!("table_{name}.txt")), &text).in_phase(Phase::Output)?;
        let data = format!("linear_{name}.dat");
        report::write_file(&out.join(&data), table.plot_data()).in_phase(Phase::Output)?;
        let script = linear_plot_script(&data, &format!("linear_{name}.png"));
        report::write_file(&out.join(format!("linear_{name}.gp")), script).in_phase(Phase::Output)?;
        say(&text);
    }
    Ok(())
}

/// The config as run, minus the output directory so reports do not depend on where they
/// were written.
fn config_echo(config: &RunConfig) -> Value {
    let mut echo = report::to_value(config);
    if let Some(map) = echo.as_object_mut() {
        map.remove("output");
    }
    echo
}

pub fn method_name(method: Method) -> &'static str {
    match method {
        Method::Fit => "fit",
        Method::Fem => "fem",
    }
}
