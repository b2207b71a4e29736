//! Low-speed behaviour of the simulated beat on the desk-scale resonator.

use stfit::material::Method;
use stfit::resonator::{estimate_shift, omega_from_rim_speed, run_cell, run_experiment, Excitation, ExperimentConfig};

#[test]
fn shift_is_linear_in_the_azimuthal_order() {
    let omega = omega_from_rim_speed(0.0031, 10e-3);
    let points: Vec<(f64, f64)> = (1..=3)
        .map(|m| {
            let r = run_cell(&ExperimentConfig::desk(m, omega, Method::Fit), true).unwrap();
            (f64::from(m), r.estimated)
        })
        .collect();
    // Least-squares slope of a line through the origin.
    let slope = points.iter().map(|(m, d)| m * d).sum::<f64>() / points.iter().map(|(m, _)| m * m).sum::<f64>();
    assert!((slope / omega - 1.0).abs() < 0.10, "slope {slope} vs Ω {omega}");
}

#[test]
fn stationary_and_rotating_excitations_agree_at_low_speed() {
    let omega = omega_from_rim_speed(0.0031, 10e-3);
    let shift = |excitation| {
        let config = ExperimentConfig { excitation, ..ExperimentConfig::desk(2, omega, Method::Fit) };
        let run = run_experiment(&config).unwrap();
        estimate_shift(&run.signal, run.mode.omega, true).unwrap().delta_omega()
    };
    let (stationary, rotating) = (shift(Excitation::Stationary), shift(Excitation::Rotating));
    assert!((stationary - rotating).abs() < 0.01 * stationary, "{stationary} vs {rotating}");
}

#[test]
fn static_resonator_shows_no_beat() {
    let config = ExperimentConfig { n_steps: Some(3000), ..ExperimentConfig::desk(2, 0.0, Method::Fit) };
    let run = run_experiment(&config).unwrap();
    assert!(estimate_shift(&run.signal, run.mode.omega, false).is_err());
    assert!(run.energy.relative_drift() < 1e-10);
}
