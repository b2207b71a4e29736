//! Static schemes against an independently coded staggered-grid FDTD.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stfit::material::{scheme_blocks, Material, Method};
use stfit::mesh::{Mesh3, Mesh4};
use stfit::solver::{Scheme, State, Stepper};
use stfit::sparse;

fn max_mismatch_over_run(scheme: Scheme, n: [usize; 3], extent: [f64; 3], dt: f64, steps: usize) -> f64 {
    let mesh3 = Mesh3::cartesian_box(extent[0], extent[1], extent[2], n[0], n[1], n[2]).unwrap();
    let m4 = Mesh4::extrude(&mesh3, dt, 3, 0.0).unwrap();
    let blocks = scheme_blocks(&m4, &vec![Material::VACUUM; mesh3.n_volumes()], Method::Fit).unwrap();
    let curl = sparse::to_f64(&mesh3.curl());
    let stepper = Stepper::new(scheme, &blocks, &curl, &mesh3.boundary_edge).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b0: Vec<f64> = (0..mesh3.n_faces()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e: Vec<f64> = (0..mesh3.n_edges()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut state = State::start(b0.clone(), e, &curl, &mesh3.boundary_edge, dt).unwrap();

    let mut yee = common::Yee::new(n, extent, dt);
    let edges = common::edge_slots(&mesh3, &yee);
    let faces = common::face_slots(&mesh3, &yee);
    common::load_dofs(&mut yee, &edges, &faces, &b0, &state.e_half);
    yee.update_b();
    let mut worst = common::max_dof_mismatch(&yee, &edges, &faces, &state.b_curr, &state.e_half);
    for _ in 0..steps {
        state = stepper.step(&state).unwrap();
        yee.update_e();
        yee.update_b();
        worst = worst.max(common::max_dof_mismatch(&yee, &edges, &faces, &state.b_curr, &state.e_half));
    }
    worst
}

#[test]
fn implicit_scheme_reproduces_fdtd_on_a_cube() {
    assert!(max_mismatch_over_run(Scheme::Implicit, [3, 3, 3], [1.0; 3], 0.2, 100) < 1e-12);
}

#[test]
fn implicit_scheme_reproduces_fdtd_on_an_anisotropic_box() {
    assert!(max_mismatch_over_run(Scheme::Implicit, [5, 2, 4], [2.0, 0.7, 1.1], 0.1, 100) < 1e-12);
}

#[test]
fn leapfrog_reproduces_fdtd() {
    assert!(max_mismatch_over_run(Scheme::Leapfrog, [4, 3, 2], [1.0, 1.3, 0.8], 0.15, 100) < 1e-12);
}

#[test]
fn the_oracle_detects_a_wrong_time_step() {
    // Guard against a vacuous mapping: a scheme built for another Δt must disagree.
    let (n, extent) = ([3, 3, 3], [1.0; 3]);
    let mesh3 = Mesh3::cartesian_box(extent[0], extent[1], extent[2], n[0], n[1], n[2]).unwrap();
    let m4 = Mesh4::extrude(&mesh3, 0.21, 3, 0.0).unwrap();
    let blocks = scheme_blocks(&m4, &vec![Material::VACUUM; mesh3.n_volumes()], Method::Fit).unwrap();
    let curl = sparse::to_f64(&mesh3.curl());
    let stepper = Stepper::new(Scheme::Implicit, &blocks, &curl, &mesh3.boundary_edge).unwrap();
    let b0 = vec![0.0; mesh3.n_faces()];
    let e: Vec<f64> = (0..mesh3.n_edges()).map(|k| (k as f64 * 0.37).sin()).collect();
    let mut state = State::start(b0.clone(), e, &curl, &mesh3.boundary_edge, 0.2).unwrap();
    let mut yee = common::Yee::new(n, extent, 0.2);
    let edges = common::edge_slots(&mesh3, &yee);
    let faces = common::face_slots(&mesh3, &yee);
    common::load_dofs(&mut yee, &edges, &faces, &b0, &state.e_half);
    yee.update_b();
    for _ in 0..10 {
        state = stepper.step(&state).unwrap();
        yee.update_e();
        yee.update_b();
    }
    assert!(common::max_dof_mismatch(&yee, &edges, &faces, &state.b_curr, &state.e_half) > 1e-3);
}
