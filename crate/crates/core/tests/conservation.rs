use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochms::collocation::{step, step_tangent, StageValues, TangentStep};
use stochms::conservation::{
    check_momentum_law, check_two_form_law, momentum_drift, momentum_functional, two_form_residuals, two_form_samples,
    TWO_FORM_TOL,
};
use stochms::grid::{FieldState, Grid1D, TangentField};
use stochms::solver::SolverConfig;
use stochms::system::{nls_dispersion_system, nls_transport_system, MultisymplecticSystem};
use stochms::tableau::{explicit_euler_tableau, gauss2_tableau, midpoint_tableau, TableauPair};
use stochms::Error;

fn random(n: usize, m: usize, amp: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| amp * rng.random_range(-1.0..1.0))
}

struct Propagated {
    stages: StageValues,
    u: TangentStep,
    v: TangentStep,
}

fn propagate(sys: &MultisymplecticSystem, grid: &Grid1D, tab: &TableauPair, width: usize, dw: f64, seed: u64) -> Propagated {
    let n = grid.n_cells;
    let state = FieldState::new(0.0, random(n, width, 0.6, seed));
    let (_, stages, _) = step(sys, grid, &state, dw, 0.02, tab, &SolverConfig::newton(1e-12)).unwrap();
    let u = step_tangent(sys, grid, &stages, &TangentField::new(random(n, width, 1.0, seed + 1)), dw, 0.02, tab).unwrap();
    let v = step_tangent(sys, grid, &stages, &TangentField::new(random(n, width, 1.0, seed + 2)), dw, 0.02, tab).unwrap();
    Propagated { stages, u, v }
}

#[test]
fn two_form_law_holds_for_nonlinear_models() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    for (i, sys) in [nls_transport_system(-1.0, 0.1), nls_dispersion_system(-1.0, 0.02), nls_transport_system(0.0, 0.1)]
        .into_iter()
        .enumerate()
    {
        let pr = propagate(&sys, &grid, &tab, 4, 0.17, 10 * i as u64);
        let report = check_two_form_law(&sys, &grid, &pr.stages, &pr.u, &pr.v, &tab).unwrap();
        assert!(report.pass, "{}: {report}", sys.label);
        assert_eq!(report.per_cell.len(), 32);
    }
}

#[test]
fn two_form_law_holds_for_two_stage_gauss() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = gauss2_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let pr = propagate(&sys, &grid, &tab, 8, -0.21, 40);
    let report = check_two_form_law(&sys, &grid, &pr.stages, &pr.u, &pr.v, &tab).unwrap();
    assert!(report.max_residual <= TWO_FORM_TOL, "{report}");
}

#[test]
fn individual_terms_are_not_trivially_zero() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let pr = propagate(&sys, &grid, &tab, 4, 0.17, 50);
    let samples = two_form_samples(&sys, &grid, &pr.stages, &pr.u, &pr.v, &tab).unwrap();
    let big = |f: fn(&stochms::conservation::TwoFormSample) -> f64| samples.iter().any(|s| f(s).abs() > 1e-3);
    assert!(big(|s| s.omega) && big(|s| s.kappa) && big(|s| s.kappatilde));
}

#[test]
fn non_symplectic_tableau_breaks_the_law() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let tab = explicit_euler_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let pr = propagate(&sys, &grid, &tab, 4, 0.17, 60);
    assert!(matches!(
        check_two_form_law(&sys, &grid, &pr.stages, &pr.u, &pr.v, &tab),
        Err(Error::NotApplicable(_))
    ));
    let report = two_form_residuals(&sys, &grid, &pr.stages, &pr.u, &pr.v, &tab).unwrap();
    assert!(report.max_residual > 1e-4, "{report}");
}

#[test]
fn identical_tangents_give_zero() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let sys = nls_dispersion_system(-1.0, 0.02);
    let pr = propagate(&sys, &grid, &tab, 4, 0.3, 70);
    let report = check_two_form_law(&sys, &grid, &pr.stages, &pr.u, &pr.u, &tab).unwrap();
    assert_eq!(report.max_residual, 0.0);
}

#[test]
fn momentum_is_conserved_for_quadratic_models() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let cfg = SolverConfig::newton(1e-13);
    for sys in [nls_transport_system(0.0, 0.1), nls_dispersion_system(0.0, 0.02)] {
        let mut state = FieldState::new(0.0, random(32, 4, 1.0, 80));
        let p0 = momentum_functional(&sys, &grid, "box", &tab, &state).unwrap();
        assert!(p0.abs() > 1e-2);
        for (k, dw) in [0.1, -0.25, 0.05, 0.3].into_iter().enumerate() {
            let (next, stages, _) = step(&sys, &grid, &state, dw, 0.02, &tab, &cfg).unwrap();
            let report = check_momentum_law(&sys, &grid, &state, &next, &stages, &tab).unwrap();
            assert!(report.pass, "{} step {k}: {report}", sys.label);
            let delta = report.after.unwrap() - report.before.unwrap();
            let local: f64 = report.per_cell.iter().sum();
            assert!((local - delta).abs() <= 1e-10, "{} step {k}: local sum {local:e}", sys.label);
            state = next;
        }
        let p1 = momentum_functional(&sys, &grid, "box", &tab, &state).unwrap();
        assert!((p1 - p0).abs() <= 1e-10, "{}: {p0} -> {p1}", sys.label);
    }
}

#[test]
fn momentum_is_conserved_by_the_stage_engine() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = gauss2_tableau();
    let sys = nls_transport_system(0.0, 0.1);
    let state = FieldState::new(0.0, random(16, 8, 1.0, 90));
    let (next, stages, _) = step(&sys, &grid, &state, 0.2, 0.02, &tab, &SolverConfig::newton(1e-13)).unwrap();
    let report = check_momentum_law(&sys, &grid, &state, &next, &stages, &tab).unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn momentum_check_refuses_nonlinear_hamiltonians() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let state = FieldState::new(0.0, random(16, 4, 0.5, 100));
    let (next, stages, _) = step(&sys, &grid, &state, 0.2, 0.02, &tab, &SolverConfig::newton(1e-13)).unwrap();
    assert!(matches!(
        check_momentum_law(&sys, &grid, &state, &next, &stages, &tab),
        Err(Error::NotApplicable(_))
    ));
    let drift = momentum_drift(&sys, &grid, &state, &next, &stages, &tab).unwrap();
    assert!(drift.before.is_some());
}
