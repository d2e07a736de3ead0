use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochms::collocation::{step, step_tangent, step_with, StageLayout};
use stochms::grid::{FieldState, Grid1D, TangentField};
use stochms::solver::SolverConfig;
use stochms::system::{nls_deterministic_system, nls_dispersion_system, nls_transport_system, MultisymplecticSystem};
use stochms::tableau::{gauss2_tableau, midpoint_tableau, TableauPair};
use stochms::Error;

fn random_field(n: usize, m: usize, amp: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| amp * rng.random_range(-1.0..1.0))
}

fn tight() -> SolverConfig {
    SolverConfig::newton(1e-13)
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Dense one-step map of the midpoint scheme for a quadratic system, built
/// from circulant averaging and difference matrices.
fn dense_midpoint(sys: &MultisymplecticSystem, grid: &Grid1D, z: &DMatrix<f64>, dt: f64, dw: f64) -> DMatrix<f64> {
    let (n, m) = (grid.n_cells, sys.m);
    let mut ax = DMatrix::zeros(n, n);
    let mut dx = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        ax[(i, i)] += 0.5;
        ax[(i, j)] += 0.5;
        dx[(i, i)] -= 1.0 / grid.dx;
        dx[(i, j)] += 1.0 / grid.dx;
    }
    let (a, at) = sys.ham.quadratic_forms().unwrap();
    let q = (a * dt + at * dw) * 2.0;
    let kc = sys.k.matrix() * dt + sys.ktilde.matrix() * dw;
    let lhs_u = ax.kronecker(sys.mm.matrix()) + dx.kronecker(&kc) * 0.5 - ax.kronecker(&q) * 0.5;
    let lhs_z = -ax.kronecker(sys.mm.matrix()) + dx.kronecker(&kc) * 0.5 - ax.kronecker(&q) * 0.5;
    let zf = DVector::from_iterator(n * m, (0..n).flat_map(|i| (0..m).map(move |k| z[(i, k)])));
    let rhs = -(lhs_z * zf);
    let u = lhs_u.lu().solve(&rhs).unwrap();
    DMatrix::from_row_slice(n, m, u.as_slice())
}

#[test]
fn zero_field_is_fixed() {
    let grid = Grid1D::new(16, 0.5, 0.0).unwrap();
    let sys = nls_transport_system(-1.0, 0.1);
    let mut s = FieldState::zeros(0.0, 16, 4);
    for _ in 0..3 {
        s = step(&sys, &grid, &s, 0.3, 0.02, &midpoint_tableau(), &SolverConfig::default()).unwrap().0;
    }
    assert_eq!(s.values.amax(), 0.0);
}

#[test]
fn deterministic_step_ignores_increment() {
    let grid = Grid1D::new(16, 0.5, 0.0).unwrap();
    let sys = nls_deterministic_system(-1.0);
    let s = FieldState::new(0.0, random_field(16, 4, 0.5, 1));
    let a = step(&sys, &grid, &s, 0.0, 0.02, &midpoint_tableau(), &tight()).unwrap().0;
    let b = step(&sys, &grid, &s, 0.7, 0.02, &midpoint_tableau(), &tight()).unwrap().0;
    assert!(max_diff(&a.values, &b.values) <= 1e-12);
}

#[test]
fn linear_step_matches_dense_solve() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    for sys in [nls_transport_system(0.0, 0.1), nls_dispersion_system(0.0, 0.02)] {
        let z = random_field(16, 4, 1.0, 2);
        let s = FieldState::new(0.0, z.clone());
        let (next, _, report) = step(&sys, &grid, &s, 0.13, 0.02, &midpoint_tableau(), &SolverConfig::default().with_tol(1e-13)).unwrap();
        let oracle = dense_midpoint(&sys, &grid, &z, 0.02, 0.13);
        let err = max_diff(&next.values, &oracle);
        assert!(err <= 1e-12, "{}: {err:e}", sys.label);
        assert!(report.iterations <= 2, "{report:?}");
    }
}

#[test]
fn linear_step_is_homogeneous() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let sys = nls_deterministic_system(0.0);
    let z = random_field(16, 4, 1.0, 3);
    let a = step(&sys, &grid, &FieldState::new(0.0, z.clone()), 0.0, 0.02, &midpoint_tableau(), &tight()).unwrap().0;
    let b = step(&sys, &grid, &FieldState::new(0.0, &z * 2.5), 0.0, 0.02, &midpoint_tableau(), &tight()).unwrap().0;
    assert!(max_diff(&(&a.values * 2.5), &b.values) <= 1e-12);
}

#[test]
fn stage_relations_hold_after_step() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let sys = nls_dispersion_system(-1.0, 0.02);
    let s = FieldState::new(0.0, random_field(32, 4, 0.7, 4));
    let cfg = SolverConfig::default();
    let (_, stages, report) = step(&sys, &grid, &s, -0.2, 0.02, &midpoint_tableau(), &cfg).unwrap();
    assert!(report.residual_norm <= cfg.tol);
    assert!(stages.relation_residual(&sys, grid.dx) <= cfg.tol);
}

#[test]
fn repeated_steps_are_bit_identical() {
    let grid = Grid1D::new(32, 0.25, 0.0).unwrap();
    let sys = nls_transport_system(-1.0, 0.1);
    let s = FieldState::new(0.0, random_field(32, 4, 0.7, 5));
    let a = step(&sys, &grid, &s, 0.11, 0.02, &midpoint_tableau(), &SolverConfig::default()).unwrap();
    let b = step(&sys, &grid, &s, 0.11, 0.02, &midpoint_tableau(), &SolverConfig::default()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.unknowns, b.1.unknowns);
}

#[test]
fn zero_tangent_stays_zero() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let sys = nls_transport_system(-1.0, 0.1);
    let s = FieldState::new(0.0, random_field(16, 4, 0.5, 6));
    let tab = midpoint_tableau();
    let (_, stages, _) = step(&sys, &grid, &s, 0.1, 0.02, &tab, &tight()).unwrap();
    let t = step_tangent(&sys, &grid, &stages, &TangentField::zeros(16, 4), 0.1, 0.02, &tab).unwrap();
    assert_eq!(t.field.values.amax(), 0.0);
}

#[test]
fn linear_tangent_equals_step_difference() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    for sys in [nls_transport_system(0.0, 0.1), nls_dispersion_system(0.0, 0.02)] {
        let z = random_field(16, 4, 1.0, 7);
        let du = random_field(16, 4, 1.0, 8);
        let (a, stages, _) = step(&sys, &grid, &FieldState::new(0.0, z.clone()), 0.2, 0.02, &tab, &tight()).unwrap();
        let b = step(&sys, &grid, &FieldState::new(0.0, &z + &du), 0.2, 0.02, &tab, &tight()).unwrap().0;
        let t = step_tangent(&sys, &grid, &stages, &TangentField::new(du), 0.2, 0.02, &tab).unwrap();
        assert!(max_diff(&(&b.values - &a.values), &t.field.values) <= 1e-11);
    }
}

#[test]
fn nonlinear_tangent_is_first_order_accurate() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let z = random_field(16, 4, 1.0, 9);
    let du = random_field(16, 4, 1.0, 10);
    let (a, stages, _) = step(&sys, &grid, &FieldState::new(0.0, z.clone()), 0.15, 0.05, &tab, &tight()).unwrap();
    let t = step_tangent(&sys, &grid, &stages, &TangentField::new(du.clone()), 0.15, 0.05, &tab).unwrap();
    let remainder = |h: f64| {
        let b = step(&sys, &grid, &FieldState::new(0.0, &z + &du * h), 0.15, 0.05, &tab, &tight()).unwrap().0;
        (&b.values - &a.values - &t.field.values * h).amax()
    };
    let (r1, r2) = (remainder(1e-3), remainder(1e-4));
    let ratio = r1 / r2;
    assert!(ratio > 50.0 && ratio < 200.0, "remainders {r1:e} {r2:e}");
}

#[test]
fn stage_engine_midpoint_matches_node_engine() {
    let grid = Grid1D::new(24, 0.25, 0.0).unwrap();
    let tab = midpoint_tableau();
    let sys = nls_dispersion_system(-1.0, 0.02);
    let z = random_field(24, 4, 0.8, 11);
    let average = |v: &DMatrix<f64>| DMatrix::from_fn(24, 4, |i, k| 0.5 * (v[(i, k)] + v[((i + 1) % 24, k)]));
    let nodal = step(&sys, &grid, &FieldState::new(0.0, z.clone()), 0.1, 0.02, &tab, &tight()).unwrap().0;
    let staged = step_with("stage", &sys, &grid, &FieldState::new(0.0, average(&z)), 0.1, 0.02, &tab, &tight()).unwrap().0;
    assert!(max_diff(&average(&nodal.values), &staged.values) <= 1e-12);
}

#[test]
fn gauss_stage_engine_converges() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let tab = gauss2_tableau();
    let sys = nls_transport_system(-1.0, 0.1);
    let s = FieldState::new(0.0, random_field(16, 8, 0.5, 12));
    let cfg = SolverConfig::default().with_tol(1e-12);
    let (next, stages, _) = step(&sys, &grid, &s, 0.1, 0.02, &tab, &cfg).unwrap();
    assert_eq!(next.values.shape(), (16, 8));
    assert!(stages.relation_residual(&sys, grid.dx) <= 1e-12);
    let lay = StageLayout { m: 4, s: 2, r: 2 };
    assert_eq!(stages.unknowns.len(), 16 * lay.block());
}

#[test]
fn rejects_bad_inputs() {
    let grid = Grid1D::new(16, 0.25, 0.0).unwrap();
    let sys = nls_transport_system(-1.0, 0.1);
    let s = FieldState::zeros(0.0, 16, 4);
    let mut tab: TableauPair = midpoint_tableau();
    tab.alpha[(0, 0)] = 0.4;
    tab.drift.a[(0, 0)] = 0.5;
    assert!(matches!(
        step(&sys, &grid, &s, 0.1, 0.02, &tab, &SolverConfig::default()),
        Err(Error::Tableau(_))
    ));
    let wrong = FieldState::zeros(0.0, 15, 4);
    assert!(matches!(
        step(&sys, &grid, &wrong, 0.1, 0.02, &midpoint_tableau(), &SolverConfig::default()),
        Err(Error::Dimension(_))
    ));
    assert!(step(&sys, &grid, &s, 0.1, 0.02, &gauss2_tableau(), &SolverConfig::default()).is_err());
}
