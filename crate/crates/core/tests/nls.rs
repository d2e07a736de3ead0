use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochms::conservation::{edge_density, global_density, global_momentum};
use stochms::grid::Grid1D;
use stochms::nls::{
    aux_constraint_residual, collocation_field_step, exact_field, initial_condition, max_difference, midpoint_step_dispersion,
    midpoint_step_transport, peak_position, reconstruct_aux, stepper_registry, PsiField, SolitonParams, StepperSpec,
};
use stochms::noise::{sample_path, Truncation};
use stochms::solver::SolverConfig;
use stochms::system::{nls_dispersion_system, nls_transport_system, NlsParams};
use stochms::tableau::midpoint_tableau;
use stochms::Error;

fn random_psi(n: usize, amp: f64, seed: u64) -> PsiField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    let q = (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
    PsiField::new(0.0, p, q)
}

fn tight() -> SolverConfig {
    SolverConfig::newton(1e-13)
}

#[test]
fn aux_reconstruction_satisfies_constraint() {
    for n in [63, 64] {
        let grid = Grid1D::new(n, 0.3, 0.0).unwrap();
        let x = grid.nodes();
        let len = grid.length();
        let p: Vec<f64> = x.iter().map(|x| (2.0 * std::f64::consts::PI * 3.0 * x / len).sin()).collect();
        let q: Vec<f64> = x.iter().map(|x| (2.0 * std::f64::consts::PI * x / len).cos()).collect();
        let psi = PsiField::new(0.0, p.clone(), q.clone());
        let (v, w) = reconstruct_aux(&psi, &grid);
        assert!(aux_constraint_residual(&p, &v, &grid).amax() < 1e-12);
        assert!(aux_constraint_residual(&q, &w, &grid).amax() < 1e-12);
    }
}

#[test]
fn reduced_steps_match_the_four_component_scheme() {
    let grid = Grid1D::new(64, 0.5, 0.0).unwrap();
    let tab = midpoint_tableau();
    let path = sample_path(3, 0.02, 10, Truncation::default()).unwrap();
    for (label, sys) in [("transport", nls_transport_system(-1.0, 0.1)), ("dispersion", nls_dispersion_system(-1.0, 0.02))] {
        let mut reduced = exact_field(&grid, 0.0, 0.0, &SolitonParams { center: 16.0, ..Default::default() });
        let mut full = reduced.to_field_state(&grid);
        for &dw in path.increments() {
            reduced = match label {
                "transport" => midpoint_step_transport(&reduced, dw, 0.02, &grid, -1.0, 0.1, &tight()),
                _ => midpoint_step_dispersion(&reduced, dw, 0.02, &grid, -1.0, 0.02, &tight()),
            }
            .unwrap()
            .0;
            full = collocation_field_step(&sys, &grid, &full, dw, 0.02, &tab, &tight()).unwrap();
        }
        let err = max_difference(&reduced, &PsiField::from_field_state(&full));
        assert!(err <= 1e-8, "{label}: {err:e}");
    }
}

#[test]
fn registry_steppers_agree() {
    let grid = Grid1D::new(48, 0.5, 0.0).unwrap();
    let psi = exact_field(&grid, 0.0, 0.0, &SolitonParams { center: 12.0, ..Default::default() });
    let spec = |model: &str| StepperSpec {
        model: model.into(),
        params: NlsParams::default(),
        tableau: midpoint_tableau(),
    };
    let reg = stepper_registry();
    for model in ["nls-transport", "nls-dispersion", "nls-deterministic"] {
        let a = (reg.get("reduced").unwrap())(&spec(model)).unwrap();
        let b = (reg.get("collocation").unwrap())(&spec(model)).unwrap();
        let (pa, _) = a.step(&psi, 0.07, 0.02, &grid, &tight()).unwrap();
        let (pb, _) = b.step(&psi, 0.07, 0.02, &grid, &tight()).unwrap();
        assert!(max_difference(&pa, &pb) <= 1e-10, "{model}");
    }
    assert!(matches!(reg.get("rk4"), Err(Error::UnknownName { .. })));
    assert!((reg.get("reduced").unwrap())(&spec("kdv")).is_err());
}

#[test]
fn newton_and_fixed_point_agree() {
    let grid = Grid1D::new(40, 0.25, 0.0).unwrap();
    let psi = random_psi(40, 0.8, 1);
    let fp = SolverConfig {
        newton_fallback: false,
        ..SolverConfig::default().with_tol(1e-13)
    };
    let (a, sa) = midpoint_step_transport(&psi, 0.1, 0.02, &grid, -1.0, 0.1, &fp).unwrap();
    let (b, sb) = midpoint_step_transport(&psi, 0.1, 0.02, &grid, -1.0, 0.1, &tight()).unwrap();
    assert_eq!(sa.solver.to_string(), "fixed-point");
    assert_eq!(sb.solver.to_string(), "newton");
    assert!(max_difference(&a, &b) <= 1e-12);
}

#[test]
fn edge_density_is_conserved() {
    let grid = Grid1D::new(64, 0.5, 0.0).unwrap();
    let mut psi = random_psi(64, 0.7, 2);
    let d0 = edge_density(&psi, &grid);
    for dw in [0.2, -0.1, 0.05] {
        psi = midpoint_step_dispersion(&psi, dw, 0.02, &grid, -1.0, 0.02, &tight()).unwrap().0;
        psi = midpoint_step_transport(&psi, dw, 0.02, &grid, -1.0, 0.1, &tight()).unwrap().0;
    }
    assert!((psi.t - 0.12).abs() < 1e-14);
    assert!((edge_density(&psi, &grid) - d0).abs() <= 1e-12);
    assert!((global_density(&psi, &grid) - d0).abs() > 1e-6);
}

#[test]
fn nonpositive_time_step_is_rejected() {
    let grid = Grid1D::new(16, 0.5, 0.0).unwrap();
    let psi = random_psi(16, 0.7, 3);
    let back = midpoint_step_dispersion(&psi, -0.2, -0.02, &grid, -1.0, 0.02, &tight());
    assert!(matches!(back, Err(Error::Config(_))));
}

#[test]
fn soliton_translates_with_the_noise() {
    let grid = Grid1D::new(400, 0.1, 0.0).unwrap();
    let params = SolitonParams::default();
    let path = sample_path(11, 0.02, 50, Truncation::default()).unwrap();
    let w = path.cumulative();
    let mut psi = initial_condition(&grid);
    for &dw in path.increments() {
        psi = midpoint_step_transport(&psi, dw, 0.02, &grid, -1.0, 0.1, &SolverConfig::default()).unwrap().0;
    }
    let t = psi.t;
    let expected = params.center + params.speed * t + params.xi * w[w.len() - 1];
    let peak = peak_position(&psi, &grid);
    assert!((peak - expected).abs() < 0.02, "peak {peak} expected {expected}");
    let exact = exact_field(&grid, t, w[w.len() - 1], &params);
    assert!(max_difference(&psi, &exact) < 5e-3);
}

#[test]
fn invariants_of_the_initial_soliton() {
    let grid = Grid1D::new(400, 0.1, 0.0).unwrap();
    let psi = initial_condition(&grid);
    assert!((global_density(&psi, &grid) - 2f64.sqrt()).abs() < 1e-6);
    assert!((global_momentum(&psi, &grid) - 2f64.sqrt() / 20.0).abs() < 1e-4);
}

#[test]
fn mismatched_grid_is_rejected() {
    let grid = Grid1D::new(32, 0.5, 0.0).unwrap();
    let psi = PsiField::zeros(0.0, 31);
    assert!(matches!(
        midpoint_step_transport(&psi, 0.0, 0.02, &grid, -1.0, 0.1, &tight()),
        Err(Error::Dimension(_))
    ));
}
