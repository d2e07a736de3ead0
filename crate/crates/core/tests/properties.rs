use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stochms::collocation::{step, step_tangent};
use stochms::conservation::{check_momentum_law, check_two_form_law, two_form_samples};
use stochms::grid::{FieldState, Grid1D, TangentField};
use stochms::nls::{aux_constraint_residual, collocation_field_step, midpoint_step_transport, reconstruct_aux, PsiField};
use stochms::noise::{clamp_increment, truncation_bound, WienerPath, Truncation};
use stochms::solver::{BlockCirculant, SolverConfig};
use stochms::system::{nls_dispersion_system, nls_transport_system, MultisymplecticSystem};
use stochms::tableau::midpoint_tableau;

fn vec_of(len: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, len)
}

fn field(n: usize, m: usize, amp: f64) -> impl Strategy<Value = DMatrix<f64>> {
    vec_of(n * m, amp).prop_map(move |v| DMatrix::from_row_slice(n, m, &v))
}

fn systems(kappa: f64, xi: f64, eps: f64) -> [MultisymplecticSystem; 2] {
    [nls_transport_system(kappa, xi), nls_dispersion_system(kappa, eps)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structure_matrices_are_skew(kappa in -2.0..2.0f64, xi in -1.0..1.0f64, eps in -1.0..1.0f64, z in vec_of(4, 10.0)) {
        for sys in systems(kappa, xi, eps) {
            let scale = z.iter().map(|x| x * x).sum::<f64>() + 1.0;
            for a in [&sys.mm, &sys.k, &sys.ktilde] {
                prop_assert!(a.pair(&z, &z).abs() <= 1e-14 * scale);
            }
        }
    }

    #[test]
    fn noise_matrices_follow_the_model(xi in -1.0..1.0f64, eps in -1.0..1.0f64) {
        let [t, d] = systems(-1.0, xi, eps);
        prop_assert_eq!(t.ktilde.matrix(), &(t.mm.matrix() * xi));
        prop_assert_eq!(d.ktilde.matrix(), &(d.k.matrix() * eps));
    }

    #[test]
    fn quadratic_form_reproduces_hamiltonian(z in vec_of(4, 5.0)) {
        for sys in systems(0.0, 0.1, 0.02) {
            prop_assert!(sys.ham.is_quadratic());
            let (a, at) = sys.ham.quadratic_forms().unwrap();
            let zv = DVector::from_column_slice(&z);
            prop_assert!((zv.dot(&(&a * &zv)) - sys.ham.value(&z)).abs() <= 1e-12);
            prop_assert!((zv.dot(&(&at * &zv)) - sys.ham.stoch_value(&z)).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_is_odd_and_idempotent(x in -10.0..10.0f64, dt in 1e-4..0.9f64, k in 1.0..4.0f64) {
        let u = truncation_bound(dt, k).unwrap();
        let c = clamp_increment(x, u);
        prop_assert_eq!(clamp_increment(c, u), c);
        prop_assert_eq!(clamp_increment(-x, u), -c);
        prop_assert!(c.abs() <= u);
    }

    #[test]
    fn coarsening_adds_raw_increments(raw in vec_of(24, 0.3), factor in prop::sample::select(vec![1usize, 2, 3, 4, 6])) {
        let path = WienerPath::from_raw(0, 0.01, raw.clone(), Truncation::default()).unwrap();
        let coarse = path.coarsen(factor).unwrap();
        for (j, chunk) in raw.chunks(factor).enumerate() {
            prop_assert_eq!(coarse.raw[j], chunk.iter().sum::<f64>());
        }
        let fine_w = path.cumulative();
        let coarse_w = coarse.cumulative();
        prop_assert!((fine_w[24] - coarse_w[24 / factor]).abs() <= 1e-14);
    }

    #[test]
    fn circulant_solve_inverts_apply(taps in vec_of(12, 1.0), rhs in vec_of(16, 1.0)) {
        let mut t0 = DMatrix::from_row_slice(2, 2, &taps[0..4]);
        t0 += DMatrix::identity(2, 2) * 4.0;
        let t1 = DMatrix::from_row_slice(2, 2, &taps[4..8]);
        let t2 = DMatrix::from_row_slice(2, 2, &taps[8..12]) * 0.5;
        let op = BlockCirculant::new(8, 2, vec![(0, t0), (1, t1), (7, t2)]);
        let solver = op.factor().unwrap();
        let mut x = vec![0.0; 16];
        solver.solve(&rhs, &mut x);
        let mut back = vec![0.0; 16];
        op.apply(&x, &mut back);
        for (a, b) in back.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn aux_reconstruction_on_odd_grids(p in vec_of(15, 1.0)) {
        let grid = Grid1D::new(15, 0.3, 0.0).unwrap();
        let psi = PsiField::new(0.0, p.clone(), p.clone());
        let (v, _) = reconstruct_aux(&psi, &grid);
        prop_assert!(aux_constraint_residual(&p, &v, &grid).amax() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_step_is_homogeneous(z in field(12, 4, 1.0), alpha in -3.0..3.0f64, dw in -0.5..0.5f64) {
        let grid = Grid1D::new(12, 0.3, 0.0).unwrap();
        let cfg = SolverConfig::newton(1e-14);
        for sys in systems(0.0, 0.1, 0.02) {
            let a = step(&sys, &grid, &FieldState::new(0.0, z.clone()), dw, 0.02, &midpoint_tableau(), &cfg).unwrap().0;
            let b = step(&sys, &grid, &FieldState::new(0.0, &z * alpha), dw, 0.02, &midpoint_tableau(), &cfg).unwrap().0;
            prop_assert!((&a.values * alpha - &b.values).amax() <= 1e-12 * (1.0 + alpha.abs()));
        }
    }

    #[test]
    fn two_form_law_and_bilinearity(
        z in field(12, 4, 0.7),
        du in field(12, 4, 1.0),
        dv in field(12, 4, 1.0),
        dw in -0.5..0.5f64,
        kappa in prop::sample::select(vec![0.0, -1.0]),
        alpha in 0.1..3.0f64,
        beta in -3.0..-0.1f64,
    ) {
        let grid = Grid1D::new(12, 0.3, 0.0).unwrap();
        let tab = midpoint_tableau();
        for sys in systems(kappa, 0.1, 0.02) {
            let (_, stages, _) = step(&sys, &grid, &FieldState::new(0.0, z.clone()), dw, 0.02, &tab, &SolverConfig::newton(1e-12)).unwrap();
            let tangent = |d: &DMatrix<f64>| step_tangent(&sys, &grid, &stages, &TangentField::new(d.clone()), dw, 0.02, &tab).unwrap();
            let (u, v) = (tangent(&du), tangent(&dv));
            let report = check_two_form_law(&sys, &grid, &stages, &u, &v, &tab).unwrap();
            prop_assert!(report.pass, "{}", report);

            let (us, vs) = (tangent(&(&du * alpha)), tangent(&(&dv * beta)));
            let base = two_form_samples(&sys, &grid, &stages, &u, &v, &tab).unwrap();
            let scaled = two_form_samples(&sys, &grid, &stages, &us, &vs, &tab).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                for (x, y) in [(a.omega, b.omega), (a.kappa, b.kappa), (a.kappatilde, b.kappatilde)] {
                    prop_assert!((x * alpha * beta - y).abs() <= 1e-9 * (1.0 + y.abs()));
                }
            }
        }
    }

    #[test]
    fn momentum_is_conserved_for_quadratic_systems(z in field(12, 4, 1.0), dw in -0.5..0.5f64) {
        let grid = Grid1D::new(12, 0.3, 0.0).unwrap();
        let tab = midpoint_tableau();
        for sys in systems(0.0, 0.1, 0.02) {
            let state = FieldState::new(0.0, z.clone());
            let (next, stages, _) = step(&sys, &grid, &state, dw, 0.02, &tab, &SolverConfig::newton(1e-13)).unwrap();
            let report = check_momentum_law(&sys, &grid, &state, &next, &stages, &tab).unwrap();
            prop_assert!(report.pass, "{}", report);
        }
    }

    #[test]
    fn reduced_transport_matches_generic(p in vec_of(15, 0.8), q in vec_of(15, 0.8), dw in -0.5..0.5f64) {
        let grid = Grid1D::new(15, 0.4, 0.0).unwrap();
        let cfg = SolverConfig::newton(1e-13);
        let psi = PsiField::new(0.0, p, q);
        let reduced = midpoint_step_transport(&psi, dw, 0.02, &grid, -1.0, 0.1, &cfg).unwrap().0;
        let sys = nls_transport_system(-1.0, 0.1);
        let full = collocation_field_step(&sys, &grid, &psi.to_field_state(&grid), dw, 0.02, &midpoint_tableau(), &cfg).unwrap();
        let full = PsiField::from_field_state(&full);
        for (a, b) in reduced.p.iter().chain(&reduced.q).zip(full.p.iter().chain(&full.q)) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
