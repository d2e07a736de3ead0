//! Built-in validation fixtures with pass/fail outcomes.

use std::fmt;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use stochms::collocation::{default_engine, engine_registry, step, step_tangent};
use stochms::conservation::{momentum_drift, two_form_residuals};
use stochms::grid::{FieldState, Grid1D, TangentField};
use stochms::nalgebra::DMatrix;
use stochms::nls::{exact_field, max_difference, stepper_registry, SolitonParams, StepperSpec};
use stochms::noise::{sample_path, Truncation};
use stochms::solver::SolverConfig;
use stochms::system::{system_registry, validate_system, NlsParams, ValidationOptions};
use stochms::tableau::{check_consistency, check_symplecticity, tableau_registry, TABLEAU_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Fixture grid and step shared by the conservation checks.
pub const FIXTURE_CELLS: usize = 32;
pub const FIXTURE_DX: f64 = 0.25;
pub const FIXTURE_DT: f64 = 0.02;

pub fn check_tableau(name: &str) -> Result<CheckOutcome> {
    let tab = (tableau_registry().get(name)?)();
    let cons = check_consistency(&tab);
    let sym = check_symplecticity(&tab);
    Ok(CheckOutcome {
        name: format!("tableau {name}"),
        pass: cons.pass && sym.pass,
        detail: format!(
            "consistency max {:.1e}, symplecticity max {:.1e} (tol {TABLEAU_TOL:.0e})",
            cons.max_residual(),
            sym.max_residual()
        ),
    })
}

pub fn check_system(model: &str, params: &NlsParams) -> Result<CheckOutcome> {
    let sys = (system_registry().get(model)?)(params);
    let report = validate_system(&sys, &ValidationOptions::default())?;
    Ok(CheckOutcome {
        name: format!("system {model} kappa={}", params.kappa),
        pass: report.pass,
        detail: report.to_string().replace('\n', "; "),
    })
}

fn random_matrix(rng: &mut ChaCha20Rng, n: usize, m: usize, amp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| amp * rng.random_range(-1.0..1.0))
}

/// Worst two-form residual over `steps` steps of a random field carrying two
/// random tangents. Quadratic systems must reach `1e-10`, others `1e-9`.
pub fn check_two_form(model: &str, params: &NlsParams, tableau: &str, steps: usize, seed: u64) -> Result<CheckOutcome> {
    let sys = (system_registry().get(model)?)(params);
    let tab = (tableau_registry().get(tableau)?)();
    let grid = Grid1D::new(FIXTURE_CELLS, FIXTURE_DX, 0.0)?;
    let width = (engine_registry().get(default_engine(&tab))?)().state_width(sys.m, &tab);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = FieldState::new(0.0, random_matrix(&mut rng, FIXTURE_CELLS, width, 0.5));
    let mut u = TangentField::new(random_matrix(&mut rng, FIXTURE_CELLS, width, 1.0));
    let mut v = TangentField::new(random_matrix(&mut rng, FIXTURE_CELLS, width, 1.0));
    let path = sample_path(seed, FIXTURE_DT, steps, Truncation::default())?;
    let solver = SolverConfig::newton(1e-12);
    let tol = if sys.ham.is_quadratic() { 1e-10 } else { 1e-9 };
    let mut worst: f64 = 0.0;
    for &dw in path.increments() {
        let (next, stages, _) = step(&sys, &grid, &state, dw, FIXTURE_DT, &tab, &solver)?;
        let tu = step_tangent(&sys, &grid, &stages, &u, dw, FIXTURE_DT, &tab)?;
        let tv = step_tangent(&sys, &grid, &stages, &v, dw, FIXTURE_DT, &tab)?;
        let report = two_form_residuals(&sys, &grid, &stages, &tu, &tv, &tab)?;
        worst = worst.max(if report.max_residual.is_nan() { f64::INFINITY } else { report.max_residual });
        state = next;
        u = tu.field;
        v = tv.field;
    }
    let symplectic = check_symplecticity(&tab).pass;
    Ok(CheckOutcome {
        name: format!("two-form {model} kappa={} tableau={tableau}", params.kappa),
        pass: symplectic && worst <= tol,
        detail: format!(
            "max relative residual {worst:.2e} over {steps} steps x {FIXTURE_CELLS} cells (tol {tol:.0e}){}",
            if symplectic { "" } else { "; tableau is not symplectic" }
        ),
    })
}

/// Largest per-step drift of the discrete momentum functional.
pub fn check_momentum(model: &str, params: &NlsParams, tableau: &str, steps: usize, seed: u64) -> Result<CheckOutcome> {
    let sys = (system_registry().get(model)?)(params);
    let tab = (tableau_registry().get(tableau)?)();
    let grid = Grid1D::new(FIXTURE_CELLS, FIXTURE_DX, 0.0)?;
    let width = (engine_registry().get(default_engine(&tab))?)().state_width(sys.m, &tab);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = FieldState::new(0.0, random_matrix(&mut rng, FIXTURE_CELLS, width, 1.0));
    let path = sample_path(seed, FIXTURE_DT, steps, Truncation::default())?;
    let solver = SolverConfig::newton(1e-12);
    let mut worst: f64 = 0.0;
    for &dw in path.increments() {
        let (next, stages, _) = step(&sys, &grid, &state, dw, FIXTURE_DT, &tab, &solver)?;
        let report = momentum_drift(&sys, &grid, &state, &next, &stages, &tab)?;
        worst = worst.max(report.max_residual);
        state = next;
    }
    let applicable = sys.ham.is_quadratic() && check_symplecticity(&tab).pass;
    let tol = stochms::conservation::MOMENTUM_TOL;
    Ok(CheckOutcome {
        name: format!("momentum {model} kappa={} tableau={tableau}", params.kappa),
        pass: applicable && worst <= tol,
        detail: format!(
            "max per-step drift {worst:.2e} over {steps} steps (tol {tol:.0e}){}",
            if applicable { "" } else { "; law not applicable" }
        ),
    })
}

/// Reduced steppers against the generic four-component engine, both from
/// soliton data on a 64-node grid.
pub fn check_equivalence(model: &str, params: &NlsParams, steps: usize, seed: u64) -> Result<CheckOutcome> {
    let grid = Grid1D::new(64, 0.5, 0.0)?;
    let spec = StepperSpec {
        model: model.into(),
        params: *params,
        tableau: (tableau_registry().get("midpoint")?)(),
    };
    let reduced = (stepper_registry().get("reduced")?)(&spec)?;
    let generic = (stepper_registry().get("collocation")?)(&spec)?;
    let solver = SolverConfig::newton(1e-13);
    let path = sample_path(seed, FIXTURE_DT, steps, Truncation::default())?;
    let mut a = exact_field(&grid, 0.0, 0.0, &SolitonParams { center: 16.0, ..Default::default() });
    let mut b = a.clone();
    let mut worst: f64 = 0.0;
    for &dw in path.increments() {
        a = reduced.step(&a, dw, FIXTURE_DT, &grid, &solver)?.0;
        b = generic.step(&b, dw, FIXTURE_DT, &grid, &solver)?.0;
        worst = worst.max(max_difference(&a, &b));
    }
    let tol = 1e-8;
    Ok(CheckOutcome {
        name: format!("equivalence {model} kappa={}", params.kappa),
        pass: worst <= tol,
        detail: format!("max difference {worst:.2e} over {steps} steps (tol {tol:.0e})"),
    })
}

/// Every fixture expected to pass.
pub fn check_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let p = NlsParams::default();
    let quad = NlsParams { kappa: 0.0, ..p };
    let mut out = vec![check_tableau("midpoint")?, check_tableau("gauss2")?];
    for model in ["nls-transport", "nls-dispersion"] {
        out.push(check_system(model, &p)?);
        out.push(check_system(model, &quad)?);
        out.push(check_two_form(model, &quad, "midpoint", 10, seed)?);
        out.push(check_two_form(model, &p, "midpoint", 10, seed)?);
        out.push(check_momentum(model, &quad, "midpoint", 20, seed)?);
        out.push(check_equivalence(model, &p, 10, seed)?);
    }
    Ok(out)
}
