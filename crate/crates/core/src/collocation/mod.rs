//! Stochastic multisymplectic Runge–Kutta stepping on a periodic grid.
//!
//! All cells of one time step are solved together as a single nonlinear
//! system. Residuals are multiplied through by the step sizes, so only the
//! products `Δt ∇H`, `ΔW ∇H̃` and `ΔW K̃` appear and `ΔW = 0` needs no
//! special handling.
//!
//! Two engines build the per-cell relations:
//!
//! * `box` works on node values and accepts one-stage tableaux (implicit
//!   midpoint and its relatives). This is the validated path.
//! * `stage` implements the general `s × r` relations on per-cell edge values
//!   (experimental for `s, r ≥ 2`).

mod box_scheme;
mod stage_scheme;
pub mod stencil;

pub use box_scheme::BoxEngine;
pub use stage_scheme::{StageEngine, StageLayout};
pub use stencil::{Edges, LocalMap, Stencil, StencilProblem};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid1D, TangentField};
use crate::registry::Registry;
use crate::solver::{dense_solve, solve, SolverConfig, SolverKind, StepProblem};
use crate::system::MultisymplecticSystem;
use crate::tableau::{check_consistency, TableauPair};

/// Builds the per-cell stencil of a scheme.
pub trait CollocationEngine: Send + Sync {
    fn name(&self) -> &'static str;
    /// Width of one state row for a system with `m` components.
    fn state_width(&self, m: usize, tab: &TableauPair) -> usize;
    fn stencil(&self, sys: &MultisymplecticSystem, grid: &Grid1D, tab: &TableauPair, dt: f64, dw: f64) -> Result<Stencil>;
}

pub type EngineFactory = fn() -> Box<dyn CollocationEngine>;

pub fn engine_registry() -> Registry<EngineFactory> {
    Registry::<EngineFactory>::new("engine")
        .with("box", || Box::new(BoxEngine))
        .with("stage", || Box::new(StageEngine))
}

/// `box` for one-stage tableaux, `stage` otherwise.
pub fn default_engine(tab: &TableauPair) -> &'static str {
    if tab.s() == 1 && tab.r() == 1 {
        "box"
    } else {
        "stage"
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub solver: SolverKind,
    /// Set by callers that truncated the increment driving this step.
    pub clamped_increment: bool,
}

/// Converged unknowns of one step together with the derived stage data.
#[derive(Clone, Debug)]
pub struct StageValues {
    pub engine: &'static str,
    pub dt: f64,
    pub dw: f64,
    pub n_cells: usize,
    pub m: usize,
    /// Collocation points per cell (`r · s`).
    pub points: usize,
    pub state: Vec<f64>,
    pub unknowns: Vec<f64>,
    /// `Z_{i,m}` per cell and point.
    pub stages: Vec<f64>,
    /// `Δx δ_x Z` per cell and point.
    pub dx_increments: Vec<f64>,
    /// `Δt δ_t^A Z + ΔW δ_t^M Z` per cell and point.
    pub dt_increments: Vec<f64>,
    pub edges: Edges,
}

impl StageValues {
    fn offset(&self, n: usize, p: usize) -> usize {
        (n * self.points + p) * self.m
    }

    pub fn stage(&self, n: usize, p: usize) -> &[f64] {
        let o = self.offset(n, p);
        &self.stages[o..o + self.m]
    }

    /// Max over cells and points of `|M Y + (Δt K + ΔW K̃) X/Δx − Δt∇H(Z) − ΔW∇H̃(Z)|`.
    pub fn relation_residual(&self, sys: &MultisymplecticSystem, dx: f64) -> f64 {
        let kc = (sys.k.matrix() * self.dt + sys.ktilde.matrix() * self.dw) / dx;
        let mut worst: f64 = 0.0;
        for n in 0..self.n_cells {
            for p in 0..self.points {
                let o = self.offset(n, p);
                let z = &self.stages[o..o + self.m];
                let x = DVector::from_column_slice(&self.dx_increments[o..o + self.m]);
                let y = DVector::from_column_slice(&self.dt_increments[o..o + self.m]);
                let res = sys.mm.matrix() * y + &kc * x - sys.ham.grad(z) * self.dt - sys.ham.stoch_grad(z) * self.dw;
                worst = worst.max(res.amax());
            }
        }
        worst
    }
}

fn check_step_inputs(tab: &TableauPair, dt: f64, dw: f64) -> Result<()> {
    tab.validate_shape()?;
    let cons = check_consistency(tab);
    if !cons.pass {
        return Err(Error::Tableau(format!("tableau `{}` is inconsistent:\n{cons}", tab.name)));
    }
    if !tab.shared_temporal() {
        return Err(Error::Tableau(
            "drift and diffusion coefficients must coincide for the combined-increment relations".into(),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if !dw.is_finite() {
        return Err(Error::Config(format!("non-finite Wiener increment {dw}")));
    }
    if !tab.is_symplectic() {
        log::warn!("tableau `{}` is not symplectic; conservation laws are not guaranteed", tab.name);
    }
    Ok(())
}

/// Builds the stencil of `engine` after validating the inputs.
pub fn build_stencil(
    engine: &str,
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    tab: &TableauPair,
    dt: f64,
    dw: f64,
) -> Result<Stencil> {
    check_step_inputs(tab, dt, dw)?;
    (engine_registry().get(engine)?)().stencil(sys, grid, tab, dt, dw)
}

fn stage_values(stencil: &Stencil, state: Vec<f64>, unknowns: Vec<f64>) -> StageValues {
    let n = stencil.n_cells;
    StageValues {
        engine: stencil.engine,
        dt: stencil.dt,
        dw: stencil.dw,
        n_cells: n,
        m: stencil.m,
        points: stencil.points,
        stages: stencil.stages.apply_all(&unknowns, &state, n),
        dx_increments: stencil.dx_increment.apply_all(&unknowns, &state, n),
        dt_increments: stencil.dt_increment.apply_all(&unknowns, &state, n),
        edges: stencil.edges(&unknowns, &state),
        state,
        unknowns,
    }
}

/// Advances `state` by one step with the default engine for `tab`.
pub fn step(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    state: &FieldState,
    dw: f64,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
) -> Result<(FieldState, StageValues, StepReport)> {
    step_with(default_engine(tab), sys, grid, state, dw, dt, tab, solver)
}

#[allow(clippy::too_many_arguments)]
pub fn step_with(
    engine: &str,
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    state: &FieldState,
    dw: f64,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
) -> Result<(FieldState, StageValues, StepReport)> {
    let stencil = build_stencil(engine, sys, grid, tab, dt, dw)?;
    if state.n_cells() != grid.n_cells || state.m() != stencil.state_block {
        return Err(Error::Dimension(format!(
            "state is {}x{}, engine `{engine}` expects {}x{}",
            state.n_cells(),
            state.m(),
            grid.n_cells,
            stencil.state_block
        )));
    }
    let z = state.to_flat();
    let mut u = stencil.initial_guess(&z);
    let problem = StencilProblem {
        stencil: &stencil,
        sys,
        state: &z,
    };
    let stats = solve(&problem, &mut u, solver)?;
    let next = stencil.next_state_of(&u);
    let out = FieldState::from_flat(state.t + dt, grid.n_cells, stencil.state_block, &next);
    let report = StepReport {
        iterations: stats.iterations,
        residual_norm: stats.residual_norm,
        solver: stats.solver,
        clamped_increment: false,
    };
    Ok((out, stage_values(&stencil, z, u), report))
}

/// Tangent propagated through one step, with the full unknown tangent kept
/// for evaluating edge values.
#[derive(Clone, Debug)]
pub struct TangentStep {
    pub field: TangentField,
    pub state: Vec<f64>,
    pub unknowns: Vec<f64>,
}

/// Iteration budget of the preconditioned tangent solve before the dense fallback.
const TANGENT_ITERS: usize = 200;
const TANGENT_TOL: f64 = 1e-14;

/// Solves the exact linearization of the step at `stages`:
/// `∂R/∂u · U1 = −∂R/∂z · U0`.
pub fn step_tangent(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    tangent: &TangentField,
    dw: f64,
    dt: f64,
    tab: &TableauPair,
) -> Result<TangentStep> {
    if dw != stages.dw || dt != stages.dt {
        return Err(Error::Config("tangent step sizes differ from those of the stage values".into()));
    }
    let stencil = build_stencil(stages.engine, sys, grid, tab, dt, dw)?;
    let u0 = tangent.to_flat();
    if u0.len() != stencil.state_len() {
        return Err(Error::Dimension(format!(
            "tangent has {} entries, state has {}",
            u0.len(),
            stencil.state_len()
        )));
    }
    let hess = stencil.hessians_at(sys, &stages.stages);
    let (n_cells, b, p) = (stencil.n_cells, stencil.unknown_block, stencil.points);
    let utaps: Vec<_> = (0..n_cells).map(|n| stencil.unknown_taps(&hess[n * p..(n + 1) * p])).collect();
    let ztaps: Vec<_> = (0..n_cells).map(|n| stencil.state_taps(&hess[n * p..(n + 1) * p])).collect();

    let apply = |taps: &[(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)], x: &[f64], width: usize| {
        let mut out = vec![0.0; n_cells * b];
        for n in 0..n_cells {
            let next = (n + 1) % n_cells;
            let row = &mut out[n * b..(n + 1) * b];
            stencil::matvec_acc(&taps[n].0, &x[n * width..(n + 1) * width], row);
            stencil::matvec_acc(&taps[n].1, &x[next * width..(next + 1) * width], row);
        }
        out
    };

    let rhs: Vec<f64> = apply(&ztaps, &u0, stencil.state_block).into_iter().map(|v| -v).collect();
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut u1 = vec![0.0; n_cells * b];
    let mut converged = scale == 0.0;
    if !converged {
        if let Ok(pre) = stencil.frozen_operator(sys).factor() {
            let mut corr = vec![0.0; u1.len()];
            for _ in 0..TANGENT_ITERS {
                let ju = apply(&utaps, &u1, b);
                let res: Vec<f64> = ju.iter().zip(&rhs).map(|(a, r)| a - r).collect();
                let norm = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !norm.is_finite() {
                    break;
                }
                if norm <= TANGENT_TOL * scale {
                    converged = true;
                    break;
                }
                pre.solve(&res, &mut corr);
                u1.iter_mut().zip(&corr).for_each(|(x, c)| *x -= c);
            }
        }
    }
    if !converged {
        let j = stencil.dense_unknown_jacobian(sys, &stages.unknowns, &stages.state);
        u1 = dense_solve(j, DVector::from_vec(rhs))?.as_slice().to_vec();
    }
    let next = stencil.next_state_of(&u1);
    Ok(TangentStep {
        field: TangentField::from_flat(n_cells, stencil.state_block, &next),
        state: u0,
        unknowns: u1,
    })
}

/// Edge values of a tangent step, evaluated with the same maps as the stages.
pub fn tangent_edges(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    tangent: &TangentStep,
    tab: &TableauPair,
) -> Result<Edges> {
    let stencil = build_stencil(stages.engine, sys, grid, tab, stages.dt, stages.dw)?;
    Ok(stencil.edges(&tangent.unknowns, &tangent.state))
}

/// Samples `f` at the state positions of `engine`: node positions for `box`,
/// spatial collocation points `x_n + c_m Δx` for `stage`.
pub fn sample_state<F>(engine: &str, grid: &Grid1D, tab: &TableauPair, m: usize, t: f64, f: F) -> Result<FieldState>
where
    F: Fn(f64) -> Vec<f64>,
{
    let offsets: Vec<f64> = match engine {
        "box" => vec![0.0],
        "stage" => tab.spatial.c.iter().copied().collect(),
        other => {
            return Err(Error::UnknownName {
                kind: "engine",
                name: other.to_string(),
                available: engine_registry().names().join(", "),
            })
        }
    };
    let s = offsets.len();
    let mut values = nalgebra::DMatrix::zeros(grid.n_cells, s * m);
    for n in 0..grid.n_cells {
        for (k, c) in offsets.iter().enumerate() {
            let v = f(grid.x(n) + c * grid.dx);
            for a in 0..m {
                values[(n, k * m + a)] = v[a];
            }
        }
    }
    Ok(FieldState::new(t, values))
}

/// Dense `∂R/∂u` and `∂R/∂z` of a converged step, for tests and diagnostics.
pub fn step_jacobians(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    tab: &TableauPair,
) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
    let stencil = build_stencil(stages.engine, sys, grid, tab, stages.dt, stages.dw)?;
    Ok((
        stencil.dense_unknown_jacobian(sys, &stages.unknowns, &stages.state),
        stencil.dense_state_jacobian(sys, &stages.unknowns, &stages.state),
    ))
}

/// Residual of the step relations at arbitrary unknowns, for tests.
pub fn step_residual(stencil: &Stencil, sys: &MultisymplecticSystem, u: &[f64], z: &[f64]) -> Vec<f64> {
    let problem = StencilProblem { stencil, sys, state: z };
    let mut out = vec![0.0; problem.len()];
    problem.residual(u, &mut out);
    out
}
