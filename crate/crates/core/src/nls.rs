//! Stochastic nonlinear Schrödinger models in `(p, q)` form.
//!
//! With `ψ = p + i q` both models read, in Stratonovich form,
//!
//! ```text
//! transport:   dψ + ξ ψ_x ∘ dW = i(ψ_xx − 2κ|ψ|²ψ) dt
//! dispersion:  dψ = i(ψ_xx − 2κ|ψ|²ψ) dt + i ε ψ_xx ∘ dW
//! ```
//!
//! The reduced midpoint steppers eliminate the auxiliary fields `v, w` from
//! the four-component box scheme and solve for `(p, q)` only.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::collocation::{step as collocation_step, step_with};
use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid1D};
use crate::registry::Registry;
use crate::solver::{solve, BlockCirculant, SolveStats, SolverConfig, StepProblem};
use crate::system::{system_registry, MultisymplecticSystem, NlsParams};
use crate::tableau::TableauPair;

#[derive(Clone, Debug, PartialEq)]
pub struct PsiField {
    pub t: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PsiField {
    pub fn new(t: f64, p: Vec<f64>, q: Vec<f64>) -> Self {
        assert_eq!(p.len(), q.len());
        Self { t, p, q }
    }

    pub fn zeros(t: f64, n: usize) -> Self {
        Self::new(t, vec![0.0; n], vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn density(&self) -> Vec<f64> {
        self.p.iter().zip(&self.q).map(|(p, q)| p * p + q * q).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|v| v.is_finite())
    }

    fn interleaved(&self) -> Vec<f64> {
        self.p.iter().zip(&self.q).flat_map(|(p, q)| [*p, *q]).collect()
    }

    fn from_interleaved(t: f64, u: &[f64]) -> Self {
        Self::new(t, u.iter().step_by(2).copied().collect(), u.iter().skip(1).step_by(2).copied().collect())
    }

    /// Four-component node state `(p, q, v, w)` with reconstructed auxiliaries.
    pub fn to_field_state(&self, grid: &Grid1D) -> FieldState {
        let (v, w) = reconstruct_aux(self, grid);
        let n = self.len();
        let values = DMatrix::from_fn(n, 4, |i, k| match k {
            0 => self.p[i],
            1 => self.q[i],
            2 => v[i],
            _ => w[i],
        });
        FieldState::new(self.t, values)
    }

    pub fn from_field_state(state: &FieldState) -> Self {
        Self::new(
            state.t,
            state.values.column(0).iter().copied().collect(),
            state.values.column(1).iter().copied().collect(),
        )
    }
}

/// Bright-soliton parameters of the focusing (`κ = −1`) equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitonParams {
    pub kappa: f64,
    pub xi: f64,
    pub center: f64,
    pub amplitude: f64,
    pub wavenumber: f64,
    pub phase_rate: f64,
    pub speed: f64,
}

impl Default for SolitonParams {
    fn default() -> Self {
        Self {
            kappa: -1.0,
            xi: 0.1,
            center: 15.0,
            amplitude: std::f64::consts::FRAC_1_SQRT_2,
            wavenumber: 1.0 / 20.0,
            phase_rate: 199.0 / 400.0,
            speed: 1.0 / 10.0,
        }
    }
}

impl SolitonParams {
    pub fn with_xi(xi: f64) -> Self {
        Self { xi, ..Self::default() }
    }

    /// `A(x, t) = a sech(a (x − speed·t − center))`.
    pub fn envelope(&self, x: f64, t: f64) -> f64 {
        let a = self.amplitude;
        a / (a * (x - self.speed * t - self.center)).cosh()
    }
}

/// Soliton at `(x, t)` along a Wiener path with `W(t) = w_t`:
/// `ψ = A(x̃, t) exp(i(k x̃ + Ω t))`, `x̃ = x − ξ W(t)`.
pub fn exact_soliton(x: f64, t: f64, w_t: f64, params: &SolitonParams) -> (f64, f64) {
    let xt = x - params.xi * w_t;
    let a = params.envelope(xt, t);
    let phase = params.wavenumber * xt + params.phase_rate * t;
    (a * phase.cos(), a * phase.sin())
}

pub fn exact_field(grid: &Grid1D, t: f64, w_t: f64, params: &SolitonParams) -> PsiField {
    let (p, q) = grid.nodes().into_iter().map(|x| exact_soliton(x, t, w_t, params)).unzip();
    PsiField::new(t, p, q)
}

pub fn initial_condition(grid: &Grid1D) -> PsiField {
    exact_field(grid, 0.0, 0.0, &SolitonParams::default())
}

/// Auxiliary fields solving `A_x v = δ_x p`, `A_x w = δ_x q` on the periodic
/// grid. The Nyquist component, annihilated by `A_x` on even grids, is set to
/// zero.
pub fn reconstruct_aux(state: &PsiField, grid: &Grid1D) -> (Vec<f64>, Vec<f64>) {
    let n = state.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let solve_one = |f: &[f64]| {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fwd.process(&mut buf);
        for (j, b) in buf.iter_mut().enumerate() {
            if 2 * j == n {
                *b = Complex64::new(0.0, 0.0);
                continue;
            }
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            *b *= Complex64::new(0.0, 2.0 / grid.dx * (theta / 2.0).tan());
        }
        inv.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect::<Vec<f64>>()
    };
    (solve_one(&state.p), solve_one(&state.q))
}

/// Reduced midpoint residual in `(p, q)`, interleaved per node:
///
/// ```text
/// R_p = A_x²(p¹−p⁰) + c A_t δ_x² q + ξΔW A_t A_xδ_x p − 2κΔt A_x(|Ψ|² Q)
/// R_q = A_x²(q¹−q⁰) − c A_t δ_x² p + ξΔW A_t A_xδ_x q + 2κΔt A_x(|Ψ|² P)
/// ```
///
/// with `P = A_x A_t p`, `Q = A_x A_t q` and `c = Δt` (transport) or
/// `c = Δt + εΔW` (dispersion, `ξ = 0`). The solver sees `R / Δt`, the
/// residual in rate form, so tolerances are per unit time.
struct ReducedProblem<'a> {
    old: &'a PsiField,
    dx: f64,
    dt: f64,
    kappa: f64,
    dispersion: f64,
    advection: f64,
}

const AX2: [f64; 3] = [0.25, 0.5, 0.25];

impl ReducedProblem<'_> {
    fn n(&self) -> usize {
        self.old.len()
    }

    fn dxx(&self) -> [f64; 3] {
        let h2 = self.dx * self.dx;
        [1.0 / h2, -2.0 / h2, 1.0 / h2]
    }

    fn axdx(&self) -> [f64; 3] {
        let h = 2.0 * self.dx;
        [-1.0 / h, 0.0, 1.0 / h]
    }

    /// Linear `2×2` taps acting on the new level, offsets 0, 1, 2.
    fn new_level_taps(&self) -> [DMatrix<f64>; 3] {
        let (dxx, axdx) = (self.dxx(), self.axdx());
        std::array::from_fn(|k| {
            let diag = (AX2[k] + 0.5 * self.advection * axdx[k]) / self.dt;
            let off = 0.5 * self.dispersion * dxx[k] / self.dt;
            DMatrix::from_row_slice(2, 2, &[diag, off, -off, diag])
        })
    }

    fn old_level_taps(&self) -> [DMatrix<f64>; 3] {
        let (dxx, axdx) = (self.dxx(), self.axdx());
        std::array::from_fn(|k| {
            let diag = (-AX2[k] + 0.5 * self.advection * axdx[k]) / self.dt;
            let off = 0.5 * self.dispersion * dxx[k] / self.dt;
            DMatrix::from_row_slice(2, 2, &[diag, off, -off, diag])
        })
    }

    /// Cell averages `(P_j, Q_j)` over the space-time box `[j, j+1] × [k, k+1]`.
    fn averages(&self, u: &[f64]) -> Vec<(f64, f64)> {
        let n = self.n();
        let (p0, q0) = (&self.old.p, &self.old.q);
        (0..n)
            .map(|j| {
                let r = (j + 1) % n;
                (
                    0.25 * (p0[j] + p0[r] + u[2 * j] + u[2 * r]),
                    0.25 * (q0[j] + q0[r] + u[2 * j + 1] + u[2 * r + 1]),
                )
            })
            .collect()
    }
}

impl StepProblem for ReducedProblem<'_> {
    fn len(&self) -> usize {
        2 * self.n()
    }

    fn residual(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n();
        let old = self.old.interleaved();
        let (tn, to) = (self.new_level_taps(), self.old_level_taps());
        let avg = self.averages(u);
        let c = 2.0 * self.kappa;
        for i in 0..n {
            let (mut rp, mut rq) = (0.0, 0.0);
            for k in 0..3 {
                let j = (i + k) % n;
                rp += tn[k][(0, 0)] * u[2 * j] + tn[k][(0, 1)] * u[2 * j + 1];
                rq += tn[k][(1, 0)] * u[2 * j] + tn[k][(1, 1)] * u[2 * j + 1];
                rp += to[k][(0, 0)] * old[2 * j] + to[k][(0, 1)] * old[2 * j + 1];
                rq += to[k][(1, 0)] * old[2 * j] + to[k][(1, 1)] * old[2 * j + 1];
            }
            let (pa, qa) = avg[i];
            let (pb, qb) = avg[(i + 1) % n];
            let (ga, gb) = (pa * pa + qa * qa, pb * pb + qb * qb);
            rp -= c * 0.5 * (ga * qa + gb * qb);
            rq += c * 0.5 * (ga * pa + gb * pb);
            out[2 * i] = rp;
            out[2 * i + 1] = rq;
        }
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut jac = self.linear_part().to_dense();
        let avg = self.averages(u);
        let c = self.kappa * 0.25;
        for i in 0..n {
            for dj in 0..2 {
                let (pa, qa) = avg[(i + dj) % n];
                let f_p = 2.0 * pa * qa;
                let f_q = pa * pa + 3.0 * qa * qa;
                let g_p = 3.0 * pa * pa + qa * qa;
                let g_q = f_p;
                for dl in 0..2 {
                    let l = (i + dj + dl) % n;
                    jac[(2 * i, 2 * l)] -= c * f_p;
                    jac[(2 * i, 2 * l + 1)] -= c * f_q;
                    jac[(2 * i + 1, 2 * l)] += c * g_p;
                    jac[(2 * i + 1, 2 * l + 1)] += c * g_q;
                }
            }
        }
        jac
    }

    fn linear_part(&self) -> BlockCirculant {
        let taps = self.new_level_taps();
        BlockCirculant::new(self.n(), 2, taps.into_iter().enumerate().collect())
    }
}

fn reduced_step(
    state: &PsiField,
    grid: &Grid1D,
    dt: f64,
    kappa: f64,
    dispersion: f64,
    advection: f64,
    solver: &SolverConfig,
) -> Result<(PsiField, SolveStats)> {
    if state.len() != grid.n_cells {
        return Err(Error::Dimension(format!("field has {} nodes, grid {}", state.len(), grid.n_cells)));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let problem = ReducedProblem {
        old: state,
        dx: grid.dx,
        dt,
        kappa,
        dispersion,
        advection,
    };
    let mut u = state.interleaved();
    let stats = solve(&problem, &mut u, solver)?;
    Ok((PsiField::from_interleaved(state.t + dt, &u), stats))
}

/// One reduced midpoint step of the transport-noise model.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_step_transport(
    state: &PsiField,
    dw: f64,
    dt: f64,
    grid: &Grid1D,
    kappa: f64,
    xi: f64,
    solver: &SolverConfig,
) -> Result<(PsiField, SolveStats)> {
    reduced_step(state, grid, dt, kappa, dt, xi * dw, solver)
}

/// One reduced midpoint step of the dispersion-noise model.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_step_dispersion(
    state: &PsiField,
    dw: f64,
    dt: f64,
    grid: &Grid1D,
    kappa: f64,
    epsilon: f64,
    solver: &SolverConfig,
) -> Result<(PsiField, SolveStats)> {
    reduced_step(state, grid, dt, kappa, dt + epsilon * dw, 0.0, solver)
}

/// Advances a `(p, q)` field by one step.
pub trait PsiStepper: Send + Sync {
    fn name(&self) -> &'static str;
    fn step(&self, state: &PsiField, dw: f64, dt: f64, grid: &Grid1D, solver: &SolverConfig) -> Result<(PsiField, SolveStats)>;
}

pub struct TransportMidpoint {
    pub kappa: f64,
    pub xi: f64,
}

impl PsiStepper for TransportMidpoint {
    fn name(&self) -> &'static str {
        "reduced-transport"
    }
    fn step(&self, state: &PsiField, dw: f64, dt: f64, grid: &Grid1D, solver: &SolverConfig) -> Result<(PsiField, SolveStats)> {
        midpoint_step_transport(state, dw, dt, grid, self.kappa, self.xi, solver)
    }
}

pub struct DispersionMidpoint {
    pub kappa: f64,
    pub epsilon: f64,
}

impl PsiStepper for DispersionMidpoint {
    fn name(&self) -> &'static str {
        "reduced-dispersion"
    }
    fn step(&self, state: &PsiField, dw: f64, dt: f64, grid: &Grid1D, solver: &SolverConfig) -> Result<(PsiField, SolveStats)> {
        midpoint_step_dispersion(state, dw, dt, grid, self.kappa, self.epsilon, solver)
    }
}

/// The generic collocation engine on the four-component system. Auxiliary
/// fields are rebuilt from `(p, q)` before every step.
pub struct CollocationStepper {
    pub sys: MultisymplecticSystem,
    pub tab: TableauPair,
}

impl PsiStepper for CollocationStepper {
    fn name(&self) -> &'static str {
        "collocation"
    }
    fn step(&self, state: &PsiField, dw: f64, dt: f64, grid: &Grid1D, solver: &SolverConfig) -> Result<(PsiField, SolveStats)> {
        if self.tab.s() != 1 || self.tab.r() != 1 {
            return Err(Error::NotApplicable("node-value fields need a one-stage tableau".into()));
        }
        // The engine residual is in increment form; rescale to rate form.
        let scaled = solver.clone().with_tol(solver.tol * dt);
        let fs = state.to_field_state(grid);
        let (next, _, report) = collocation_step(&self.sys, grid, &fs, dw, dt, &self.tab, &scaled)?;
        Ok((
            PsiField::from_field_state(&next),
            SolveStats {
                iterations: report.iterations,
                residual_norm: report.residual_norm / dt,
                solver: report.solver,
            },
        ))
    }
}

/// Runs the four-component scheme directly from a full node state, keeping
/// the auxiliary fields the scheme produces.
pub fn collocation_field_step(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    state: &FieldState,
    dw: f64,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
) -> Result<FieldState> {
    Ok(step_with("box", sys, grid, state, dw, dt, tab, solver)?.0)
}

/// What a stepper factory needs to know.
#[derive(Clone, Debug)]
pub struct StepperSpec {
    pub model: String,
    pub params: NlsParams,
    pub tableau: TableauPair,
}

pub type StepperFactory = fn(&StepperSpec) -> Result<Box<dyn PsiStepper>>;

fn reduced_factory(spec: &StepperSpec) -> Result<Box<dyn PsiStepper>> {
    let p = spec.params;
    match spec.model.as_str() {
        "nls-transport" => Ok(Box::new(TransportMidpoint { kappa: p.kappa, xi: p.xi })),
        "nls-dispersion" => Ok(Box::new(DispersionMidpoint {
            kappa: p.kappa,
            epsilon: p.epsilon,
        })),
        "nls-deterministic" => Ok(Box::new(TransportMidpoint { kappa: p.kappa, xi: 0.0 })),
        other => Err(Error::UnknownName {
            kind: "model",
            name: other.to_string(),
            available: system_registry().names().join(", "),
        }),
    }
}

fn collocation_factory(spec: &StepperSpec) -> Result<Box<dyn PsiStepper>> {
    let sys = (system_registry().get(&spec.model)?)(&spec.params);
    Ok(Box::new(CollocationStepper {
        sys,
        tab: spec.tableau.clone(),
    }))
}

pub fn stepper_registry() -> Registry<StepperFactory> {
    Registry::<StepperFactory>::new("stepper")
        .with("reduced", reduced_factory)
        .with("collocation", collocation_factory)
}

/// Peak of `|ψ|²` located by a parabola through the largest node value and
/// its two neighbours. Returns a position in `[x0, x0 + L)`.
pub fn peak_position(state: &PsiField, grid: &Grid1D) -> f64 {
    let d = state.density();
    let (i, _) = d
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let (l, r) = (d[grid.prev(i)], d[grid.next(i)]);
    let curv = l - 2.0 * d[i] + r;
    let offset = if curv != 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
    let x = grid.x(i) + offset * grid.dx;
    grid.x0 + (x - grid.x0).rem_euclid(grid.length())
}

/// Max-norm distance between two fields.
pub fn max_difference(a: &PsiField, b: &PsiField) -> f64 {
    a.p.iter()
        .zip(&b.p)
        .chain(a.q.iter().zip(&b.q))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `sqrt(Σ ((Δp)² + (Δq)²) Δx)`.
pub fn l2_difference(a: &PsiField, b: &PsiField, grid: &Grid1D) -> f64 {
    let s: f64 = a
        .p
        .iter()
        .zip(&b.p)
        .chain(a.q.iter().zip(&b.q))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (s * grid.dx).sqrt()
}

/// `A_x v − δ_x p` for diagnostics of [`reconstruct_aux`].
pub fn aux_constraint_residual(p: &[f64], v: &[f64], grid: &Grid1D) -> DVector<f64> {
    let n = p.len();
    DVector::from_fn(n, |i, _| {
        let j = (i + 1) % n;
        0.5 * (v[i] + v[j]) - (p[j] - p[i]) / grid.dx
    })
}
