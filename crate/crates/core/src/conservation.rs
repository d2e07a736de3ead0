//! Discrete conservation laws: the multisymplectic two-form law, the momentum
//! law for quadratic Hamiltonians, and global NLS invariants.

use std::fmt;

use crate::collocation::{build_stencil, tangent_edges, Edges, StageValues, TangentStep};
use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid1D};
use crate::nls::PsiField;
use crate::system::{MultisymplecticSystem, SkewMatrix};
use crate::tableau::{check_symplecticity, TableauPair};

pub const TWO_FORM_TOL: f64 = 1e-10;
pub const MOMENTUM_TOL: f64 = 1e-10;

/// The three forms on a tangent pair at one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoFormSample {
    pub cell: usize,
    /// `Σ_m b_m [ω_{1,m} − ω_{0,m}]`.
    pub omega: f64,
    /// `Σ_i b̄_i [κ_{i,1} − κ_{i,0}]`.
    pub kappa: f64,
    /// `Σ_i β̄_i [κ̃_{i,1} − κ̃_{i,0}]`.
    pub kappatilde: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationReport {
    pub per_cell: Vec<f64>,
    pub max_residual: f64,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl ConservationReport {
    fn from_cells(per_cell: Vec<f64>, tol: f64) -> Self {
        let max_residual = per_cell.iter().fold(0.0, |m: f64, r| if r.is_nan() { f64::NAN } else { m.max(*r) });
        Self {
            pass: max_residual <= tol,
            per_cell,
            max_residual,
            before: None,
            after: None,
            tol,
        }
    }
}

impl fmt::Display for ConservationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "max residual {:.3e} (tol {:.1e})", self.max_residual, self.tol)?;
        if let (Some(b), Some(a)) = (self.before, self.after) {
            write!(f, ", functional {b:.16e} -> {a:.16e}")?;
        }
        write!(f, " {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn form_sum(a: &SkewMatrix, w: &[f64], u0: &[f64], v0: &[f64], u1: &[f64], v1: &[f64], m: usize) -> f64 {
    w.iter()
        .enumerate()
        .map(|(k, wk)| {
            let r = k * m..(k + 1) * m;
            wk * (a.pair(&u1[r.clone()], &v1[r.clone()]) - a.pair(&u0[r.clone()], &v0[r]))
        })
        .sum()
}

/// Per-cell form differences on the tangent pair `(U, V)`, without any
/// symplecticity requirement on the tableau.
pub fn two_form_samples(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    u: &TangentStep,
    v: &TangentStep,
    tab: &TableauPair,
) -> Result<Vec<TwoFormSample>> {
    let eu = tangent_edges(sys, grid, stages, u, tab)?;
    let ev = tangent_edges(sys, grid, stages, v, tab)?;
    let (m, s, r) = (sys.m, tab.s(), tab.r());
    let bx: Vec<f64> = tab.spatial.b.iter().copied().collect();
    let bt: Vec<f64> = tab.drift.b.iter().copied().collect();
    let bw: Vec<f64> = tab.beta.iter().copied().collect();
    fn cells(e: &Edges, n: usize, s: usize, r: usize, m: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        (
            &e.time0[n * s * m..(n + 1) * s * m],
            &e.time1[n * s * m..(n + 1) * s * m],
            &e.space0[n * r * m..(n + 1) * r * m],
            &e.space1[n * r * m..(n + 1) * r * m],
        )
    }
    Ok((0..grid.n_cells)
        .map(|n| {
            let (ut0, ut1, us0, us1) = cells(&eu, n, s, r, m);
            let (vt0, vt1, vs0, vs1) = cells(&ev, n, s, r, m);
            TwoFormSample {
                cell: n,
                omega: form_sum(&sys.mm, &bx, ut0, vt0, ut1, vt1, m),
                kappa: form_sum(&sys.k, &bt, us0, vs0, us1, vs1, m),
                kappatilde: form_sum(&sys.ktilde, &bw, us0, vs0, us1, vs1, m),
            }
        })
        .collect())
}

/// Scale-relative residuals `|t₁ + t₂ + t₃| / (|t₁| + |t₂| + |t₃|)` of the
/// two-form law, for any tableau.
pub fn two_form_residuals(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    u: &TangentStep,
    v: &TangentStep,
    tab: &TableauPair,
) -> Result<ConservationReport> {
    let samples = two_form_samples(sys, grid, stages, u, v, tab)?;
    let per_cell = samples
        .iter()
        .map(|smp| {
            let t1 = smp.omega * grid.dx;
            let t2 = smp.kappa * stages.dt;
            let t3 = smp.kappatilde * stages.dw;
            (t1 + t2 + t3).abs() / (t1.abs() + t2.abs() + t3.abs() + 1e-300)
        })
        .collect();
    Ok(ConservationReport::from_cells(per_cell, TWO_FORM_TOL))
}

/// Checks the discrete two-form law on a tangent pair propagated through one
/// step. Refuses tableaux that violate the symplecticity conditions.
pub fn check_two_form_law(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
    u: &TangentStep,
    v: &TangentStep,
    tab: &TableauPair,
) -> Result<ConservationReport> {
    let sym = check_symplecticity(tab);
    if !sym.pass {
        return Err(Error::NotApplicable(format!(
            "tableau `{}` violates the symplecticity conditions:\n{sym}",
            tab.name
        )));
    }
    two_form_residuals(sys, grid, stages, u, v, tab)
}

fn time_edges_of_state(sys: &MultisymplecticSystem, grid: &Grid1D, engine: &str, tab: &TableauPair, state: &FieldState) -> Result<Vec<f64>> {
    let stencil = build_stencil(engine, sys, grid, tab, 1.0, 0.0)?;
    let z = state.to_flat();
    if z.len() != stencil.state_len() {
        return Err(Error::Dimension("state width does not match the engine".into()));
    }
    let u = vec![0.0; stencil.unknown_len()];
    Ok(stencil.time_edge0.apply_all(&u, &z, grid.n_cells))
}

/// `P = Σ_n Σ_m b_m ½⟨M δ_x z_{0,m}, z_{0,m}⟩ Δx` over the spatial
/// collocation values of `state`.
pub fn momentum_functional(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    engine: &str,
    tab: &TableauPair,
    state: &FieldState,
) -> Result<f64> {
    let edges = time_edges_of_state(sys, grid, engine, tab, state)?;
    let (m, s, n_cells) = (sys.m, tab.s(), grid.n_cells);
    let mut p = 0.0;
    for n in 0..n_cells {
        let next = (n + 1) % n_cells;
        for k in 0..s {
            let here = &edges[(n * s + k) * m..(n * s + k + 1) * m];
            let there = &edges[(next * s + k) * m..(next * s + k + 1) * m];
            let dz: Vec<f64> = there.iter().zip(here).map(|(a, b)| (a - b) / grid.dx).collect();
            p += tab.spatial.b[k] * 0.5 * sys.mm.pair(here, &dz) * grid.dx;
        }
    }
    Ok(p)
}

/// Per-cell three-term momentum law for the node engine:
/// `[I₁ − I₀]Δx + Γ(L_{n+1}) − Γ(L_n)` with
/// `Γ(L) = Δt H(L) + ΔW H̃(L) − ½⟨M (u_n − z_n), L⟩`.
fn local_momentum_residuals(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    stages: &StageValues,
) -> Vec<f64> {
    let (m, n_cells) = (sys.m, grid.n_cells);
    let e = &stages.edges;
    let inner = |t: &[f64], n: usize| {
        let next = (n + 1) % n_cells;
        let here = &t[n * m..(n + 1) * m];
        let dz: Vec<f64> = t[next * m..(next + 1) * m].iter().zip(here).map(|(a, b)| (a - b) / grid.dx).collect();
        0.5 * sys.mm.pair(here, &dz)
    };
    let gamma = |n: usize| {
        let l = &e.space0[n * m..(n + 1) * m];
        let du: Vec<f64> = (0..m).map(|a| stages.unknowns[n * m + a] - stages.state[n * m + a]).collect();
        stages.dt * sys.ham.value(l) + stages.dw * sys.ham.stoch_value(l) - 0.5 * sys.mm.pair(l, &du)
    };
    (0..n_cells)
        .map(|n| {
            let di = (inner(&e.time1, n) - inner(&e.time0, n)) * grid.dx;
            di + gamma((n + 1) % n_cells) - gamma(n)
        })
        .collect()
}

/// Global momentum conservation across one step for quadratic Hamiltonians.
/// `max_residual` is `|ΔP|`. `per_cell` holds the signed local three-term
/// residuals for the node engine (empty for other engines); they are not
/// zero cell by cell but sum to `ΔP`.
#[allow(clippy::too_many_arguments)]
pub fn check_momentum_law(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    state_k: &FieldState,
    state_k1: &FieldState,
    stages: &StageValues,
    tab: &TableauPair,
) -> Result<ConservationReport> {
    if !sys.ham.is_quadratic() {
        return Err(Error::NotApplicable("momentum law requires quadratic Hamiltonians".into()));
    }
    let sym = check_symplecticity(tab);
    if !sym.pass {
        return Err(Error::NotApplicable(format!("tableau `{}` is not symplectic", tab.name)));
    }
    momentum_drift(sys, grid, state_k, state_k1, stages, tab)
}

/// `|P(state_k1) − P(state_k)|` without the applicability checks.
pub fn momentum_drift(
    sys: &MultisymplecticSystem,
    grid: &Grid1D,
    state_k: &FieldState,
    state_k1: &FieldState,
    stages: &StageValues,
    tab: &TableauPair,
) -> Result<ConservationReport> {
    let before = momentum_functional(sys, grid, stages.engine, tab, state_k)?;
    let after = momentum_functional(sys, grid, stages.engine, tab, state_k1)?;
    let per_cell = if stages.engine == "box" {
        local_momentum_residuals(sys, grid, stages)
    } else {
        Vec::new()
    };
    let drift = (after - before).abs();
    Ok(ConservationReport {
        max_residual: drift,
        per_cell,
        before: Some(before),
        after: Some(after),
        tol: MOMENTUM_TOL,
        pass: drift <= MOMENTUM_TOL,
    })
}

/// `Σ_n (p_n² + q_n²) Δx`.
pub fn global_density(state: &PsiField, grid: &Grid1D) -> f64 {
    state.p.iter().zip(&state.q).map(|(p, q)| p * p + q * q).sum::<f64>() * grid.dx
}

/// `Σ_n |A_x ψ|²_n Δx`, the density of the time-edge values of the box
/// scheme, which the midpoint scheme conserves up to solver tolerance.
pub fn edge_density(state: &PsiField, grid: &Grid1D) -> f64 {
    let n = grid.n_cells;
    (0..n)
        .map(|i| {
            let j = grid.next(i);
            let (p, q) = (0.5 * (state.p[i] + state.p[j]), 0.5 * (state.q[i] + state.q[j]));
            p * p + q * q
        })
        .sum::<f64>()
        * grid.dx
}

/// `Σ_n (p_n δ̂q_n − q_n δ̂p_n) Δx` with centred differences.
pub fn global_momentum(state: &PsiField, grid: &Grid1D) -> f64 {
    let n = grid.n_cells;
    let (p, q) = (&state.p, &state.q);
    let mut acc = 0.0;
    for i in 0..n {
        let (l, r) = (grid.prev(i), grid.next(i));
        let dq = (q[r] - q[l]) / (2.0 * grid.dx);
        let dp = (p[r] - p[l]) / (2.0 * grid.dx);
        acc += p[i] * dq - q[i] * dp;
    }
    acc * grid.dx
}
