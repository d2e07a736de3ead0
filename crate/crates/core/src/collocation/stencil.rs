//! Two-point periodic stencils.
//!
//! Every scheme is written per cell `n` in terms of the unknown block `u_n`,
//! its right neighbour `u_{n+1}` and the matching state blocks:
//!
//! ```text
//! R_n = A0 u_n + A1 u_{n+1} + B0 z_n + B1 z_{n+1} − E G(Z_n)
//! Z_n = C0 u_n + C1 u_{n+1} + D0 z_n + D1 z_{n+1}
//! G(Z) = Δt ∇H(Z) + ΔW ∇H̃(Z)      (per collocation point)
//! ```

use nalgebra::DMatrix;

use crate::solver::{BlockCirculant, StepProblem};
use crate::system::MultisymplecticSystem;

/// Linear map of `(u_n, u_{n+1}, z_n, z_{n+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMap {
    pub u0: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub z0: DMatrix<f64>,
    pub z1: DMatrix<f64>,
}

pub(crate) fn matvec_acc(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = a.shape();
    for j in 0..cols {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = a.column(j);
        for i in 0..rows {
            out[i] += col[i] * xj;
        }
    }
}

impl LocalMap {
    pub fn zeros(rows: usize, unknown_block: usize, state_block: usize) -> Self {
        Self {
            u0: DMatrix::zeros(rows, unknown_block),
            u1: DMatrix::zeros(rows, unknown_block),
            z0: DMatrix::zeros(rows, state_block),
            z1: DMatrix::zeros(rows, state_block),
        }
    }

    pub fn rows(&self) -> usize {
        self.u0.nrows()
    }

    /// Evaluates the map at cell `n` of the flat periodic arrays `u`, `z`.
    pub fn apply_at(&self, u: &[f64], z: &[f64], n: usize, n_cells: usize, out: &mut [f64]) {
        let b = self.u0.ncols();
        let s = self.z0.ncols();
        let next = (n + 1) % n_cells;
        out.iter_mut().for_each(|v| *v = 0.0);
        matvec_acc(&self.u0, &u[n * b..(n + 1) * b], out);
        matvec_acc(&self.u1, &u[next * b..(next + 1) * b], out);
        matvec_acc(&self.z0, &z[n * s..(n + 1) * s], out);
        matvec_acc(&self.z1, &z[next * s..(next + 1) * s], out);
    }

    /// Evaluates the map at every cell, concatenated cell-major.
    pub fn apply_all(&self, u: &[f64], z: &[f64], n_cells: usize) -> Vec<f64> {
        let rows = self.rows();
        let mut out = vec![0.0; rows * n_cells];
        for n in 0..n_cells {
            self.apply_at(u, z, n, n_cells, &mut out[n * rows..(n + 1) * rows]);
        }
        out
    }
}

/// Edge values entering the discrete two-form law, per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Edges {
    /// `z_{0,m}` for `m = 1..s`, cell-major (`s·m` per cell).
    pub time0: Vec<f64>,
    /// `z_{1,m}`.
    pub time1: Vec<f64>,
    /// `z_{i,0}` for `i = 1..r` (`r·m` per cell).
    pub space0: Vec<f64>,
    /// `z_{i,1}`.
    pub space1: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Stencil {
    pub engine: &'static str,
    pub n_cells: usize,
    pub m: usize,
    pub s: usize,
    pub r: usize,
    pub unknown_block: usize,
    pub state_block: usize,
    /// Collocation points per cell.
    pub points: usize,
    pub dt: f64,
    pub dw: f64,
    pub dx: f64,
    pub linear: LocalMap,
    pub forcing: DMatrix<f64>,
    pub stages: LocalMap,
    /// `Δx δ_x Z` at each point.
    pub dx_increment: LocalMap,
    /// `Δt δ_t^A Z + ΔW δ_t^M Z` at each point.
    pub dt_increment: LocalMap,
    pub time_edge0: LocalMap,
    pub time_edge1: LocalMap,
    pub space_edge0: LocalMap,
    pub space_edge1: LocalMap,
    /// New state block from `u_n`.
    pub next_state: DMatrix<f64>,
    /// Initial guess for `u_n` from `z_n`.
    pub guess: DMatrix<f64>,
}

impl Stencil {
    pub fn unknown_len(&self) -> usize {
        self.n_cells * self.unknown_block
    }

    pub fn state_len(&self) -> usize {
        self.n_cells * self.state_block
    }

    pub fn initial_guess(&self, z: &[f64]) -> Vec<f64> {
        let (b, s) = (self.unknown_block, self.state_block);
        let mut u = vec![0.0; self.unknown_len()];
        for n in 0..self.n_cells {
            matvec_acc(&self.guess, &z[n * s..(n + 1) * s], &mut u[n * b..(n + 1) * b]);
        }
        u
    }

    pub fn next_state_of(&self, u: &[f64]) -> Vec<f64> {
        let (b, s) = (self.unknown_block, self.state_block);
        let mut z = vec![0.0; self.state_len()];
        for n in 0..self.n_cells {
            matvec_acc(&self.next_state, &u[n * b..(n + 1) * b], &mut z[n * s..(n + 1) * s]);
        }
        z
    }

    pub fn edges(&self, u: &[f64], z: &[f64]) -> Edges {
        Edges {
            time0: self.time_edge0.apply_all(u, z, self.n_cells),
            time1: self.time_edge1.apply_all(u, z, self.n_cells),
            space0: self.space_edge0.apply_all(u, z, self.n_cells),
            space1: self.space_edge1.apply_all(u, z, self.n_cells),
        }
    }

    /// `Δt H″(z) + ΔW H̃″(z)`.
    pub fn forcing_hessian(&self, sys: &MultisymplecticSystem, z: &[f64]) -> DMatrix<f64> {
        sys.ham.hess(z) * self.dt + sys.ham.stoch_hess(z) * self.dw
    }

    fn forcing_gradient(&self, sys: &MultisymplecticSystem, z: &[f64], out: &mut [f64]) {
        let g = sys.ham.grad(z);
        let gt = sys.ham.stoch_grad(z);
        for a in 0..self.m {
            out[a] = self.dt * g[a] + self.dw * gt[a];
        }
    }

    /// Per-cell Hessian blocks `G′(Z_p)` for all points, `n_cells · points` entries.
    pub fn hessians_at(&self, sys: &MultisymplecticSystem, stages: &[f64]) -> Vec<DMatrix<f64>> {
        let m = self.m;
        stages.chunks(m).map(|z| self.forcing_hessian(sys, z)).collect()
    }

    /// `E · blockdiag(G′) · C` for one cell.
    fn forced_block(&self, hess: &[DMatrix<f64>], c: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m;
        let mut gc = DMatrix::zeros(self.points * m, c.ncols());
        for (p, h) in hess.iter().enumerate() {
            let rows = c.rows(p * m, m);
            gc.rows_mut(p * m, m).copy_from(&(h * rows));
        }
        &self.forcing * gc
    }

    /// Jacobian taps `(∂R_n/∂u_n, ∂R_n/∂u_{n+1})` given the point Hessians of cell `n`.
    pub fn unknown_taps(&self, hess: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            &self.linear.u0 - self.forced_block(hess, &self.stages.u0),
            &self.linear.u1 - self.forced_block(hess, &self.stages.u1),
        )
    }

    /// Jacobian taps with respect to the state.
    pub fn state_taps(&self, hess: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            &self.linear.z0 - self.forced_block(hess, &self.stages.z0),
            &self.linear.z1 - self.forced_block(hess, &self.stages.z1),
        )
    }

    /// Unknown-Jacobian of the residual with Hessians frozen at the origin.
    pub fn frozen_operator(&self, sys: &MultisymplecticSystem) -> BlockCirculant {
        let zero = vec![0.0; self.m];
        let h0 = self.forcing_hessian(sys, &zero);
        let hess = vec![h0; self.points];
        let (t0, t1) = self.unknown_taps(&hess);
        BlockCirculant::new(self.n_cells, self.unknown_block, vec![(0, t0), (1, t1)])
    }

    pub fn residual(&self, sys: &MultisymplecticSystem, u: &[f64], z: &[f64], out: &mut [f64]) {
        let b = self.unknown_block;
        let pm = self.points * self.m;
        let mut zs = vec![0.0; pm];
        let mut g = vec![0.0; pm];
        let mut eg = vec![0.0; b];
        for n in 0..self.n_cells {
            self.stages.apply_at(u, z, n, self.n_cells, &mut zs);
            for p in 0..self.points {
                let r = p * self.m..(p + 1) * self.m;
                self.forcing_gradient(sys, &zs[r.clone()], &mut g[r]);
            }
            let row = &mut out[n * b..(n + 1) * b];
            self.linear.apply_at(u, z, n, self.n_cells, row);
            eg.iter_mut().for_each(|v| *v = 0.0);
            matvec_acc(&self.forcing, &g, &mut eg);
            row.iter_mut().zip(&eg).for_each(|(r, e)| *r -= e);
        }
    }

    /// Dense `∂R/∂u` at `u`.
    pub fn dense_unknown_jacobian(&self, sys: &MultisymplecticSystem, u: &[f64], z: &[f64]) -> DMatrix<f64> {
        let stages = self.stages.apply_all(u, z, self.n_cells);
        let hess = self.hessians_at(sys, &stages);
        self.dense_from_taps(&hess, |h| self.unknown_taps(h), self.unknown_block)
    }

    /// Dense `∂R/∂z` at `u`.
    pub fn dense_state_jacobian(&self, sys: &MultisymplecticSystem, u: &[f64], z: &[f64]) -> DMatrix<f64> {
        let stages = self.stages.apply_all(u, z, self.n_cells);
        let hess = self.hessians_at(sys, &stages);
        self.dense_from_taps(&hess, |h| self.state_taps(h), self.state_block)
    }

    fn dense_from_taps<F>(&self, hess: &[DMatrix<f64>], taps: F, cols: usize) -> DMatrix<f64>
    where
        F: Fn(&[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>),
    {
        let (n_cells, b, p) = (self.n_cells, self.unknown_block, self.points);
        let mut j = DMatrix::zeros(n_cells * b, n_cells * cols);
        for n in 0..n_cells {
            let (t0, t1) = taps(&hess[n * p..(n + 1) * p]);
            let next = (n + 1) % n_cells;
            let mut v0 = j.view_mut((n * b, n * cols), (b, cols));
            v0 += &t0;
            let mut v1 = j.view_mut((n * b, next * cols), (b, cols));
            v1 += &t1;
        }
        j
    }
}

/// A stencil bound to a system and a state, posed for the nonlinear solvers.
pub struct StencilProblem<'a> {
    pub stencil: &'a Stencil,
    pub sys: &'a MultisymplecticSystem,
    pub state: &'a [f64],
}

impl StepProblem for StencilProblem<'_> {
    fn len(&self) -> usize {
        self.stencil.unknown_len()
    }

    fn residual(&self, u: &[f64], out: &mut [f64]) {
        self.stencil.residual(self.sys, u, self.state, out);
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        self.stencil.dense_unknown_jacobian(self.sys, u, self.state)
    }

    fn linear_part(&self) -> BlockCirculant {
        self.stencil.frozen_operator(self.sys)
    }
}
