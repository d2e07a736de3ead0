//! Nonlinear solvers for the global implicit system of one time step.
//!
//! A [`StepProblem`] exposes its residual, dense Jacobian and a factored
//! block-circulant linear part. The fixed-point solver iterates
//! `u ← u − L⁻¹ R(u)`; Newton uses the dense Jacobian.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Block-circulant operator `(L u)_n = Σ_k T_k u_{n+k mod N}` with `B×B` taps.
pub struct BlockCirculant {
    n: usize,
    block: usize,
    taps: Vec<(usize, DMatrix<f64>)>,
}

impl BlockCirculant {
    pub fn new(n: usize, block: usize, taps: Vec<(usize, DMatrix<f64>)>) -> Self {
        for (_, t) in &taps {
            assert_eq!(t.shape(), (block, block), "tap shape");
        }
        Self { n, block, taps }
    }

    pub fn len(&self) -> usize {
        self.n * self.block
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let b = self.block;
        out.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..self.n {
            for (k, t) in &self.taps {
                let col = ((n + k) % self.n) * b;
                for i in 0..b {
                    let mut acc = 0.0;
                    for j in 0..b {
                        acc += t[(i, j)] * u[col + j];
                    }
                    out[n * b + i] += acc;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block;
        let mut d = DMatrix::zeros(self.len(), self.len());
        for n in 0..self.n {
            for (k, t) in &self.taps {
                let col = ((n + k) % self.n) * b;
                let mut view = d.view_mut((n * b, col), (b, b));
                view += t;
            }
        }
        d
    }

    /// Inverts every Fourier symbol `Σ_k T_k ω^{jk}`.
    pub fn factor(&self) -> Result<CirculantSolver> {
        let (n, b) = (self.n, self.block);
        let mut inverses = Vec::with_capacity(n);
        let mut worst: f64 = f64::INFINITY;
        for j in 0..n {
            let mut sym = DMatrix::<Complex64>::zeros(b, b);
            for (k, t) in &self.taps {
                let phase = 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                let w = Complex64::from_polar(1.0, phase);
                for r in 0..b {
                    for c in 0..b {
                        sym[(r, c)] += w * t[(r, c)];
                    }
                }
            }
            let scale = sym.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let lu = sym.lu();
            let diag: Vec<f64> = lu.u().diagonal().iter().map(|z| z.norm()).collect();
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.min(dmin / scale);
            if dmin <= 1e-14 * scale {
                return Err(Error::Singular { condition: dmin / scale });
            }
            inverses.push(lu.try_inverse().ok_or(Error::Singular { condition: 0.0 })?);
        }
        let mut planner = FftPlanner::new();
        Ok(CirculantSolver {
            n,
            block: b,
            inverses,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            min_pivot_ratio: worst,
        })
    }
}

/// Factored [`BlockCirculant`].
pub struct CirculantSolver {
    n: usize,
    block: usize,
    inverses: Vec<DMatrix<Complex64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    pub min_pivot_ratio: f64,
}

impl CirculantSolver {
    /// Writes `L⁻¹ r` into `out`.
    pub fn solve(&self, r: &[f64], out: &mut [f64]) {
        let (n, b) = (self.n, self.block);
        let mut spectra: Vec<Vec<Complex64>> = (0..b)
            .map(|c| (0..n).map(|i| Complex64::new(r[i * b + c], 0.0)).collect())
            .collect();
        for s in &mut spectra {
            self.forward.process(s);
        }
        let mut tmp = vec![Complex64::new(0.0, 0.0); b];
        for j in 0..n {
            let inv = &self.inverses[j];
            for (row, t) in tmp.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, s) in spectra.iter().enumerate() {
                    acc += inv[(row, col)] * s[j];
                }
                *t = acc;
            }
            for (c, s) in spectra.iter_mut().enumerate() {
                s[j] = tmp[c];
            }
        }
        let scale = 1.0 / n as f64;
        for (c, s) in spectra.iter_mut().enumerate() {
            self.inverse.process(s);
            for i in 0..n {
                out[i * b + c] = s[i].re * scale;
            }
        }
    }
}

/// One implicit time step posed as `R(u) = 0`.
pub trait StepProblem {
    fn len(&self) -> usize;
    fn residual(&self, u: &[f64], out: &mut [f64]);
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;
    /// Linear part of `R` with Hessians frozen at the origin.
    fn linear_part(&self) -> BlockCirculant;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    FixedPoint,
    Newton,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::FixedPoint => "fixed-point",
            SolverKind::Newton => "newton",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: String,
    pub tol: f64,
    pub max_iter: usize,
    /// Retry with Newton when the primary method fails to converge.
    pub newton_fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: "fixed-point".into(),
            tol: 1e-6,
            max_iter: 100,
            newton_fallback: true,
        }
    }
}

impl SolverConfig {
    pub fn newton(tol: f64) -> Self {
        Self {
            method: "newton".into(),
            tol,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual_norm: f64,
    pub solver: SolverKind,
}

pub trait NonlinearSolver: Send + Sync {
    fn kind(&self) -> SolverKind;
    fn solve(&self, problem: &dyn StepProblem, u: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats>;
}

fn max_norm(v: &[f64]) -> f64 {
    if v.iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub struct FixedPoint;

impl NonlinearSolver for FixedPoint {
    fn kind(&self) -> SolverKind {
        SolverKind::FixedPoint
    }

    fn solve(&self, problem: &dyn StepProblem, u: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
        let lin = problem.linear_part().factor()?;
        let n = problem.len();
        let mut r = vec![0.0; n];
        let mut du = vec![0.0; n];
        problem.residual(u, &mut r);
        let mut norm = max_norm(&r);
        let mut it = 0;
        loop {
            if !norm.is_finite() {
                return Err(Error::Diverged { iteration: it });
            }
            if norm <= tol {
                // The correction from the accepted residual is already one
                // solve away; keep it when it does not increase the residual.
                if norm > 0.0 {
                    lin.solve(&r, &mut du);
                    let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x - d).collect();
                    problem.residual(&trial, &mut r);
                    let polished = max_norm(&r);
                    if polished <= norm {
                        u.copy_from_slice(&trial);
                        norm = polished;
                    }
                }
                return Ok(SolveStats {
                    iterations: it,
                    residual_norm: norm,
                    solver: SolverKind::FixedPoint,
                });
            }
            if it == max_iter {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: norm,
                });
            }
            lin.solve(&r, &mut du);
            u.iter_mut().zip(&du).for_each(|(x, d)| *x -= d);
            it += 1;
            problem.residual(u, &mut r);
            norm = max_norm(&r);
        }
    }
}

pub struct Newton;

impl NonlinearSolver for Newton {
    fn kind(&self) -> SolverKind {
        SolverKind::Newton
    }

    fn solve(&self, problem: &dyn StepProblem, u: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
        let n = problem.len();
        let mut r = vec![0.0; n];
        problem.residual(u, &mut r);
        let mut norm = max_norm(&r);
        let mut it = 0;
        loop {
            if !norm.is_finite() {
                return Err(Error::Diverged { iteration: it });
            }
            if norm <= tol {
                return Ok(SolveStats {
                    iterations: it,
                    residual_norm: norm,
                    solver: SolverKind::Newton,
                });
            }
            if it == max_iter {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: norm,
                });
            }
            let du = dense_solve(problem.jacobian(u), DVector::from_column_slice(&r))?;
            u.iter_mut().zip(du.iter()).for_each(|(x, d)| *x -= d);
            it += 1;
            problem.residual(u, &mut r);
            norm = max_norm(&r);
        }
    }
}

/// LU solve that reports the pivot ratio `min |u_ii| / max |u_ii|` on failure.
pub fn dense_solve(a: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let diag = lu.u().diagonal();
    let dmax = diag.amax();
    let dmin = diag.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let ratio = if dmax > 0.0 { dmin / dmax } else { 0.0 };
    if !(ratio > 1e-14) {
        return Err(Error::Singular { condition: ratio });
    }
    lu.solve(&rhs).ok_or(Error::Singular { condition: ratio })
}

pub type SolverFactory = fn() -> Box<dyn NonlinearSolver>;

pub fn solver_registry() -> Registry<SolverFactory> {
    Registry::<SolverFactory>::new("solver")
        .with("fixed-point", || Box::new(FixedPoint))
        .with("newton", || Box::new(Newton))
}

/// Runs the configured solver, falling back to Newton on non-convergence when
/// enabled. `u` holds the initial guess on entry.
pub fn solve(problem: &dyn StepProblem, u: &mut [f64], cfg: &SolverConfig) -> Result<SolveStats> {
    let reg = solver_registry();
    let primary = (reg.get(&cfg.method)?)();
    let start = u.to_vec();
    match primary.solve(problem, u, cfg.tol, cfg.max_iter) {
        Ok(stats) => Ok(stats),
        Err(err @ (Error::NotConverged { .. } | Error::Diverged { .. }))
            if cfg.newton_fallback && primary.kind() != SolverKind::Newton =>
        {
            log::warn!("{} failed ({err}); retrying with Newton", primary.kind());
            u.copy_from_slice(&start);
            Newton.solve(problem, u, cfg.tol, cfg.max_iter)
        }
        Err(err) => Err(err),
    }
}
