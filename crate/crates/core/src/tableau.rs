//! Spatial and temporal Runge–Kutta coefficient sets.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub const TABLEAU_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

impl ButcherTableau {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Self {
        Self { a, b, c }
    }

    pub fn from_rows(a: &[&[f64]], b: &[f64], c: &[f64]) -> Self {
        let s = b.len();
        let a = DMatrix::from_fn(s, s, |i, j| a[i][j]);
        Self::new(a, DVector::from_column_slice(b), DVector::from_column_slice(c))
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn midpoint() -> Self {
        Self::from_rows(&[&[0.5]], &[1.0], &[0.5])
    }

    /// Forward Euler: `a = 0, b = 1, c = 0`.
    pub fn explicit_euler() -> Self {
        Self::from_rows(&[&[0.0]], &[1.0], &[0.0])
    }

    /// Two-stage Gauss–Legendre.
    pub fn gauss2() -> Self {
        let r = 3f64.sqrt() / 6.0;
        Self::from_rows(&[&[0.25, 0.25 - r], &[0.25 + r, 0.25]], &[0.5, 0.5], &[0.5 - r, 0.5 + r])
    }

    fn check_shape(&self, name: &str) -> Result<()> {
        let s = self.stages();
        if s == 0 {
            return Err(Error::Tableau(format!("{name} tableau has no stages")));
        }
        if self.a.shape() != (s, s) || self.c.len() != s {
            return Err(Error::Tableau(format!(
                "{name} tableau shapes disagree: a {:?}, b {}, c {}",
                self.a.shape(),
                s,
                self.c.len()
            )));
        }
        Ok(())
    }
}

/// Spatial tableau `(a, b, c)`, temporal drift tableau `(ā, b̄, d)` and
/// temporal diffusion coefficients `(ᾱ, β̄)` sharing the abscissae `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableauPair {
    pub name: String,
    pub spatial: ButcherTableau,
    pub drift: ButcherTableau,
    pub alpha: DMatrix<f64>,
    pub beta: DVector<f64>,
}

impl TableauPair {
    /// Diffusion coefficients equal to the drift coefficients.
    pub fn new(name: impl Into<String>, spatial: ButcherTableau, temporal: ButcherTableau) -> Self {
        Self {
            name: name.into(),
            alpha: temporal.a.clone(),
            beta: temporal.b.clone(),
            spatial,
            drift: temporal,
        }
    }

    pub fn s(&self) -> usize {
        self.spatial.stages()
    }

    pub fn r(&self) -> usize {
        self.drift.stages()
    }

    /// Structural validation: non-empty, shape-consistent coefficient arrays.
    pub fn validate_shape(&self) -> Result<()> {
        self.spatial.check_shape("spatial")?;
        self.drift.check_shape("temporal")?;
        let r = self.r();
        if self.alpha.shape() != (r, r) || self.beta.len() != r {
            return Err(Error::Tableau("diffusion coefficients do not match the temporal stage count".into()));
        }
        Ok(())
    }

    /// Whether drift and diffusion coefficients coincide exactly.
    pub fn shared_temporal(&self) -> bool {
        self.alpha == self.drift.a && self.beta == self.drift.b
    }

    pub fn is_symplectic(&self) -> bool {
        self.validate_shape().is_ok() && check_symplecticity(self).pass
    }
}

pub fn midpoint_tableau() -> TableauPair {
    TableauPair::new("midpoint", ButcherTableau::midpoint(), ButcherTableau::midpoint())
}

/// Forward Euler in space, midpoint in time.
pub fn explicit_euler_tableau() -> TableauPair {
    TableauPair::new("explicit-euler", ButcherTableau::explicit_euler(), ButcherTableau::midpoint())
}

pub fn gauss2_tableau() -> TableauPair {
    TableauPair::new("gauss2", ButcherTableau::gauss2(), ButcherTableau::gauss2())
}

pub type TableauFactory = fn() -> TableauPair;

pub fn tableau_registry() -> Registry<TableauFactory> {
    Registry::<TableauFactory>::new("tableau")
        .with("midpoint", midpoint_tableau)
        .with("explicit-euler", explicit_euler_tableau)
        .with("gauss2", gauss2_tableau)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub residuals: Vec<(&'static str, f64)>,
    pub tol: f64,
    pub pass: bool,
}

impl ConditionReport {
    fn new(residuals: Vec<(&'static str, f64)>, tol: f64) -> Self {
        let pass = residuals.iter().all(|(_, r)| r.is_finite() && *r <= tol);
        Self { residuals, tol, pass }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(n, _)| *n == name).map(|(_, r)| *r)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, r) in &self.residuals {
            writeln!(f, "  {name:<28} {r:.3e}")?;
        }
        write!(f, "  {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn row_sum_residual(a: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    (0..c.len())
        .map(|i| (a.row(i).sum() - c[i]).abs())
        .fold(0.0, f64::max)
}

/// Row sums equal abscissae and every weight vector sums to one.
pub fn check_consistency(tab: &TableauPair) -> ConditionReport {
    let residuals = vec![
        ("spatial row sums (c)", row_sum_residual(&tab.spatial.a, &tab.spatial.c)),
        ("drift row sums (d)", row_sum_residual(&tab.drift.a, &tab.drift.c)),
        ("diffusion row sums (d)", row_sum_residual(&tab.alpha, &tab.drift.c)),
        ("spatial weights sum", (tab.spatial.b.sum() - 1.0).abs()),
        ("drift weights sum", (tab.drift.b.sum() - 1.0).abs()),
        ("diffusion weights sum", (tab.beta.sum() - 1.0).abs()),
    ];
    ConditionReport::new(residuals, TABLEAU_TOL)
}

/// `max |u_i v_j - A_{ji} w_j - u_i A_{ij}|` over all `(i, j)`.
fn pair_residual(u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>, aa: &DMatrix<f64>) -> f64 {
    let r = u.len();
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in 0..r {
            worst = worst.max((u[i] * v[j] - aa[(j, i)] * w[j] - u[i] * aa[(i, j)]).abs());
        }
    }
    worst
}

pub fn check_symplecticity(tab: &TableauPair) -> ConditionReport {
    let sp = &tab.spatial;
    let (abar, bbar) = (&tab.drift.a, &tab.drift.b);
    let (alpha, beta) = (&tab.alpha, &tab.beta);
    let residuals = vec![
        ("spatial", pair_residual(&sp.b, &sp.b, &sp.b, &sp.a)),
        ("temporal drift-drift", pair_residual(bbar, bbar, bbar, abar)),
        ("temporal diffusion-diffusion", pair_residual(beta, beta, beta, alpha)),
        ("temporal drift-diffusion", pair_residual(bbar, beta, bbar, alpha)),
        ("temporal diffusion-drift", pair_residual(beta, bbar, beta, abar)),
    ];
    ConditionReport::new(residuals, TABLEAU_TOL)
}
