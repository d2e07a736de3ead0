//! Constant-structure stochastic multisymplectic systems
//!
//! ```text
//! M dz + K z_x dt + K̃ z_x ∘ dW = ∇H(z) dt + ∇H̃(z) ∘ dW
//! ```
//!
//! with skew-symmetric `M`, `K`, `K̃` and the two concrete nonlinear
//! Schrödinger instances (transport and dispersion noise). Components are
//! ordered `z = (p, q, v, w)` throughout.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Skew-symmetric structure matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix {
    entries: DMatrix<f64>,
}

impl SkewMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    /// Builds `L - Lᵀ` from the strictly lower triangle of `generator`, so the
    /// result is exactly skew.
    pub fn from_lower(generator: &DMatrix<f64>) -> Self {
        assert!(generator.is_square(), "generator must be square");
        let dim = generator.nrows();
        let mut entries = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..i {
                entries[(i, j)] = generator[(i, j)];
                entries[(j, i)] = -generator[(i, j)];
            }
        }
        Self { entries }
    }

    /// Builds from `(row, col, value)` triples with `row > col`.
    pub fn from_lower_entries(dim: usize, lower: &[(usize, usize, f64)]) -> Self {
        let mut gen = DMatrix::zeros(dim, dim);
        for &(i, j, v) in lower {
            assert!(i > j, "entry ({i},{j}) is not strictly lower");
            gen[(i, j)] = v;
        }
        Self::from_lower(&gen)
    }

    /// Wraps an arbitrary matrix without checking skew-symmetry. Intended for
    /// importing external data; [`validate_system`] reports any asymmetry.
    pub fn from_raw(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }

    /// `uᵀ A v`.
    pub fn pair(&self, u: &[f64], v: &[f64]) -> f64 {
        // Mirrored entries are paired so that `pair(u, u)` cancels exactly.
        let m = self.dim();
        let a = &self.entries;
        let mut acc = 0.0;
        for i in 0..m {
            acc += a[(i, i)] * (u[i] * v[i]);
            for j in 0..i {
                acc += a[(i, j)] * (u[i] * v[j]) + a[(j, i)] * (u[j] * v[i]);
            }
        }
        acc
    }

    /// Max |A + Aᵀ|.
    pub fn skew_residual(&self) -> f64 {
        let m = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.entries[(i, j)] + self.entries[(j, i)]).abs());
            }
        }
        worst
    }
}

/// A scalar Hamiltonian on `R^m` with analytic first and second derivatives.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn grad(&self, z: &[f64]) -> DVector<f64>;
    fn hess(&self, z: &[f64]) -> DMatrix<f64>;

    /// Symmetric `A` with `H(z) = ⟨z, A z⟩`, when the Hamiltonian is quadratic.
    fn quadratic_form(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// `H(z) = ⟨z, A z⟩` for symmetric `A`.
#[derive(Clone, Debug)]
pub struct QuadraticHamiltonian {
    a: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    pub fn new(a: DMatrix<f64>) -> Self {
        assert!(a.is_square());
        Self { a }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim))
    }
}

impl Hamiltonian for QuadraticHamiltonian {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        z.dot(&(&self.a * &z))
    }

    fn grad(&self, z: &[f64]) -> DVector<f64> {
        let z = DVector::from_column_slice(z);
        (&self.a + self.a.transpose()) * z
    }

    fn hess(&self, _z: &[f64]) -> DMatrix<f64> {
        &self.a + self.a.transpose()
    }

    fn quadratic_form(&self) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
}

/// `H(p, q, v, w) = -½ (κ (p² + q²)² - v² - w²)`.
#[derive(Clone, Copy, Debug)]
pub struct NlsHamiltonian {
    pub kappa: f64,
}

impl Hamiltonian for NlsHamiltonian {
    fn dim(&self) -> usize {
        4
    }

    fn value(&self, z: &[f64]) -> f64 {
        let rho = z[0] * z[0] + z[1] * z[1];
        -0.5 * (self.kappa * rho * rho - z[2] * z[2] - z[3] * z[3])
    }

    fn grad(&self, z: &[f64]) -> DVector<f64> {
        let (p, q) = (z[0], z[1]);
        let rho = p * p + q * q;
        DVector::from_vec(vec![
            -2.0 * self.kappa * rho * p,
            -2.0 * self.kappa * rho * q,
            z[2],
            z[3],
        ])
    }

    fn hess(&self, z: &[f64]) -> DMatrix<f64> {
        let (p, q) = (z[0], z[1]);
        let k = self.kappa;
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = -2.0 * k * (3.0 * p * p + q * q);
        h[(1, 1)] = -2.0 * k * (p * p + 3.0 * q * q);
        h[(0, 1)] = -4.0 * k * p * q;
        h[(1, 0)] = h[(0, 1)];
        h[(2, 2)] = 1.0;
        h[(3, 3)] = 1.0;
        h
    }

    fn quadratic_form(&self) -> Option<DMatrix<f64>> {
        (self.kappa == 0.0).then(|| DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5])))
    }
}

/// Drift Hamiltonian `H` and noise Hamiltonian `H̃`.
#[derive(Clone, Debug)]
pub struct HamiltonianPair {
    pub drift: Arc<dyn Hamiltonian>,
    pub noise: Arc<dyn Hamiltonian>,
}

impl HamiltonianPair {
    pub fn value(&self, z: &[f64]) -> f64 {
        self.drift.value(z)
    }
    pub fn stoch_value(&self, z: &[f64]) -> f64 {
        self.noise.value(z)
    }
    pub fn grad(&self, z: &[f64]) -> DVector<f64> {
        self.drift.grad(z)
    }
    pub fn stoch_grad(&self, z: &[f64]) -> DVector<f64> {
        self.noise.grad(z)
    }
    pub fn hess(&self, z: &[f64]) -> DMatrix<f64> {
        self.drift.hess(z)
    }
    pub fn stoch_hess(&self, z: &[f64]) -> DMatrix<f64> {
        self.noise.hess(z)
    }

    pub fn is_quadratic(&self) -> bool {
        self.quadratic_forms().is_some()
    }

    /// `(A, Ã)` when both Hamiltonians are quadratic.
    pub fn quadratic_forms(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.drift.quadratic_form()?, self.noise.quadratic_form()?))
    }
}

#[derive(Clone, Debug)]
pub struct MultisymplecticSystem {
    pub m: usize,
    pub mm: SkewMatrix,
    pub k: SkewMatrix,
    pub ktilde: SkewMatrix,
    pub ham: HamiltonianPair,
    pub label: String,
}

impl MultisymplecticSystem {
    pub fn new(
        label: impl Into<String>,
        mm: SkewMatrix,
        k: SkewMatrix,
        ktilde: SkewMatrix,
        ham: HamiltonianPair,
    ) -> Result<Self> {
        let m = mm.dim();
        let dims = [
            ("K", k.dim()),
            ("K̃", ktilde.dim()),
            ("H", ham.drift.dim()),
            ("H̃", ham.noise.dim()),
        ];
        for (name, d) in dims {
            if d != m {
                return Err(Error::Dimension(format!("{name} has dimension {d}, M has {m}")));
            }
        }
        Ok(Self {
            m,
            mm,
            k,
            ktilde,
            ham,
            label: label.into(),
        })
    }
}

/// Symplectic pairing of `p` and `q`: only `M₁₂ = 1` (and `M₂₁ = -1`).
fn nls_time_structure() -> SkewMatrix {
    SkewMatrix::from_lower_entries(4, &[(1, 0, -1.0)])
}

/// Space structure pairing `p ↔ v` and `q ↔ w`: `K₁₃ = K₂₄ = -1`.
fn nls_space_structure() -> SkewMatrix {
    SkewMatrix::from_lower_entries(4, &[(2, 0, 1.0), (3, 1, 1.0)])
}

/// NLS with stochastic transport: `K̃ = ξ M`, `H̃ ≡ 0`.
pub fn nls_transport_system(kappa: f64, xi: f64) -> MultisymplecticSystem {
    let mm = nls_time_structure();
    let ktilde = mm.scaled(xi);
    MultisymplecticSystem::new(
        "nls-transport",
        mm,
        nls_space_structure(),
        ktilde,
        HamiltonianPair {
            drift: Arc::new(NlsHamiltonian { kappa }),
            noise: Arc::new(QuadraticHamiltonian::zero(4)),
        },
    )
    .expect("NLS dimensions are consistent")
}

/// NLS with stochastic dispersion: `K̃ = ε K`, `H̃ = (ε/2)(v² + w²)`.
pub fn nls_dispersion_system(kappa: f64, epsilon: f64) -> MultisymplecticSystem {
    let k = nls_space_structure();
    let ktilde = k.scaled(epsilon);
    let atilde = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 0.5 * epsilon, 0.5 * epsilon]));
    MultisymplecticSystem::new(
        "nls-dispersion",
        nls_time_structure(),
        k,
        ktilde,
        HamiltonianPair {
            drift: Arc::new(NlsHamiltonian { kappa }),
            noise: Arc::new(QuadraticHamiltonian::new(atilde)),
        },
    )
    .expect("NLS dimensions are consistent")
}

/// Deterministic NLS (`K̃ = 0`, `H̃ ≡ 0`).
pub fn nls_deterministic_system(kappa: f64) -> MultisymplecticSystem {
    let mut sys = nls_transport_system(kappa, 0.0);
    sys.label = "nls-deterministic".into();
    sys
}

/// Model parameters accepted by the system registry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NlsParams {
    pub kappa: f64,
    pub xi: f64,
    pub epsilon: f64,
}

impl Default for NlsParams {
    fn default() -> Self {
        Self {
            kappa: -1.0,
            xi: 0.1,
            epsilon: 0.02,
        }
    }
}

pub type SystemFactory = fn(&NlsParams) -> MultisymplecticSystem;

pub fn system_registry() -> Registry<SystemFactory> {
    Registry::<SystemFactory>::new("model")
        .with("nls-transport", |p| nls_transport_system(p.kappa, p.xi))
        .with("nls-dispersion", |p| nls_dispersion_system(p.kappa, p.epsilon))
        .with("nls-deterministic", |p| nls_deterministic_system(p.kappa))
}

#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    /// Threshold for checks that hold exactly by construction.
    pub exact_tol: f64,
    /// Threshold for finite-difference derivative checks (relative).
    pub fd_tol: f64,
    pub fd_step: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            exact_tol: 1e-8,
            fd_tol: 1e-5,
            fd_step: 1e-5,
            samples: 100,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub skew_m: f64,
    pub skew_k: f64,
    pub skew_ktilde: f64,
    pub hess_symmetry: f64,
    pub grad_fd: f64,
    pub hess_fd: f64,
    /// `|H(z) - ⟨z, A z⟩|` for quadratic pairs.
    pub quadratic_form: Option<f64>,
    pub pass: bool,
}

impl StructureReport {
    pub fn skew_residual(&self) -> f64 {
        self.skew_m.max(self.skew_k).max(self.skew_ktilde)
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "skew M            {:.3e}", self.skew_m)?;
        writeln!(f, "skew K            {:.3e}", self.skew_k)?;
        writeln!(f, "skew K~           {:.3e}", self.skew_ktilde)?;
        writeln!(f, "hessian symmetry  {:.3e}", self.hess_symmetry)?;
        writeln!(f, "gradient FD       {:.3e}", self.grad_fd)?;
        writeln!(f, "hessian FD        {:.3e}", self.hess_fd)?;
        if let Some(q) = self.quadratic_form {
            writeln!(f, "quadratic form    {q:.3e}")?;
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

fn check_hamiltonian(h: &dyn Hamiltonian, points: &[Vec<f64>], step: f64) -> (f64, f64, f64) {
    let m = h.dim();
    let (mut sym, mut gfd, mut hfd): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for z in points {
        let g = h.grad(z);
        let hs = h.hess(z);
        sym = sym.max((&hs - hs.transpose()).amax());
        let mut zp = z.clone();
        for a in 0..m {
            zp[a] = z[a] + step;
            let vp = h.value(&zp);
            let gp = h.grad(&zp);
            zp[a] = z[a] - step;
            let vm = h.value(&zp);
            let gm = h.grad(&zp);
            zp[a] = z[a];
            gfd = gfd.max(rel_err((vp - vm) / (2.0 * step), g[a]));
            for b in 0..m {
                hfd = hfd.max(rel_err((gp[b] - gm[b]) / (2.0 * step), hs[(b, a)]));
            }
        }
    }
    (sym, gfd, hfd)
}

/// Structural checks: skew-symmetry, Hessian symmetry and finite-difference
/// consistency of gradients and Hessians at seeded random points.
pub fn validate_system(sys: &MultisymplecticSystem, opts: &ValidationOptions) -> Result<StructureReport> {
    let m = sys.m;
    for (name, d) in [("M", sys.mm.dim()), ("K", sys.k.dim()), ("K̃", sys.ktilde.dim())] {
        if d != m {
            return Err(Error::Dimension(format!("{name} has dimension {d}, expected {m}")));
        }
    }
    if sys.ham.drift.dim() != m || sys.ham.noise.dim() != m {
        return Err(Error::Dimension("Hamiltonian dimension differs from structure matrices".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points: Vec<Vec<f64>> = (0..opts.samples)
        .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let (s1, g1, h1) = check_hamiltonian(sys.ham.drift.as_ref(), &points, opts.fd_step);
    let (s2, g2, h2) = check_hamiltonian(sys.ham.noise.as_ref(), &points, opts.fd_step);

    let quadratic_form = sys.ham.quadratic_forms().map(|(a, at)| {
        points
            .iter()
            .map(|z| {
                let v = DVector::from_column_slice(z);
                let e1 = (sys.ham.value(z) - v.dot(&(&a * &v))).abs();
                let e2 = (sys.ham.stoch_value(z) - v.dot(&(&at * &v))).abs();
                e1.max(e2)
            })
            .fold(0.0, f64::max)
    });

    let mut report = StructureReport {
        skew_m: sys.mm.skew_residual(),
        skew_k: sys.k.skew_residual(),
        skew_ktilde: sys.ktilde.skew_residual(),
        hess_symmetry: s1.max(s2),
        grad_fd: g1.max(g2),
        hess_fd: h1.max(h2),
        quadratic_form,
        pass: false,
    };
    report.pass = report.skew_residual() <= opts.exact_tol
        && report.hess_symmetry <= opts.exact_tol
        && report.quadratic_form.is_none_or(|q| q <= opts.exact_tol)
        && report.grad_fd <= opts.fd_tol
        && report.hess_fd <= opts.fd_tol;
    Ok(report)
}
