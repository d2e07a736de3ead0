use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Uniform periodic grid; node `n` sits at `x0 + n dx`, `n = 0..n_cells`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub n_cells: usize,
    pub dx: f64,
    pub x0: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, dx: f64, x0: f64) -> Result<Self> {
        if n_cells < 3 {
            return Err(Error::Config(format!("grid needs at least 3 cells, got {n_cells}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Config(format!("grid spacing must be positive, got {dx}")));
        }
        Ok(Self { n_cells, dx, x0 })
    }

    /// Grid covering `[x0, x0 + length)` with spacing `dx`; `dx` must divide `length`.
    pub fn from_length(x0: f64, length: f64, dx: f64) -> Result<Self> {
        let n = (length / dx).round();
        if !(n >= 1.0) || ((n * dx - length).abs() > 1e-9 * length.abs().max(1.0)) {
            return Err(Error::Config(format!("dx = {dx} does not divide length {length}")));
        }
        Self::new(n as usize, dx, x0)
    }

    pub fn length(&self) -> f64 {
        self.n_cells as f64 * self.dx
    }

    pub fn x(&self, n: usize) -> f64 {
        self.x0 + n as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_cells).map(|n| self.x(n)).collect()
    }

    pub fn next(&self, n: usize) -> usize {
        (n + 1) % self.n_cells
    }

    pub fn prev(&self, n: usize) -> usize {
        (n + self.n_cells - 1) % self.n_cells
    }
}

/// Node values of `z` at one time level, `n_cells × m`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub values: DMatrix<f64>,
}

impl FieldState {
    pub fn new(t: f64, values: DMatrix<f64>) -> Self {
        Self { t, values }
    }

    pub fn zeros(t: f64, n_cells: usize, m: usize) -> Self {
        Self::new(t, DMatrix::zeros(n_cells, m))
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Row-major flattening: node-major, then component.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.values)
    }

    pub fn from_flat(t: f64, n_cells: usize, m: usize, flat: &[f64]) -> Self {
        Self::new(t, unflatten(n_cells, m, flat))
    }
}

/// Perturbation of a [`FieldState`].
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub values: DMatrix<f64>,
}

impl TangentField {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n_cells: usize, m: usize) -> Self {
        Self::new(DMatrix::zeros(n_cells, m))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.values)
    }

    pub fn from_flat(n_cells: usize, m: usize, flat: &[f64]) -> Self {
        Self::new(unflatten(n_cells, m, flat))
    }
}

pub(crate) fn flatten(values: &DMatrix<f64>) -> Vec<f64> {
    let (n, m) = values.shape();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for a in 0..m {
            out.push(values[(i, a)]);
        }
    }
    out
}

pub(crate) fn unflatten(n: usize, m: usize, flat: &[f64]) -> DMatrix<f64> {
    assert_eq!(flat.len(), n * m, "flat length does not match {n}x{m}");
    DMatrix::from_row_slice(n, m, flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(2, 0.1, 0.0).is_err());
        assert!(Grid1D::new(8, 0.0, 0.0).is_err());
        let g = Grid1D::from_length(0.0, 40.0, 0.1).unwrap();
        assert_eq!(g.n_cells, 400);
        assert_eq!(g.next(399), 0);
        assert_eq!(g.prev(0), 399);
        assert!(Grid1D::from_length(0.0, 40.0, 0.3).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let s = FieldState::new(0.0, DMatrix::from_fn(5, 4, |i, j| (10 * i + j) as f64));
        let flat = s.to_flat();
        assert_eq!(flat[4 + 2], 12.0);
        assert_eq!(FieldState::from_flat(0.0, 5, 4, &flat), s);
    }
}
