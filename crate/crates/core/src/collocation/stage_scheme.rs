//! General `s × r` stage scheme on per-cell edge values.
//!
//! The state of cell `n` is its bottom-edge values `z_{0,m}`, `m = 1..s`.
//! Unknowns per cell, in order:
//!
//! ```text
//! [ z_{1,m} (s·m) | z_{i,0} (r·m) | Z_{i,m} (r·s·m) | X_{i,m} (r·s·m) | Y_{i,m} (r·s·m) ]
//! ```
//!
//! with stage blocks ordered temporal stage, then spatial stage, then
//! component. `X = Δx δ_x Z` and `Y = Δt δ_t^A Z + ΔW δ_t^M Z`; drift and
//! diffusion coefficients must coincide so that only `Y` enters the stage
//! relations. Equations use the same slot layout:
//!
//! ```text
//! z_{1,m} − z_{0,m} − Σ_j b̄_j Y_{j,m}            = 0
//! z_{i,0}(n+1) − z_{i,0}(n) − Σ_j b_j X_{i,j}     = 0
//! Z_{i,m} − z_{i,0} − Σ_j a_{mj} X_{i,j}          = 0
//! Z_{i,m} − z_{0,m} − Σ_j ā_{ij} Y_{j,m}          = 0
//! M Y_{i,m} + (Δt K + ΔW K̃) X_{i,m} / Δx − G(Z_{i,m}) = 0
//! ```

use nalgebra::DMatrix;

use super::stencil::{LocalMap, Stencil};
use super::CollocationEngine;
use crate::error::Result;
use crate::grid::Grid1D;
use crate::system::MultisymplecticSystem;
use crate::tableau::TableauPair;

pub struct StageEngine;

#[derive(Clone, Copy, Debug)]
pub struct StageLayout {
    pub m: usize,
    pub s: usize,
    pub r: usize,
}

impl StageLayout {
    pub fn block(&self) -> usize {
        (self.s + self.r + 3 * self.r * self.s) * self.m
    }
    pub fn z1(&self, ms: usize) -> usize {
        ms * self.m
    }
    pub fn edge(&self, i: usize) -> usize {
        (self.s + i) * self.m
    }
    fn stage_base(&self, slot: usize) -> usize {
        (self.s + self.r + slot * self.r * self.s) * self.m
    }
    pub fn point(&self, i: usize, ms: usize) -> usize {
        i * self.s + ms
    }
    pub fn zstage(&self, i: usize, ms: usize) -> usize {
        self.stage_base(0) + self.point(i, ms) * self.m
    }
    pub fn xinc(&self, i: usize, ms: usize) -> usize {
        self.stage_base(1) + self.point(i, ms) * self.m
    }
    pub fn yinc(&self, i: usize, ms: usize) -> usize {
        self.stage_base(2) + self.point(i, ms) * self.m
    }
}

fn add_identity(a: &mut DMatrix<f64>, row: usize, col: usize, m: usize, w: f64) {
    if w == 0.0 {
        return;
    }
    for k in 0..m {
        a[(row + k, col + k)] += w;
    }
}

fn select(rows: usize, cols: usize, m: usize, pairs: impl Iterator<Item = (usize, usize)>) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows, cols);
    for (row, col) in pairs {
        add_identity(&mut a, row, col, m, 1.0);
    }
    a
}

impl CollocationEngine for StageEngine {
    fn name(&self) -> &'static str {
        "stage"
    }

    fn state_width(&self, m: usize, tab: &TableauPair) -> usize {
        tab.s() * m
    }

    fn stencil(&self, sys: &MultisymplecticSystem, grid: &Grid1D, tab: &TableauPair, dt: f64, dw: f64) -> Result<Stencil> {
        let (m, s, r) = (sys.m, tab.s(), tab.r());
        let lay = StageLayout { m, s, r };
        let b = lay.block();
        let sw = s * m;
        let pts = r * s;
        let (a, bw) = (&tab.spatial.a, &tab.spatial.b);
        let (abar, bbar) = (&tab.drift.a, &tab.drift.b);
        let kc = (sys.k.matrix() * dt + sys.ktilde.matrix() * dw) / grid.dx;

        let mut linear = LocalMap::zeros(b, b, sw);
        for ms in 0..s {
            let row = lay.z1(ms);
            add_identity(&mut linear.u0, row, lay.z1(ms), m, 1.0);
            add_identity(&mut linear.z0, row, ms * m, m, -1.0);
            for j in 0..r {
                add_identity(&mut linear.u0, row, lay.yinc(j, ms), m, -bbar[j]);
            }
        }
        for i in 0..r {
            let row = lay.edge(i);
            add_identity(&mut linear.u1, row, lay.edge(i), m, 1.0);
            add_identity(&mut linear.u0, row, lay.edge(i), m, -1.0);
            for j in 0..s {
                add_identity(&mut linear.u0, row, lay.xinc(i, j), m, -bw[j]);
            }
        }
        for i in 0..r {
            for ms in 0..s {
                let row = lay.zstage(i, ms);
                add_identity(&mut linear.u0, row, lay.zstage(i, ms), m, 1.0);
                add_identity(&mut linear.u0, row, lay.edge(i), m, -1.0);
                for j in 0..s {
                    add_identity(&mut linear.u0, row, lay.xinc(i, j), m, -a[(ms, j)]);
                }

                let row = lay.xinc(i, ms);
                add_identity(&mut linear.u0, row, lay.zstage(i, ms), m, 1.0);
                add_identity(&mut linear.z0, row, ms * m, m, -1.0);
                for j in 0..r {
                    add_identity(&mut linear.u0, row, lay.yinc(j, ms), m, -abar[(i, j)]);
                }

                let row = lay.yinc(i, ms);
                linear.u0.view_mut((row, lay.yinc(i, ms)), (m, m)).copy_from(sys.mm.matrix());
                linear.u0.view_mut((row, lay.xinc(i, ms)), (m, m)).copy_from(&kc);
            }
        }

        let points = |f: fn(&StageLayout, usize, usize) -> usize| {
            let lay = lay;
            (0..r).flat_map(move |i| (0..s).map(move |ms| (lay.point(i, ms) * m, f(&lay, i, ms))))
        };
        let forcing = select(b, pts * m, m, points(StageLayout::yinc).map(|(p, row)| (row, p)));
        let stage_sel = select(pts * m, b, m, points(StageLayout::zstage));
        let xsel = select(pts * m, b, m, points(StageLayout::xinc));
        let ysel = select(pts * m, b, m, points(StageLayout::yinc));
        let z1sel = select(sw, b, m, (0..s).map(|ms| (ms * m, lay.z1(ms))));
        let esel = select(r * m, b, m, (0..r).map(|i| (i * m, lay.edge(i))));

        let only_u0 = |mat: DMatrix<f64>| {
            let rows = mat.nrows();
            LocalMap {
                u0: mat,
                ..LocalMap::zeros(rows, b, sw)
            }
        };
        let time_edge0 = LocalMap {
            z0: DMatrix::identity(sw, sw),
            ..LocalMap::zeros(sw, b, sw)
        };
        let space_edge1 = LocalMap {
            u1: esel.clone(),
            ..LocalMap::zeros(r * m, b, sw)
        };

        let mut guess = DMatrix::zeros(b, sw);
        for ms in 0..s {
            add_identity(&mut guess, lay.z1(ms), ms * m, m, 1.0);
            for i in 0..r {
                add_identity(&mut guess, lay.zstage(i, ms), ms * m, m, 1.0);
            }
        }
        for i in 0..r {
            add_identity(&mut guess, lay.edge(i), 0, m, 1.0);
        }

        Ok(Stencil {
            engine: "stage",
            n_cells: grid.n_cells,
            m,
            s,
            r,
            unknown_block: b,
            state_block: sw,
            points: pts,
            dt,
            dw,
            dx: grid.dx,
            linear,
            forcing,
            stages: only_u0(stage_sel),
            dx_increment: only_u0(xsel),
            dt_increment: only_u0(ysel),
            time_edge0,
            time_edge1: only_u0(z1sel.clone()),
            space_edge0: only_u0(esel),
            space_edge1,
            next_state: z1sel,
            guess,
        })
    }
}
