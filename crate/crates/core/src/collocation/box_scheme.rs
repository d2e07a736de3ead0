//! One-stage schemes on node values.
//!
//! With `s = r = 1` the edge values of cell `n` are interpolated from the
//! nodes: `z_{0,1} = (1−c) z_n + c z_{n+1}` at the old level, the same at the
//! new level, and `z_{1,0} = (1−d) z_n + d u_n` on the left edge. The unknown
//! block is the new node value `u_n` itself.

use nalgebra::DMatrix;

use super::stencil::{LocalMap, Stencil};
use super::CollocationEngine;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::system::MultisymplecticSystem;
use crate::tableau::TableauPair;

pub struct BoxEngine;

impl CollocationEngine for BoxEngine {
    fn name(&self) -> &'static str {
        "box"
    }

    fn state_width(&self, m: usize, _tab: &TableauPair) -> usize {
        m
    }

    fn stencil(&self, sys: &MultisymplecticSystem, grid: &Grid1D, tab: &TableauPair, dt: f64, dw: f64) -> Result<Stencil> {
        if tab.s() != 1 || tab.r() != 1 {
            return Err(Error::Tableau(format!(
                "node-value engine needs one-stage tableaux, got s = {}, r = {}",
                tab.s(),
                tab.r()
            )));
        }
        let m = sys.m;
        let c = tab.spatial.a[(0, 0)];
        let d = tab.drift.a[(0, 0)];
        let id = DMatrix::<f64>::identity(m, m);
        let mm = sys.mm.matrix();
        let kc = (sys.k.matrix() * dt + sys.ktilde.matrix() * dw) / grid.dx;

        let linear = LocalMap {
            u0: mm * (1.0 - c) - &kc * d,
            u1: mm * c + &kc * d,
            z0: -mm * (1.0 - c) - &kc * (1.0 - d),
            z1: -mm * c + &kc * (1.0 - d),
        };
        let stages = LocalMap {
            u0: &id * ((1.0 - c) * d),
            u1: &id * (c * d),
            z0: &id * ((1.0 - c) * (1.0 - d)),
            z1: &id * (c * (1.0 - d)),
        };
        let zero = DMatrix::zeros(m, m);
        let dx_increment = LocalMap {
            u0: &id * -d,
            u1: &id * d,
            z0: &id * -(1.0 - d),
            z1: &id * (1.0 - d),
        };
        let dt_increment = LocalMap {
            u0: &id * (1.0 - c),
            u1: &id * c,
            z0: &id * -(1.0 - c),
            z1: &id * -c,
        };
        let time_edge0 = LocalMap {
            u0: zero.clone(),
            u1: zero.clone(),
            z0: &id * (1.0 - c),
            z1: &id * c,
        };
        let time_edge1 = LocalMap {
            u0: &id * (1.0 - c),
            u1: &id * c,
            z0: zero.clone(),
            z1: zero.clone(),
        };
        let space_edge0 = LocalMap {
            u0: &id * d,
            u1: zero.clone(),
            z0: &id * (1.0 - d),
            z1: zero.clone(),
        };
        let space_edge1 = LocalMap {
            u0: zero.clone(),
            u1: &id * d,
            z0: zero.clone(),
            z1: &id * (1.0 - d),
        };
        Ok(Stencil {
            engine: "box",
            n_cells: grid.n_cells,
            m,
            s: 1,
            r: 1,
            unknown_block: m,
            state_block: m,
            points: 1,
            dt,
            dw,
            dx: grid.dx,
            linear,
            forcing: id.clone(),
            stages,
            dx_increment,
            dt_increment,
            time_edge0,
            time_edge1,
            space_edge0,
            space_edge1,
            next_state: id.clone(),
            guess: id,
        })
    }
}
