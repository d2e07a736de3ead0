//! Strong convergence against the exact stochastic soliton, with Wiener
//! paths coupled across step sizes by coarsening one fine path.

use std::path::Path;

use anyhow::{bail, Result};
use log::info;
use rayon::prelude::*;
use stochms::grid::Grid1D;
use stochms::nls::{exact_field, initial_condition, l2_difference, midpoint_step_transport, SolitonParams};
use stochms::noise::{member_seed, sample_path};

use crate::config::Config;
use crate::io::{fmt_f64, CsvSink};
use crate::run::metadata;

pub const CONVERGE_HEADER: [&str; 4] = ["xi", "dt", "rms_error", "members"];

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSeries {
    pub xi: f64,
    /// `(dt, rms error)` sorted by decreasing `dt`.
    pub rows: Vec<(f64, f64)>,
    pub members: usize,
}

impl ConvergenceSeries {
    /// Least-squares slope of `log error` against `log dt`; `None` for fewer
    /// than two step sizes.
    pub fn slope(&self) -> Option<f64> {
        if self.rows.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|(dt, e)| (dt.ln(), e.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }
}

/// Transport model only: the exact solution is the soliton shifted by `ξW`.
pub fn convergence_series(cfg: &Config, xi: f64, grid: &Grid1D, members: usize, base_seed: u64) -> Result<ConvergenceSeries> {
    if cfg.model.name != "nls-transport" || cfg.model.kappa != -1.0 {
        bail!("convergence needs the transport model with kappa = -1, which has an exact solution");
    }
    let c = &cfg.converge;
    let mut dts = c.dts.clone();
    dts.sort_by(|a, b| b.total_cmp(a));
    let finest = *dts.last().expect("validated non-empty");
    let fine_steps = (c.t1 / finest).round() as usize;
    let params = SolitonParams::with_xi(xi);
    let solver = cfg.solver();
    let truncation = cfg.truncation();

    let sq_errors: Vec<Vec<f64>> = (0..members)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let fine = sample_path(member_seed(base_seed, i), finest, fine_steps, truncation)?;
            let w_end = *fine.cumulative().last().expect("non-empty path");
            let exact = exact_field(grid, c.t1, w_end, &params);
            dts.iter()
                .map(|&dt| {
                    let path = fine.coarsen((dt / finest).round() as usize)?;
                    let mut psi = initial_condition(grid);
                    for &dw in path.increments() {
                        psi = midpoint_step_transport(&psi, dw, dt, grid, -1.0, xi, &solver)?.0;
                    }
                    Ok(l2_difference(&psi, &exact, grid).powi(2))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = dts
        .iter()
        .enumerate()
        .map(|(j, &dt)| {
            let mse = sq_errors.iter().map(|m| m[j]).sum::<f64>() / members as f64;
            info!("xi {xi}: dt {dt} rms error {:e}", mse.sqrt());
            (dt, mse.sqrt())
        })
        .collect();
    Ok(ConvergenceSeries { xi, rows, members })
}

/// The stochastic series at `converge.xi` plus, if enabled, the `ξ = 0`
/// limit. Without noise every member is identical, so that series uses one.
pub fn convergence_study(cfg: &Config, base_seed: u64) -> Result<Vec<ConvergenceSeries>> {
    let c = &cfg.converge;
    let grid = Grid1D::from_length(c.x0, c.length, c.dx)?;
    let mut out = vec![convergence_series(cfg, c.xi, &grid, c.members, base_seed)?];
    if c.deterministic {
        let grid = Grid1D::from_length(c.deterministic_x0, c.deterministic_length, c.deterministic_dx)?;
        out.push(convergence_series(cfg, 0.0, &grid, 1, base_seed)?);
    }
    Ok(out)
}

/// Writes `converge.csv`; fitted slopes go into the metadata.
pub fn write_convergence(path: &Path, cfg: &Config, base_seed: u64, series: &[ConvergenceSeries]) -> Result<()> {
    let mut meta = metadata(cfg, base_seed);
    for s in series {
        let slope = s.slope().map(fmt_f64).unwrap_or_else(|| "undefined".into());
        meta.push(&format!("slope_xi_{}", s.xi), slope);
    }
    let mut sink = CsvSink::create(path, "converge", &meta, &CONVERGE_HEADER)?;
    for s in series {
        for &(dt, e) in &s.rows {
            sink.row(&[fmt_f64(s.xi), fmt_f64(dt), fmt_f64(e), s.members.to_string()])?;
        }
    }
    sink.finish()
}
