//! Single realisations: step the model along one Wiener path and record the
//! global invariants, density snapshots and per-step solver reports.

use std::path::Path;

use anyhow::{Context, Result};
use log::{debug, info};
use stochms::conservation::{global_density, global_momentum};
use stochms::grid::Grid1D;
use stochms::nls::{initial_condition, peak_position, stepper_registry, PsiField, StepperSpec};
use stochms::noise::{sample_path, WienerPath, GENERATOR_ID};

use crate::config::Config;
use crate::io::{fmt_f64, CsvSink, Metadata};

pub const CONSERVATION_HEADER: [&str; 6] = ["step", "t", "density", "density_err", "momentum", "momentum_err"];
pub const STEPS_HEADER: [&str; 7] = ["step", "iterations", "residual", "dW", "clamped", "fallback", "peak"];

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationRow {
    pub step: usize,
    pub t: f64,
    pub density: f64,
    pub density_err: f64,
    pub momentum: f64,
    pub momentum_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
    pub dw: f64,
    pub clamped: bool,
    pub fallback: bool,
    pub peak: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub seed: u64,
    pub conservation: Vec<ConservationRow>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub steps: Vec<StepRow>,
    pub failure: Option<String>,
    pub final_state: PsiField,
    pub path: WienerPath,
}

impl RunRecord {
    pub fn max_abs_errors(&self) -> (f64, f64) {
        self.conservation.iter().fold((0.0, 0.0), |(d, m), r| {
            (d.max(r.density_err.abs()), m.max(r.momentum_err.abs()))
        })
    }
}

/// Steps the configured model from the soliton initial data. Solver failures
/// end the run early and are reported in `failure`.
pub fn simulate(cfg: &Config, seed: u64) -> Result<RunRecord> {
    let grid = cfg.grid()?;
    let steps = cfg.steps();
    let path = sample_path(seed, cfg.time.dt, steps, cfg.truncation())?;
    let tableau = (stochms::tableau::tableau_registry().get(&cfg.scheme.tableau)?)();
    let stepper = (stepper_registry().get(&cfg.scheme.stepper)?)(&StepperSpec {
        model: cfg.model.name.clone(),
        params: cfg.params(),
        tableau,
    })?;
    let solver = cfg.solver();

    let mut state = initial_condition(&grid);
    state.t = cfg.time.t0;
    let (d0, m0) = (global_density(&state, &grid), global_momentum(&state, &grid));
    let observe = |k: usize, s: &PsiField| {
        let (d, m) = (global_density(s, &grid), global_momentum(s, &grid));
        ConservationRow {
            step: k,
            t: s.t,
            density: d,
            density_err: d - d0,
            momentum: m,
            momentum_err: m - m0,
        }
    };
    let stride = cfg.output.snapshot_stride;
    let mut record = RunRecord {
        seed,
        conservation: vec![observe(0, &state)],
        snapshots: vec![(state.t, state.density())],
        steps: Vec::with_capacity(steps),
        failure: None,
        final_state: state.clone(),
        path: path.clone(),
    };
    info!("{} seed {seed}: {steps} steps on {} nodes", cfg.model.name, grid.n_cells);
    for (k, &dw) in path.increments().iter().enumerate() {
        let (next, stats) = match stepper.step(&state, dw, cfg.time.dt, &grid, &solver) {
            Ok(r) => r,
            Err(e) => {
                record.failure = Some(format!("step {}: {e}", k + 1));
                break;
            }
        };
        // Re-anchor time to avoid accumulating rounding in t.
        state = PsiField {
            t: cfg.time.t0 + (k + 1) as f64 * cfg.time.dt,
            ..next
        };
        if !state.is_finite() {
            record.failure = Some(format!("step {}: non-finite field", k + 1));
            break;
        }
        record.conservation.push(observe(k + 1, &state));
        record.steps.push(StepRow {
            step: k + 1,
            iterations: stats.iterations,
            residual: stats.residual_norm,
            dw,
            clamped: path.clamped(k),
            fallback: stats.solver.to_string() != solver.method,
            peak: peak_position(&state, &grid),
        });
        if (k + 1) % stride == 0 {
            record.snapshots.push((state.t, state.density()));
        }
        debug!("step {} iterations {} residual {:e}", k + 1, stats.iterations, stats.residual_norm);
    }
    record.final_state = state;
    Ok(record)
}

pub fn metadata(cfg: &Config, seed: u64) -> Metadata {
    let mut meta = Metadata::default()
        .with("version", concat!("stochms ", env!("CARGO_PKG_VERSION")))
        .with("config_sha256", cfg.sha256())
        .with("seed", seed)
        .with("generator", GENERATOR_ID)
        .with("model", &cfg.model.name)
        .with("stepper", &cfg.scheme.stepper);
    if cfg.scheme.stepper == "collocation" {
        meta.push("aux_nyquist", "zeroed");
    }
    meta
}

/// Writes `config.toml`, `conservation.csv`, `snapshots.csv` and `steps.csv`
/// into `dir`. A failed run gets a trailing `# aborted: ...` line.
pub fn write_run(dir: &Path, cfg: &Config, record: &RunRecord, grid: &Grid1D) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let meta = metadata(cfg, record.seed);
    let note = record.failure.as_ref().map(|f| format!("aborted: {f}"));

    let mut sink = CsvSink::create(&dir.join("conservation.csv"), "conservation", &meta, &CONSERVATION_HEADER)?;
    for r in &record.conservation {
        sink.row(&[
            r.step.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.density),
            fmt_f64(r.density_err),
            fmt_f64(r.momentum),
            fmt_f64(r.momentum_err),
        ])?;
    }
    sink.finish_with_note(note.as_deref())?;

    let mut header = vec!["t".to_string()];
    header.extend((0..grid.n_cells).map(|i| format!("rho_{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let snap_meta = meta.clone().with("x0", fmt_f64(grid.x0)).with("dx", fmt_f64(grid.dx));
    let mut sink = CsvSink::create(&dir.join("snapshots.csv"), "snapshots", &snap_meta, &header_refs)?;
    for (t, rho) in &record.snapshots {
        let mut row = vec![fmt_f64(*t)];
        row.extend(rho.iter().map(|v| fmt_f64(*v)));
        sink.row(&row)?;
    }
    sink.finish_with_note(note.as_deref())?;

    let mut sink = CsvSink::create(&dir.join("steps.csv"), "steps", &meta, &STEPS_HEADER)?;
    for r in &record.steps {
        sink.row(&[
            r.step.to_string(),
            r.iterations.to_string(),
            fmt_f64(r.residual),
            fmt_f64(r.dw),
            u8::from(r.clamped).to_string(),
            u8::from(r.fallback).to_string(),
            fmt_f64(r.peak),
        ])?;
    }
    sink.finish_with_note(note.as_deref())?;
    Ok(())
}

/// [`simulate`] followed by [`write_run`]; a solver failure is an error
/// after the partial artifacts are written.
pub fn run(cfg: &Config, seed: u64, dir: &Path) -> Result<RunRecord> {
    let record = simulate(cfg, seed)?;
    write_run(dir, cfg, &record, &cfg.grid()?)?;
    if let Some(f) = &record.failure {
        anyhow::bail!("run aborted at {f}");
    }
    Ok(record)
}
