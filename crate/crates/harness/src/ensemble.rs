//! Ensembles of independent realisations and their pointwise statistics.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use log::warn;
use rayon::prelude::*;
use stochms::noise::member_seed;

use crate::config::Config;
use crate::io::{fmt_f64, read_table, CsvSink};
use crate::run::{metadata, simulate, write_run, ConservationRow, RunRecord};

pub const STATS_HEADER: [&str; 5] = ["t", "mean_density_err", "std_density_err", "mean_momentum_err", "std_momentum_err"];

/// Pointwise mean and population standard deviation of the error series.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub members: usize,
    pub t: Vec<f64>,
    pub mean_density_err: Vec<f64>,
    pub std_density_err: Vec<f64>,
    pub mean_momentum_err: Vec<f64>,
    pub std_momentum_err: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EnsembleStats {
    /// Series must share their time grid; longer ones are cut to the shortest.
    pub fn from_series(series: &[Vec<ConservationRow>]) -> Result<Self> {
        if series.is_empty() {
            bail!("no completed members");
        }
        let len = series.iter().map(Vec::len).min().unwrap_or(0);
        let mut s = Self {
            members: series.len(),
            t: Vec::with_capacity(len),
            mean_density_err: Vec::with_capacity(len),
            std_density_err: Vec::with_capacity(len),
            mean_momentum_err: Vec::with_capacity(len),
            std_momentum_err: Vec::with_capacity(len),
        };
        for k in 0..len {
            let d: Vec<f64> = series.iter().map(|m| m[k].density_err).collect();
            let p: Vec<f64> = series.iter().map(|m| m[k].momentum_err).collect();
            let (dm, ds) = mean_std(&d);
            let (pm, ps) = mean_std(&p);
            s.t.push(series[0][k].t);
            s.mean_density_err.push(dm);
            s.std_density_err.push(ds);
            s.mean_momentum_err.push(pm);
            s.std_momentum_err.push(ps);
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path, cfg: &Config, base_seed: u64, failed: &[usize]) -> Result<()> {
        let mut meta = metadata(cfg, base_seed).with("members", self.members);
        meta.push(
            "failed_members",
            if failed.is_empty() {
                "none".to_string()
            } else {
                failed.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
            },
        );
        let mut sink = CsvSink::create(path, "stats", &meta, &STATS_HEADER)?;
        for k in 0..self.t.len() {
            sink.row(&[
                fmt_f64(self.t[k]),
                fmt_f64(self.mean_density_err[k]),
                fmt_f64(self.std_density_err[k]),
                fmt_f64(self.mean_momentum_err[k]),
                fmt_f64(self.std_momentum_err[k]),
            ])?;
        }
        sink.finish()
    }
}

pub struct EnsembleResult {
    pub records: Vec<RunRecord>,
    pub failed: Vec<usize>,
    pub stats: EnsembleStats,
}

pub fn member_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("member_{index:03}"))
}

/// Runs `members` realisations with seeds `base + i`, writes each into
/// `member_XXX/` and the statistics over completed members into `stats.csv`.
pub fn ensemble(cfg: &Config, base_seed: u64, members: usize, out: &Path) -> Result<EnsembleResult> {
    if members == 0 {
        bail!("an ensemble needs at least one member");
    }
    let grid = cfg.grid()?;
    let records: Vec<RunRecord> = (0..members)
        .into_par_iter()
        .map(|i| simulate(cfg, member_seed(base_seed, i)))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out)?;
    let mut failed = Vec::new();
    for (i, r) in records.iter().enumerate() {
        write_run(&member_dir(out, i), cfg, r, &grid)?;
        if let Some(f) = &r.failure {
            warn!("member {i} failed at {f}");
            failed.push(i);
        }
    }
    let completed: Vec<Vec<ConservationRow>> = records
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.conservation.clone())
        .collect();
    let stats = EnsembleStats::from_series(&completed)?;
    stats.write(&out.join("stats.csv"), cfg, base_seed, &failed)?;
    Ok(EnsembleResult { records, failed, stats })
}

/// Rebuilds the statistics from the member files under `out`.
pub fn stats_from_disk(out: &Path, members: usize) -> Result<EnsembleStats> {
    let mut series = Vec::new();
    for i in 0..members {
        let table = read_table(&member_dir(out, i).join("conservation.csv"), "conservation")?;
        if table.trailer.iter().any(|l| l.starts_with("aborted")) {
            continue;
        }
        let rows = table
            .rows
            .iter()
            .map(|r| ConservationRow {
                step: r[0] as usize,
                t: r[1],
                density: r[2],
                density_err: r[3],
                momentum: r[4],
                momentum_err: r[5],
            })
            .collect();
        series.push(rows);
    }
    EnsembleStats::from_series(&series)
}
