//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p stochms-harness --test acceptance`. The report
//! exits zero so the workspace suite stays usable while a criterion is red;
//! set `ACCEPTANCE_STRICT=1` to make any FAIL line a non-zero exit.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use stochms::system::NlsParams;
use stochms_harness::check::{check_equivalence, check_momentum, check_tableau, check_two_form};
use stochms_harness::converge::convergence_study;
use stochms_harness::ensemble::ensemble;
use stochms_harness::run::{run, simulate};
use stochms_harness::Config;

struct Line {
    id: usize,
    pass: bool,
    detail: String,
}

fn tableau() -> Result<(bool, String)> {
    let mid = check_tableau("midpoint")?;
    let euler = check_tableau("explicit-euler")?;
    Ok((mid.pass && !euler.pass, format!("midpoint [{}]; explicit-euler rejected: {}", mid.detail, !euler.pass)))
}

fn two_form() -> Result<(bool, String)> {
    let quad = NlsParams { kappa: 0.0, ..NlsParams::default() };
    let nonlinear = NlsParams::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for model in ["nls-transport", "nls-dispersion"] {
        for p in [&quad, &nonlinear] {
            let o = check_two_form(model, p, "midpoint", 10, 7)?;
            pass &= o.pass;
            parts.push(format!("{model} kappa={}: {}", p.kappa, o.detail));
        }
    }
    Ok((pass, parts.join("; ")))
}

fn momentum() -> Result<(bool, String)> {
    let quad = NlsParams { kappa: 0.0, ..NlsParams::default() };
    let o = check_momentum("nls-dispersion", &quad, "midpoint", 50, 11)?;
    Ok((o.pass, o.detail))
}

fn equivalence() -> Result<(bool, String)> {
    let p = NlsParams::default();
    let a = check_equivalence("nls-transport", &p, 10, 3)?;
    let b = check_equivalence("nls-dispersion", &p, 10, 3)?;
    Ok((a.pass && b.pass, format!("transport {}; dispersion {}", a.detail, b.detail)))
}

fn scaled_experiment() -> Result<(bool, String)> {
    let cfg = Config::ci();
    let r = simulate(&cfg, cfg.noise.seed)?;
    let (d, m) = r.max_abs_errors();
    let done = r.failure.is_none();
    Ok((
        done && d <= 1e-5 && m <= 1e-5,
        format!("T = {}: max |density err| {d:.2e}, max |momentum err| {m:.2e} (tol 1e-5), completed {done}", cfg.time.t1),
    ))
}

fn convergence() -> Result<(bool, String)> {
    let cfg = Config::paper();
    let series = convergence_study(&cfg, cfg.noise.seed)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &series {
        let (lo, hi) = if s.xi == 0.0 { (1.8, 2.2) } else { (0.7, 1.3) };
        let slope = s.slope().unwrap_or(f64::NAN);
        pass &= (lo..=hi).contains(&slope);
        parts.push(format!("xi {} ({} members): slope {slope:.3} in [{lo}, {hi}]", s.xi, s.members));
    }
    Ok((pass, parts.join("; ")))
}

fn sample_std(pop_std: f64, n: usize) -> f64 {
    pop_std * (n as f64 / (n as f64 - 1.0)).sqrt()
}

fn ensembles(dir: &Path) -> Result<(bool, String)> {
    let transport = Config::ci();
    let mut dispersion = Config::ci();
    dispersion.model.name = "nls-dispersion".into();
    let members = transport.ensemble.members;
    let t = ensemble(&transport, transport.noise.seed, members, &dir.join("transport"))?;
    let d = ensemble(&dispersion, dispersion.noise.seed, members, &dir.join("dispersion"))?;
    let k = t.stats.t.len() - 1;
    let (mt, n) = (t.stats.mean_momentum_err[k], t.stats.members);
    let se = sample_std(t.stats.std_momentum_err[k], n) / (n as f64).sqrt();
    let centred = mt.abs() <= 3.0 * se;

    // The same path without noise isolates the deterministic part of the mean.
    let mut quiet = Config::ci();
    quiet.model.xi = 0.0;
    let q = simulate(&quiet, quiet.noise.seed)?;
    let bias = q.conservation.last().map_or(f64::NAN, |r| r.momentum_err);

    let (nt, nd) = (t.stats.members, d.stats.members);
    let var_t = sample_std(t.stats.std_momentum_err[k], nt).powi(2) + sample_std(t.stats.std_density_err[k], nt).powi(2);
    let var_d = sample_std(d.stats.std_momentum_err[k], nd).powi(2) + sample_std(d.stats.std_density_err[k], nd).powi(2);
    let f_crit = FisherSnedecor::new((nd - 1) as f64, (nt - 1) as f64)?.inverse_cdf(0.99865);
    let larger = var_d > f_crit * var_t;
    Ok((
        centred && larger,
        format!(
            "transport momentum mean {mt:.2e} vs 3 s.e. {:.2e} (centred {centred}; noise-free run gives {bias:.2e}); \
             variance ratio dispersion/transport {:.2e} vs F critical {f_crit:.2} (larger {larger}); failed members {}",
            3.0 * se,
            var_d / var_t,
            t.failed.len() + d.failed.len()
        ),
    ))
}

fn files_equal(a: &Path, b: &Path) -> Result<bool> {
    let mut names: Vec<_> = std::fs::read_dir(a)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        let same = if pa.is_dir() { files_equal(&pa, &pb)? } else { std::fs::read(&pa)? == std::fs::read(&pb)? };
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}

fn reproducibility(dir: &Path) -> Result<(bool, String)> {
    let cfg = Config::ci();
    for tag in ["a", "b"] {
        run(&cfg, cfg.noise.seed, &dir.join(tag).join("run"))?;
        ensemble(&cfg, cfg.noise.seed, 3, &dir.join(tag).join("ensemble"))?;
    }
    let same = files_equal(&dir.join("a"), &dir.join("b"))?;
    Ok((same, format!("run and 3-member ensemble artifacts byte-identical: {same}")))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(usize, Box<dyn Fn() -> Result<(bool, String)>>)> = vec![
        (1, Box::new(tableau)),
        (2, Box::new(two_form)),
        (3, Box::new(momentum)),
        (4, Box::new(equivalence)),
        (5, Box::new(scaled_experiment)),
        (6, Box::new(convergence)),
        (7, Box::new(|| ensembles(&dir.path().join("ensembles")))),
        (8, Box::new(|| reproducibility(&dir.path().join("repro")))),
    ];
    let mut lines = Vec::new();
    for (id, f) in criteria {
        let start = Instant::now();
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e:#}")));
        let line = Line {
            id,
            pass,
            detail: format!("{detail} [{:.1} s]", start.elapsed().as_secs_f64()),
        };
        println!("{} criterion {}: {}", if line.pass { "PASS" } else { "FAIL" }, line.id, line.detail);
        lines.push(line);
    }
    let failed: Vec<String> = lines.iter().filter(|l| !l.pass).map(|l| l.id.to_string()).collect();
    println!("acceptance: {} of {} pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
