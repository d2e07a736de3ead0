use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use stochms::system::NlsParams;
use stochms_harness::check::{check_all, check_equivalence, check_momentum, check_system, check_tableau, check_two_form, CheckOutcome};
use stochms_harness::converge::{convergence_study, write_convergence};
use stochms_harness::ensemble::ensemble;
use stochms_harness::run::run;
use stochms_harness::Config;

#[derive(Parser)]
#[command(name = "stochms", version, about = "Multisymplectic integrators for stochastic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overriding the profile
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile: `ci` (t1 = 20) or `paper` (t1 = 80)
    #[arg(long, default_value = "ci")]
    profile: String,
    /// Base seed, overriding `noise.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.profile, self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// One realisation
    Run(Common),
    /// Independent realisations with seeds base + i, plus statistics
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Overrides `ensemble.members`
        #[arg(long)]
        members: Option<usize>,
    },
    /// Strong convergence against the exact soliton
    Converge {
        #[command(flatten)]
        common: Common,
        /// Overrides `converge.members`
        #[arg(long)]
        members: Option<usize>,
    },
    /// Structure and conservation checks on small fixtures
    Check {
        #[command(subcommand)]
        what: Option<CheckCommand>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value = "nls-transport")]
    model: String,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    kappa: f64,
    #[arg(long, default_value = "midpoint")]
    tableau: String,
    #[arg(long, default_value_t = 10)]
    steps: usize,
}

impl FixtureArgs {
    fn params(&self) -> NlsParams {
        NlsParams {
            kappa: self.kappa,
            ..NlsParams::default()
        }
    }
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Consistency and symplecticity conditions of a tableau
    Tableau { name: String },
    /// Skew symmetry and derivative checks of a model
    System(FixtureArgs),
    /// Discrete two-form conservation law
    TwoForm(FixtureArgs),
    /// Discrete momentum conservation (quadratic Hamiltonians)
    Momentum(FixtureArgs),
    /// Reduced steppers against the generic engine
    Equivalence(FixtureArgs),
    /// All passing fixtures
    All,
}

fn report(outcomes: &[CheckOutcome]) -> ExitCode {
    for o in outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let record = run(&cfg, cfg.noise.seed, &common.out)?;
            let (d, m) = record.max_abs_errors();
            println!("max |density error| {d:.3e}, max |momentum error| {m:.3e}");
        }
        Command::Ensemble { common, members } => {
            let cfg = common.load()?;
            let n = members.unwrap_or(cfg.ensemble.members);
            let res = ensemble(&cfg, cfg.noise.seed, n, &common.out)?;
            let k = res.stats.t.len() - 1;
            println!(
                "{} of {n} members completed; final std density err {:.3e}, std momentum err {:.3e}",
                res.stats.members, res.stats.std_density_err[k], res.stats.std_momentum_err[k]
            );
        }
        Command::Converge { common, members } => {
            let mut cfg = common.load()?;
            if let Some(n) = members {
                cfg.converge.members = n;
            }
            let series = convergence_study(&cfg, cfg.noise.seed)?;
            std::fs::create_dir_all(&common.out)?;
            write_convergence(&common.out.join("converge.csv"), &cfg, cfg.noise.seed, &series)?;
            for s in &series {
                for (dt, e) in &s.rows {
                    println!("xi {} dt {dt} rms error {e:.4e}", s.xi);
                }
                match s.slope() {
                    Some(slope) => println!("xi {}: slope {slope:.3}", s.xi),
                    None => println!("xi {}: slope undefined", s.xi),
                }
            }
        }
        Command::Check { what, seed } => {
            let outcomes = match what.unwrap_or(CheckCommand::All) {
                CheckCommand::Tableau { name } => vec![check_tableau(&name)?],
                CheckCommand::System(a) => vec![check_system(&a.model, &a.params())?],
                CheckCommand::TwoForm(a) => vec![check_two_form(&a.model, &a.params(), &a.tableau, a.steps, seed)?],
                CheckCommand::Momentum(a) => vec![check_momentum(&a.model, &a.params(), &a.tableau, a.steps, seed)?],
                CheckCommand::Equivalence(a) => vec![check_equivalence(&a.model, &a.params(), a.steps, seed)?],
                CheckCommand::All => check_all(seed)?,
            };
            return Ok(report(&outcomes));
        }
    }
    Ok(ExitCode::SUCCESS)
}
