//! Configuration, orchestration and CSV output for stochastic NLS
//! experiments: single runs, ensembles, convergence studies and checks.

pub mod check;
pub mod config;
pub mod converge;
pub mod ensemble;
pub mod io;
pub mod run;

pub use config::Config;
