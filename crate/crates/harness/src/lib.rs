//! Campaign orchestration around the `mmloc` core: bound sweeps, single
//! estimation runs, and Monte Carlo RMSE-versus-bound campaigns with CSV
//! emission. Binary subcommands live in `main.rs`; everything they do is
//! reachable through this library so tests can drive the same code paths.

pub mod campaign;
pub mod config;

mod par;
