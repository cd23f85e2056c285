//! File formats, Monte-Carlo simulation, convergence runs and the
//! `disclosure-eq` command line on top of `disclosure-core`.

pub mod cli;
pub mod config;
pub mod converge;
pub mod output;
pub mod sim;
