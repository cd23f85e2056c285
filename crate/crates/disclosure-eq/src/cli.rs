//! Command-line surface and exit-code contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use disclosure_core::limit::solve_limit;
use disclosure_core::strategy::{check_strategy, strategy_profile};
use disclosure_core::{finite, FiniteInstance, Game, MassModel, DEFAULT_MAX_TYPES};
use serde::{Deserialize, Serialize};

use crate::config::{load_game, ConfigError};
use crate::converge::{convergence_curve, discretized, variance_shrink, LadderOptions};
use crate::output::{self, num};
use crate::sim::Simulator;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "disclosure-eq", version, about = "Equilibria of verifiable data-disclosure games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a game config and report the first violation.
    Validate { config: PathBuf },
    /// Solve the finite game or construct the continuum limit.
    Solve {
        kind: SolveKind,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare finite solves at several scales with the limit.
    Converge {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Triangle widths for the variance-shrink experiment.
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125")]
        widths: Vec<f64>,
    },
    /// Monte-Carlo play of a finite game solved earlier into `--out`.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveKind {
    Finite,
    Limit,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    /// Data scales; a density config is discretised at each.
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Grid intervals for curves, frontiers and sup errors.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Tolerance overrides as `name=value`: `z` (calibration bound in
    /// standard errors), `eta`, `delta`, `rho` (strategy distance),
    /// `sandwich_grid` (intervals of the off-lattice grid).
    #[arg(long = "tol", value_parser = parse_override)]
    pub tol: Vec<(String, f64)>,
    #[arg(long, env = "DISCLOSURE_EQ_MAX_TYPES", default_value_t = DEFAULT_MAX_TYPES)]
    pub max_types: usize,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    if !TOL_KEYS.contains(&k) {
        return Err(format!("unknown tolerance `{k}`; known: {}", TOL_KEYS.join(", ")));
    }
    let v: f64 = v.parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.to_string(), v))
}

const TOL_KEYS: [&str; 5] = ["z", "eta", "delta", "rho", "sandwich_grid"];

impl Common {
    fn tol(&self, key: &str, default: f64) -> f64 {
        self.tol.iter().rev().find(|(k, _)| k == key).map_or(default, |(_, v)| *v)
    }
}

/// Written as `manifest-<command>.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub reps: u64,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub grid: usize,
    pub tol: BTreeMap<String, f64>,
    pub max_types: usize,
    pub workers: Option<usize>,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, config: &Path, c: &Common) -> Self {
        RunManifest {
            command: command.into(),
            config: config.into(),
            out: c.out.clone(),
            seed: c.seed,
            reps: c.reps,
            n: c.n.clone(),
            grid: c.grid,
            tol: c.tol.iter().cloned().collect(),
            max_types: c.max_types,
            workers: None,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest-{}.json", command.replace(' ', "-"))
    }

    fn write(&self) -> anyhow::Result<()> {
        let path = self.out.join(Self::file_name(&self.command));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn config_err(e: ConfigError) -> Failure {
    Failure { code: EXIT_CONFIG, error: e.into() }
}

fn usage(msg: String) -> Failure {
    Failure { code: EXIT_CONFIG, error: anyhow!(msg) }
}

fn solver<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure { code: EXIT_SOLVER, error: e.into() }
}

fn missing(msg: String) -> Failure {
    Failure { code: EXIT_MISSING, error: anyhow!(msg) }
}

type Outcome = Result<(), Failure>;

/// Runs a parsed command, printing a summary to stdout.
pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Solve { kind: SolveKind::Finite, config, common } => solve_finite(&config, &common),
        Command::Solve { kind: SolveKind::Limit, config, common } => solve_limit_cmd(&config, &common),
        Command::Converge { config, common, widths } => converge(&config, &common, &widths),
        Command::Simulate { config, common, workers } => simulate(&config, &common, workers),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn validate(config: &Path) -> Outcome {
    let game = load_game(config).map_err(config_err)?;
    let mass = match &game.mass {
        MassModel::Finite(m) => format!("finite, N = {}", m.n_max),
        MassModel::Density(g) => format!("density on [{}, {}]", g.support_lo(), g.support_hi()),
    };
    println!("{}: valid ({} states, {} outcomes, {mass})", config.display(), game.n_states(), game.n_outcomes());
    Ok(())
}

fn prepare_out(c: &Common) -> Outcome {
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display())).map_err(solver)
}

/// Finite instance from a finite config, or from a density config with a
/// single `--N`.
fn finite_instance(game: &Game, c: &Common) -> Result<FiniteInstance, Failure> {
    match (&game.mass, c.n.as_slice()) {
        (MassModel::Finite(_), []) => FiniteInstance::new(game, c.max_types).map_err(solver),
        (MassModel::Finite(_), _) => Err(usage("--N applies only to density configs".into())),
        (MassModel::Density(_), [n]) => discretized(game, *n, c.max_types).map_err(solver),
        (MassModel::Density(_), _) => Err(usage("a density config needs exactly one --N for a finite solve".into())),
    }
}

fn solve_finite(config: &Path, c: &Common) -> Outcome {
    let game = load_game(config).map_err(config_err)?;
    let inst = finite_instance(&game, c)?;
    let outcome = finite::solve_truth_leaning(&inst).map_err(solver)?;
    let residual = outcome.bayes_residual(&inst);
    if residual.abs() > 1e-9 {
        return Err(solver(anyhow!("Bayes plausibility residual {residual}")));
    }
    prepare_out(c)?;
    output::write_outcome(&c.out.join("outcome.csv"), &inst, &outcome).map_err(solver)?;
    output::write_pools(&c.out.join("pools.csv"), &outcome).map_err(solver)?;
    RunManifest::new("solve finite", config, c).write().map_err(solver)?;
    println!("{} types, {} steps", inst.active_indices().len(), outcome.steps.len());
    for s in outcome.steps.iter().take(20) {
        println!("  step {}: value {} ({} members, {} messages)", s.index, num(s.value), s.members.len(), s.messages.len());
    }
    Ok(())
}

fn solve_limit_cmd(config: &Path, c: &Common) -> Outcome {
    let game = load_game(config).map_err(config_err)?;
    if game.density().is_err() {
        return Err(usage("a limit solve needs a density config".into()));
    }
    let sol = solve_limit(&game).map_err(solver)?;
    let grid = c.grid.max(1);
    let top = game.theta(game.n_states() - 1);
    let bottom = sol.pieces().last().map_or(game.theta(0), |p| p.v_lo);
    let levels: Vec<f64> = (0..=grid).map(|i| bottom + (top - bottom) * i as f64 / grid as f64).collect();
    let thresholds: Vec<_> = (0..game.n_states()).map(|j| sol.thresholds(j)).collect();
    prepare_out(c)?;
    output::write_curves(&c.out.join("payoff_curves.csv"), &sol.curves(grid)).map_err(solver)?;
    output::write_frontier(&c.out.join("frontier.csv"), &sol.frontier_table(&levels), game.n_states()).map_err(solver)?;
    output::write_thresholds(&c.out.join("thresholds.csv"), &thresholds).map_err(solver)?;
    RunManifest::new("solve limit", config, c).write().map_err(solver)?;
    let count = |k: disclosure_core::SegmentKind| sol.pieces().iter().filter(|p| p.kind == k).count();
    println!(
        "{} pieces: {} strict, {} pool ({} ironed), {} honest; expected payoff {}",
        sol.pieces().len(),
        count(disclosure_core::SegmentKind::Strict),
        count(disclosure_core::SegmentKind::Pool),
        sol.ironing_regions().len(),
        count(disclosure_core::SegmentKind::Honest),
        num(sol.expected_payoff())
    );
    for (j, t) in thresholds.iter().enumerate() {
        println!("  state {j}: below value under {}, above value past {}", num(t.low), num(t.high));
    }
    Ok(())
}

fn converge(config: &Path, c: &Common, widths: &[f64]) -> Outcome {
    let game = load_game(config).map_err(config_err)?;
    if game.density().is_err() {
        return Err(usage("convergence runs need a density config".into()));
    }
    let ladder = if c.n.is_empty() { vec![10, 20, 40, 80] } else { c.n.clone() };
    let limit = solve_limit(&game).map_err(solver)?;
    let opts = LadderOptions {
        grid: c.grid.max(1),
        sandwich_grid: c.tol("sandwich_grid", 1000.0) as usize,
        cap: c.max_types,
        strategy: Some((c.tol("eta", 0.05), c.tol("delta", 0.1), c.tol("rho", 0.05))),
    };
    let report = convergence_curve(&game, &limit, &ladder, &opts).map_err(solver)?;
    let shrink = variance_shrink(&game, widths, 1000).map_err(solver)?;
    prepare_out(c)?;
    write_convergence(&c.out, &report, &shrink).map_err(solver)?;
    RunManifest::new("converge", config, c).write().map_err(solver)?;
    for r in &report.rows {
        println!("N = {:>3}: sup_error {} ({} types, {} ms)", r.n_max, num(r.sup_error), r.n_types, r.runtime_ms);
    }
    if let Some(s) = report.sandwich {
        println!("sandwich: {} of {} grid types outside, worst margin {}", s.violations, s.checked, num(s.worst_margin));
    }
    let mut failed = Vec::new();
    if !report.strictly_decreasing() {
        failed.push("sup_error is not strictly decreasing".to_string());
    }
    if report.sandwich.is_some_and(|s| s.violations > 0) {
        failed.push("sandwich bound violated".to_string());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(solver(anyhow!(failed.join("; "))))
    }
}

fn write_convergence(out: &Path, report: &crate::converge::ConvergenceReport, shrink: &[(f64, f64)]) -> anyhow::Result<()> {
    let mut w = output::writer(&out.join("convergence.csv"))?;
    w.write_record(["N", "sup_error", "runtime_ms"])?;
    for r in &report.rows {
        w.write_record([r.n_max.to_string(), num(r.sup_error), r.runtime_ms.to_string()])?;
    }
    w.flush()?;
    let mut w = output::writer(&out.join("strategy_distance.csv"))?;
    w.write_record(["N", "eligible_mass", "close_fraction"])?;
    for r in &report.rows {
        if let Some(s) = r.strategy {
            w.write_record([r.n_max.to_string(), num(s.eligible_mass), num(s.close_fraction)])?;
        }
    }
    w.flush()?;
    if let Some(s) = report.sandwich {
        let mut w = output::writer(&out.join("sandwich.csv"))?;
        w.write_record(["grid_points", "checked", "violations", "worst_margin", "eps"])?;
        w.write_record([
            report.sandwich_grid_points.to_string(),
            s.checked.to_string(),
            s.violations.to_string(),
            num(s.worst_margin),
            num(s.eps),
        ])?;
        w.flush()?;
    }
    let mut w = output::writer(&out.join("variance_shrink.csv"))?;
    w.write_record(["width", "sup_gap"])?;
    for (width, gap) in shrink {
        w.write_record([num(*width), num(*gap)])?;
    }
    w.flush()?;
    Ok(())
}

/// Payoffs recorded by an earlier finite solve, keyed by count vector.
fn read_outcome(path: &Path) -> anyhow::Result<BTreeMap<Vec<u32>, f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let dim = headers.iter().filter(|h| h.starts_with("count_")).count();
    let payoff = headers.iter().position(|h| h == "payoff").ok_or_else(|| anyhow!("no payoff column"))?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let counts = (0..dim).map(|d| rec[d].parse()).collect::<Result<Vec<u32>, _>>()?;
        out.insert(counts, rec[payoff].parse()?);
    }
    Ok(out)
}

fn simulate(config: &Path, c: &Common, workers: usize) -> Outcome {
    let game = load_game(config).map_err(config_err)?;
    let outcome_path = c.out.join("outcome.csv");
    let manifest_path = c.out.join(RunManifest::file_name("solve finite"));
    if !outcome_path.exists() || !manifest_path.exists() {
        return Err(missing(format!(
            "{} has no finite solve; run `solve finite` with the same --out first",
            c.out.display()
        )));
    }
    let upstream: RunManifest = std::fs::read_to_string(&manifest_path)
        .map_err(anyhow::Error::from)
        .and_then(|s| Ok(serde_json::from_str(&s)?))
        .map_err(|e| missing(format!("unreadable {}: {e}", manifest_path.display())))?;
    let recorded = read_outcome(&outcome_path).map_err(|e| missing(format!("unreadable {}: {e}", outcome_path.display())))?;
    let scale = Common { n: upstream.n.clone(), ..c.clone() };
    let inst = finite_instance(&game, &scale)?;
    let outcome = finite::solve_truth_leaning(&inst).map_err(solver)?;
    let ts = inst.types();
    let active = inst.active_indices();
    let stale = active.len() != recorded.len()
        || active.iter().any(|&i| recorded.get(ts.counts(i)).is_none_or(|&u| (u - outcome.payoff(i)).abs() > 1e-12));
    if stale {
        return Err(missing(format!("{} does not match {}; re-run `solve finite`", outcome_path.display(), config.display())));
    }
    let profile = strategy_profile(&inst, &outcome);
    let check = check_strategy(&inst, &outcome, &profile);
    if !check.pass {
        return Err(solver(anyhow!("strategy profile fails its checks: {check:?}")));
    }
    let sim = Simulator::new(&inst, &outcome, &profile).map_err(solver)?;
    let report = sim.run(c.seed, c.reps, workers).map_err(solver)?;
    write_simulation(&c.out, &report).map_err(solver)?;
    let mut manifest = RunManifest::new("simulate", config, &scale);
    manifest.workers = Some(workers);
    manifest.write().map_err(solver)?;
    let z = c.tol("z", 3.0);
    println!("{} replications, {} on-path messages, worst |z| {}", report.reps, report.buckets.len(), num(report.worst_z()));
    println!("receiver action mse {} (full information {})", num(report.action_mse), num(report.full_info_mse));
    if report.calibrated(z) {
        Ok(())
    } else {
        let n = report.buckets.iter().filter(|b| b.z_score() > z).count();
        Err(solver(anyhow!("{n} message buckets beyond {z} standard errors")))
    }
}

fn write_simulation(out: &Path, report: &crate::sim::SimReport) -> anyhow::Result<()> {
    let dim = report.buckets.first().map_or(0, |b| b.counts.len());
    let mut w = output::writer(&out.join("calibration.csv"))?;
    let mut header = vec!["message_id".to_string()];
    header.extend((1..=dim).map(|d| format!("count_{d}")));
    header.extend(["asserted_value", "empirical_mean", "stderr", "n_obs"].map(String::from));
    w.write_record(&header)?;
    for b in &report.buckets {
        let mut row = vec![b.message.to_string()];
        row.extend(b.counts.iter().map(|c| c.to_string()));
        row.extend([num(b.asserted), num(b.empirical_mean), num(b.stderr), b.n_obs.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    let mut w = output::writer(&out.join("welfare.csv"))?;
    w.write_record(["state", "tercile", "mean_gap", "stderr"])?;
    for c in &report.welfare {
        w.write_record([c.state.to_string(), c.tercile.to_string(), num(c.mean_gap), num(c.stderr)])?;
    }
    w.flush()?;
    let mut w = output::writer(&out.join("summary.csv"))?;
    w.write_record(["metric", "value"])?;
    for (k, v) in report.summary() {
        w.write_record([k, num(v)])?;
    }
    w.flush()?;
    Ok(())
}
