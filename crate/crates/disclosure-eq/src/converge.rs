//! Finite-versus-limit comparisons over a ladder of data scales.

use std::time::Instant;

use anyhow::Result;
use disclosure_core::harness::{
    discretize_density, full_info_gap, grid_error, sandwich_check, strategy_distance, strictly_decreasing, unit_grid,
    SandwichReport, StrategyDistanceReport,
};
use disclosure_core::limit::solve_limit;
use disclosure_core::strategy::strategy_profile;
use disclosure_core::{finite, EquilibriumOutcome, FiniteInstance, Game, LimitSolution, MassModel, PiecewiseDensity};
use rayon::prelude::*;

/// Finite instance at scale `n_max` built from the game's density.
pub fn discretized(game: &Game, n_max: usize, cap: usize) -> Result<FiniteInstance> {
    let g = game.density()?;
    let finite_game = game.with_mass(MassModel::Finite(discretize_density(g, n_max)))?;
    Ok(FiniteInstance::new(&finite_game, cap)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub n_max: usize,
    pub n_types: usize,
    pub sup_error: f64,
    pub runtime_ms: u128,
    pub bayes_residual: f64,
    pub strategy: Option<StrategyDistanceReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub grid_points: usize,
    pub rows: Vec<LadderRow>,
    /// Sandwich check at the largest scale on the fine grid.
    pub sandwich: Option<SandwichReport>,
    pub sandwich_grid_points: usize,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_error).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        strictly_decreasing(&self.errors())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderOptions {
    /// Number of grid intervals for the sup error.
    pub grid: usize,
    /// Intervals of the off-lattice grid for the sandwich check.
    pub sandwich_grid: usize,
    pub cap: usize,
    /// Strategy-distance parameters `(eta, delta, rho)`, if wanted.
    pub strategy: Option<(f64, f64, f64)>,
}

struct Solved {
    row: LadderRow,
    inst: FiniteInstance,
    outcome: EquilibriumOutcome,
}

fn solve_rung(limit: &LimitSolution, game: &Game, n_max: usize, grid: &[f64], opts: &LadderOptions) -> Result<Solved> {
    let start = Instant::now();
    let inst = discretized(game, n_max, opts.cap)?;
    let outcome = finite::solve_truth_leaning(&inst)?;
    let sup_error = grid_error(limit, &inst, &outcome, grid)?;
    let runtime_ms = start.elapsed().as_millis();
    let strategy = opts.strategy.map(|(eta, delta, rho)| {
        let profile = strategy_profile(&inst, &outcome);
        strategy_distance(limit, &inst, &outcome, &profile, eta, delta, rho)
    });
    let row = LadderRow {
        n_max,
        n_types: inst.len(),
        sup_error,
        runtime_ms,
        bayes_residual: outcome.bayes_residual(&inst),
        strategy,
    };
    Ok(Solved { row, inst, outcome })
}

/// Solves every rung concurrently. The sandwich tolerance is the largest
/// rung's coarse-grid error, checked on a finer grid that falls between
/// lattice points.
pub fn convergence_curve(game: &Game, limit: &LimitSolution, ladder: &[usize], opts: &LadderOptions) -> Result<ConvergenceReport> {
    let grid = unit_grid(opts.grid);
    let solved: Vec<Result<Solved>> = ladder.par_iter().map(|&n| solve_rung(limit, game, n, &grid, opts)).collect();
    let mut rows = Vec::with_capacity(ladder.len());
    let mut last = None;
    for s in solved {
        let s = s?;
        rows.push(s.row.clone());
        last = Some(s);
    }
    let fine = unit_grid(opts.sandwich_grid);
    let sandwich = match (&last, opts.sandwich_grid) {
        (Some(s), k) if k > 0 => Some(sandwich_check(limit, &s.inst, &s.outcome, &fine, s.row.sup_error)?),
        _ => None,
    };
    Ok(ConvergenceReport { grid_points: grid.len(), rows, sandwich, sandwich_grid_points: fine.len() })
}

/// `(width, sup_gap)` for triangles centred in the unit interval.
pub fn variance_shrink(game: &Game, widths: &[f64], grid: usize) -> Result<Vec<(f64, f64)>> {
    let mu = unit_grid(grid);
    widths
        .par_iter()
        .map(|&w| {
            let g = PiecewiseDensity::centered_triangle(0.5, w)?;
            let sol = solve_limit(&game.with_mass(MassModel::Density(g))?)?;
            Ok((w, full_info_gap(&sol, &mu)))
        })
        .collect()
}
