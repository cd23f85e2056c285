//! Pure pieces of the finite-to-limit comparisons.

use alloc::vec::Vec;

use alloc::vec;

use crate::density::PiecewiseDensity;
use crate::error::Result;
use crate::finite::{outcome_query, EquilibriumOutcome, FiniteInstance};
use crate::game::FiniteMassDist;
use crate::limit::LimitSolution;
use crate::num::{golden_max, round};
use crate::strategy::StrategyProfile;
use crate::types::DatasetCounts;

/// Floor added to the top size so that `g_N(N) > 0`.
pub const TOP_FLOOR: f64 = 1e-6;

/// Size distribution on `{0, .., N}` with `g_N(n) = G((n+1)/N) - G(n/N)`
/// for `n < N` and the remaining mass plus a floor at `N`, renormalised.
pub fn discretize_density(g: &PiecewiseDensity, n_max: usize) -> FiniteMassDist {
    let nf = n_max as f64;
    let mut pmf: Vec<f64> = (0..n_max).map(|n| g.cdf((n as f64 + 1.0) / nf) - g.cdf(n as f64 / nf)).collect();
    let used: f64 = pmf.iter().sum();
    pmf.push((1.0 - used).max(0.0) + TOP_FLOOR);
    let s: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= s;
    }
    FiniteMassDist { n_max, pmf }
}

/// Sup distance between the discrete CDF `n <= floor(N mu)` and `G(mu)`,
/// checked at every jump of the discrete CDF from both sides.
pub fn cdf_distance(g: &PiecewiseDensity, m: &FiniteMassDist) -> f64 {
    let nf = m.n_max as f64;
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for n in 0..=m.n_max {
        let x = n as f64 / nf;
        // just below x the discrete CDF is still `acc`
        worst = worst.max((acc - g.cdf(x)).abs());
        acc += m.pmf[n];
        worst = worst.max((acc - g.cdf(x)).abs());
    }
    worst
}

/// Nearest count vector to `mu * N * f`, rounding each coordinate.
pub fn rounded_type(mu: f64, n_max: usize, f: &[f64]) -> DatasetCounts {
    DatasetCounts(f.iter().map(|&p| round(mu * n_max as f64 * p).max(0.0) as u32).collect())
}

/// Sup-norm distance between `counts / N` and `mu * f`.
pub fn rounding_distance(t: &DatasetCounts, mu: f64, n_max: usize, f: &[f64]) -> f64 {
    t.0.iter().zip(f).map(|(&c, &p)| (c as f64 / n_max as f64 - mu * p).abs()).fold(0.0, f64::max)
}

/// True when each step in `xs` is below the previous one.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// Grid points `i / n` for `i = 0..=n`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Sup-grid error `max |u_N(round(N mu f_j)) - u_inf(mu f_j)|` over states
/// and grid masses, with finite payoffs read through [`outcome_query`].
pub fn grid_error(limit: &LimitSolution, inst: &FiniteInstance, outcome: &EquilibriumOutcome, grid: &[f64]) -> Result<f64> {
    let game = inst.game();
    let n_max = inst.types().n_max();
    let mut worst = 0.0f64;
    for j in 0..game.n_states() {
        let f = &game.outcomes.dist[j];
        for &mu in grid {
            let t = rounded_type(mu, n_max, f);
            let u = outcome_query(&t, outcome, inst)?;
            worst = worst.max((u - limit.type_payoff(j, mu)).abs());
        }
    }
    Ok(worst)
}

/// Result of checking finite payoffs against widened limit payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest margin to either bound; negative when violated.
    pub worst_margin: f64,
    pub eps: f64,
}

/// For each grid type `mu f_j` with rounded counts `t_N` at distance
/// `delta`, checks `u_N(t_N)` lies in
/// `[u_inf((mu - D delta) f_j) - eps, u_inf((mu + D delta) f_j) + eps]`.
pub fn sandwich_check(
    limit: &LimitSolution,
    inst: &FiniteInstance,
    outcome: &EquilibriumOutcome,
    grid: &[f64],
    eps: f64,
) -> Result<SandwichReport> {
    let game = inst.game();
    let n_max = inst.types().n_max();
    let d = game.n_outcomes() as f64;
    let mut rep = SandwichReport { checked: 0, violations: 0, worst_margin: f64::INFINITY, eps };
    for j in 0..game.n_states() {
        let f = &game.outcomes.dist[j];
        for &mu in grid {
            let t = rounded_type(mu, n_max, f);
            let delta = rounding_distance(&t, mu, n_max, f);
            let u = outcome_query(&t, outcome, inst)?;
            let lo = limit.type_payoff(j, (mu - d * delta).max(0.0)) - eps;
            let hi = limit.type_payoff(j, mu + d * delta) + eps;
            let margin = (u - lo).min(hi - u);
            rep.checked += 1;
            rep.worst_margin = rep.worst_margin.min(margin);
            if margin < -1e-12 {
                rep.violations += 1;
            }
        }
    }
    Ok(rep)
}

/// Sup over grid masses inside the support of `|u_j(mu) - theta_j|`.
pub fn full_info_gap(limit: &LimitSolution, grid: &[f64]) -> f64 {
    let model = limit.model();
    let (lo, hi) = model.support();
    let mut worst = 0.0f64;
    for j in 0..model.n_states() {
        for &mu in grid.iter().filter(|&&mu| mu > lo && mu < hi) {
            worst = worst.max((limit.type_payoff(j, mu) - model.theta(j)).abs());
        }
    }
    worst
}

/// Outcome of comparing finite messages with limit messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyDistanceReport {
    /// Probability of types whose payoff is at least `eta` from every state.
    pub eligible_mass: f64,
    /// Share of that probability sent to messages close to a limit message.
    pub close_fraction: f64,
}

/// Among types whose payoff is more than `eta` from every state value, the
/// share of probability sent to a message within sup-norm `delta` (after
/// scaling counts by `1/N`) of some limit message `mu f_k` worth within
/// `rho` of the sender's payoff.
pub fn strategy_distance(
    limit: &LimitSolution,
    inst: &FiniteInstance,
    outcome: &EquilibriumOutcome,
    profile: &StrategyProfile,
    eta: f64,
    delta: f64,
    rho: f64,
) -> StrategyDistanceReport {
    let game = inst.game();
    let ts = inst.types();
    let nf = ts.n_max() as f64;
    let q = inst.q();
    let thetas: Vec<f64> = (0..game.n_states()).map(|j| game.theta(j)).collect();
    let mut eligible = 0.0;
    let mut close = 0.0;
    let mut memo: Vec<Option<bool>> = vec![None; inst.len()];
    for i in 0..inst.len() {
        if q[i] <= 0.0 {
            continue;
        }
        let u = outcome.payoff(i);
        if thetas.iter().any(|th| (u - th).abs() <= eta) {
            continue;
        }
        eligible += q[i];
        let (msgs, masses) = profile.row(i);
        for (&m, &x) in msgs.iter().zip(masses) {
            let m = m as usize;
            let ok = *memo[m].get_or_insert_with(|| {
                let counts = ts.counts(m);
                (0..game.n_states()).any(|k| {
                    let f = &game.outcomes.dist[k];
                    let mu = nearest_mass(counts, nf, f);
                    let dist = counts.iter().zip(f).map(|(&c, &p)| (c as f64 / nf - mu * p).abs()).fold(0.0, f64::max);
                    dist <= delta && (limit.message_value(k, mu) - u).abs() <= rho
                })
            });
            if ok {
                close += x;
            }
        }
    }
    let close_fraction = if eligible > 0.0 { close / eligible } else { 1.0 };
    StrategyDistanceReport { eligible_mass: eligible, close_fraction }
}

/// Mass `mu` minimising the sup distance between `counts / N` and `mu f`.
fn nearest_mass(counts: &[u32], nf: f64, f: &[f64]) -> f64 {
    let dist = |mu: f64| counts.iter().zip(f).map(|(&c, &p)| (c as f64 / nf - mu * p).abs()).fold(0.0, f64::max);
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() / nf;
    let (mu, _) = golden_max(|mu| -dist(mu), 0.0, 2.0 * total.max(1e-9), 1e-12);
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Piece;
    use alloc::vec;

    #[test]
    fn one_point_triangular() {
        let m = discretize_density(&PiecewiseDensity::triangular(), 1);
        let s = 1.0 + TOP_FLOOR;
        assert!((m.pmf[0] - 1.0 / s).abs() < 1e-15);
        assert!(m.pmf[1] > 0.0);
        assert!((m.pmf[0] + m.pmf[1] - 1.0).abs() < 1e-15);
        let m = discretize_density(&PiecewiseDensity::triangular(), 2);
        assert!((m.pmf[0] - 0.5 / (1.0 + TOP_FLOOR)).abs() < 1e-15);
    }

    #[test]
    fn near_uniform_increments() {
        // uniform up to a tiny wedge near 1 that makes g(1) = 0
        let e = 1e-3;
        let h = 1.0 / (1.0 - e / 2.0);
        let g = PiecewiseDensity::new(vec![
            Piece::new(0.0, 1.0 - e, vec![h]),
            Piece::new(1.0 - e, 1.0, vec![h / e, -h / e]),
        ])
        .unwrap();
        let m = discretize_density(&g, 10);
        for n in 0..9 {
            assert!((m.pmf[n] - 0.1 * h / (1.0 + TOP_FLOOR)).abs() < 1e-12);
        }
        assert!(m.pmf[10] > 0.0);
    }

    #[test]
    fn cdf_bound_holds() {
        let g = PiecewiseDensity::double_peaked();
        for n in [5, 10, 40, 80] {
            let m = discretize_density(&g, n);
            assert!(cdf_distance(&g, &m) <= 2.0 / n as f64 * 2.0 + TOP_FLOOR);
        }
    }

    #[test]
    fn rounding() {
        let t = rounded_type(0.5, 10, &[0.2, 0.2, 0.4, 0.2]);
        assert_eq!(t.0, vec![1, 1, 2, 1]);
        assert!(rounding_distance(&t, 0.5, 10, &[0.2, 0.2, 0.4, 0.2]) < 1e-15);
    }
}
