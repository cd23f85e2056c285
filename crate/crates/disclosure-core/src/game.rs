//! Problem instances and their validation.

use alloc::format;
use alloc::vec::Vec;

use crate::density::PiecewiseDensity;
use crate::error::{invalid, Error, Result};
use crate::STRUCT_TOL;

/// Ascending state values with a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub values: Vec<f64>,
    pub prior: Vec<f64>,
}

/// Row `j` is the outcome distribution under state `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub dist: Vec<Vec<f64>>,
}

impl OutcomeModel {
    pub fn n_outcomes(&self) -> usize {
        self.dist.first().map_or(0, |r| r.len())
    }
}

/// Distribution of the dataset size `n` on `{0, .., N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMassDist {
    pub n_max: usize,
    pub pmf: Vec<f64>,
}

impl FiniteMassDist {
    pub fn support(&self) -> Vec<usize> {
        (0..=self.n_max).filter(|&n| self.pmf[n] > 0.0).collect()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MassModel {
    Finite(FiniteMassDist),
    Density(PiecewiseDensity),
}

/// Unchecked game as read from a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGame {
    pub states: StateSpace,
    pub outcomes: OutcomeModel,
    pub mass: MassModel,
}

/// A validated game with its imitation-ratio matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    pub states: StateSpace,
    pub outcomes: OutcomeModel,
    pub mass: MassModel,
    ratios: Vec<Vec<f64>>,
}

/// Checks every invariant of the instance and caches the imitation ratios.
pub fn validate_game(raw: RawGame) -> Result<Game> {
    let RawGame { states, outcomes, mass } = raw;
    let j = states.values.len();
    if j == 0 {
        return Err(invalid("states", "at least one state is required"));
    }
    if states.prior.len() != j {
        return Err(invalid("states.prior", format!("{} entries for {j} states", states.prior.len())));
    }
    for (i, v) in states.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(invalid(&format!("states[{i}].value"), "not finite"));
        }
    }
    for w in states.values.windows(2) {
        if !(w[0] < w[1]) {
            return Err(invalid("states.value", "values must be strictly ascending"));
        }
    }
    for (i, p) in states.prior.iter().enumerate() {
        if !(*p > 0.0) || !p.is_finite() {
            return Err(invalid(&format!("states[{i}].prior"), "prior entries must be positive"));
        }
    }
    let ps: f64 = states.prior.iter().sum();
    if (ps - 1.0).abs() > STRUCT_TOL {
        return Err(invalid("states.prior", format!("prior sum is {ps}, not 1")));
    }
    if outcomes.dist.len() != j {
        return Err(invalid("outcomes", format!("{} rows for {j} states", outcomes.dist.len())));
    }
    let d = outcomes.n_outcomes();
    if d == 0 {
        return Err(invalid("outcomes", "at least one outcome is required"));
    }
    for (i, row) in outcomes.dist.iter().enumerate() {
        let f = format!("outcomes[{i}]");
        if row.len() != d {
            return Err(invalid(&f, format!("row has {} entries, expected {d}", row.len())));
        }
        if row.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(invalid(&f, "entries must be nonnegative"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STRUCT_TOL {
            return Err(invalid(&f, format!("row sum is {s}, not 1")));
        }
    }
    if let MassModel::Finite(m) = &mass {
        if m.pmf.len() != m.n_max + 1 {
            return Err(invalid("mass.finite.pmf", format!("needs N+1 = {} entries", m.n_max + 1)));
        }
        if m.pmf.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(invalid("mass.finite.pmf", "entries must be nonnegative"));
        }
        let s: f64 = m.pmf.iter().sum();
        if (s - 1.0).abs() > STRUCT_TOL {
            return Err(invalid("mass.finite.pmf", format!("pmf sum is {s}, not 1")));
        }
        if !(m.pmf[m.n_max] > 0.0) {
            return Err(invalid("mass.finite.pmf", "g_N(N) must be positive"));
        }
    }
    let ratios = (0..j)
        .map(|a| (0..j).map(|b| ratio(&outcomes.dist[a], &outcomes.dist[b], a == b)).collect())
        .collect();
    Ok(Game { states, outcomes, mass, ratios })
}

fn ratio(fj: &[f64], fk: &[f64], same: bool) -> f64 {
    if same {
        return 1.0;
    }
    let mut r: f64 = 0.0;
    for (a, b) in fj.iter().zip(fk) {
        if *b > 0.0 {
            if *a == 0.0 {
                return f64::INFINITY;
            }
            r = r.max(b / a);
        }
    }
    r
}

impl Game {
    pub fn n_states(&self) -> usize {
        self.states.values.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.n_outcomes()
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.states.values[j]
    }

    pub fn prior(&self, j: usize) -> f64 {
        self.states.prior[j]
    }

    /// Data-mass premium `r_j(k) = max_d f_k(d) / f_j(d)` that a state-`j`
    /// sender pays to show `f_k`-shaped data; `+inf` when impossible.
    pub fn imitation_ratio(&self, j: usize, k: usize) -> f64 {
        self.ratios[j][k]
    }

    pub fn prior_mean(&self) -> f64 {
        self.states.values.iter().zip(&self.states.prior).map(|(v, p)| v * p).sum()
    }

    pub fn finite_mass(&self) -> Result<&FiniteMassDist> {
        match &self.mass {
            MassModel::Finite(m) => Ok(m),
            MassModel::Density(_) => Err(Error::Unsupported("a finite mass distribution".into())),
        }
    }

    pub fn density(&self) -> Result<&PiecewiseDensity> {
        match &self.mass {
            MassModel::Density(g) => Ok(g),
            MassModel::Finite(_) => Err(Error::Unsupported("a limit mass density".into())),
        }
    }

    /// Same states and outcomes with another mass model.
    pub fn with_mass(&self, mass: MassModel) -> Result<Game> {
        validate_game(RawGame { states: self.states.clone(), outcomes: self.outcomes.clone(), mass })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn table1(mass: MassModel) -> RawGame {
        RawGame {
            states: StateSpace { values: vec![0.0, 1.0], prior: vec![0.5, 0.5] },
            outcomes: OutcomeModel { dist: vec![vec![0.2, 0.2, 0.4, 0.2], vec![0.1, 0.1, 0.5, 0.3]] },
            mass,
        }
    }

    fn table2() -> RawGame {
        RawGame {
            states: StateSpace { values: vec![0.0, 0.5, 1.0], prior: vec![0.4, 0.4, 0.2] },
            outcomes: OutcomeModel {
                dist: vec![vec![0.4, 0.2, 0.4], vec![0.4, 0.4, 0.2], vec![0.6, 0.2, 0.2]],
            },
            mass: MassModel::Density(PiecewiseDensity::triangular()),
        }
    }

    #[test]
    fn table1_accepted() {
        let g = validate_game(table1(MassModel::Density(PiecewiseDensity::triangular()))).unwrap();
        assert_eq!(g.n_states(), 2);
        assert_eq!(g.n_outcomes(), 4);
        assert!((g.imitation_ratio(0, 1) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn table2_ratios() {
        let g = validate_game(table2()).unwrap();
        // L=0, M=1, H=2
        assert!((g.imitation_ratio(0, 2) - 1.5).abs() < 1e-15);
        assert!((g.imitation_ratio(1, 2) - 1.5).abs() < 1e-15);
        assert!((g.imitation_ratio(0, 1) - 2.0).abs() < 1e-15);
        for j in 0..3 {
            assert_eq!(g.imitation_ratio(j, j), 1.0);
        }
    }

    #[test]
    fn prior_sum_rejected() {
        let mut raw = table1(MassModel::Density(PiecewiseDensity::triangular()));
        raw.states.prior = vec![0.6, 0.6];
        let e = validate_game(raw).unwrap_err();
        assert!(alloc::format!("{e}").contains("prior sum"));
    }

    #[test]
    fn zero_top_mass_rejected() {
        let raw = table1(MassModel::Finite(FiniteMassDist { n_max: 2, pmf: vec![0.5, 0.5, 0.0] }));
        let e = validate_game(raw).unwrap_err();
        assert!(alloc::format!("{e}").contains("g_N(N)"));
    }

    #[test]
    fn descending_values_rejected() {
        let mut raw = table1(MassModel::Density(PiecewiseDensity::triangular()));
        raw.states.values = vec![1.0, 0.0];
        assert!(validate_game(raw).is_err());
    }

    #[test]
    fn impossible_imitation_is_infinite() {
        let raw = RawGame {
            states: StateSpace { values: vec![0.0, 1.0], prior: vec![0.5, 0.5] },
            outcomes: OutcomeModel { dist: vec![vec![1.0, 0.0], vec![0.5, 0.5]] },
            mass: MassModel::Density(PiecewiseDensity::triangular()),
        };
        let g = validate_game(raw).unwrap();
        assert!(g.imitation_ratio(0, 1).is_infinite());
        assert!((g.imitation_ratio(1, 0) - 2.0).abs() < 1e-15);
    }
}
