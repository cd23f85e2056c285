//! Finite type spaces: enumeration, ranking, type probabilities and
//! posteriors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::game::Game;
use crate::num::{exp, ln, ln_gamma, log_sum_exp};

/// Outcome counts; doubles as a message since messages are sub-datasets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DatasetCounts(pub Vec<u32>);

impl DatasetCounts {
    pub fn zeros(d: usize) -> Self {
        DatasetCounts(vec![0; d])
    }

    pub fn n(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Componentwise `m <= t`.
pub fn is_subset(m: &DatasetCounts, t: &DatasetCounts) -> Result<bool> {
    if m.dim() != t.dim() {
        return Err(Error::Dimension { expected: t.dim(), got: m.dim() });
    }
    Ok(subset_slice(&m.0, &t.0))
}

#[inline]
pub fn subset_slice(m: &[u32], t: &[u32]) -> bool {
    m.iter().zip(t).all(|(a, b)| a <= b)
}

/// Number of count vectors of length `d` summing to `n`.
pub fn level_size(n: usize, d: usize) -> u128 {
    binom((n + d - 1) as u64, (d - 1) as u64)
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All count vectors whose size lies in the support of `g_N`, ordered by
/// size and then lexicographically descending within a size.
#[derive(Debug, Clone)]
pub struct TypeSpace {
    d: usize,
    levels: Vec<usize>,
    level_of: Vec<Option<usize>>,
    offsets: Vec<usize>,
    counts: Vec<u32>,
    // binomial table binom[s][k] = C(s, k) for the within-level ranking
    table: Vec<Vec<u64>>,
}

impl TypeSpace {
    /// Enumerates the types for sizes in `support` (each at most `n_max`),
    /// refusing when there would be more than `cap` of them.
    pub fn new(d: usize, n_max: usize, support: &[usize], cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        let mut levels: Vec<usize> = support.iter().copied().filter(|&n| n <= n_max).collect();
        levels.sort_unstable();
        levels.dedup();
        let total: u128 = levels.iter().map(|&n| level_size(n, d)).sum();
        if total > cap as u128 {
            return Err(Error::CapExceeded { count: total.min(usize::MAX as u128) as usize, cap });
        }
        let total = total as usize;
        let mut offsets = Vec::with_capacity(levels.len() + 1);
        let mut level_of = vec![None; n_max + 1];
        let mut counts = Vec::with_capacity(total * d);
        offsets.push(0);
        for (li, &n) in levels.iter().enumerate() {
            level_of[n] = Some(li);
            push_level(n, d, &mut counts);
            offsets.push(counts.len() / d);
        }
        let top = n_max + d + 1;
        let mut table = vec![vec![0u64; d + 1]; top + 1];
        for (s, row) in table.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = binom(s as u64, k as u64).min(u64::MAX as u128) as u64;
            }
        }
        Ok(TypeSpace { d, levels, level_of, offsets, counts, table })
    }

    pub fn for_game(game: &Game, cap: usize) -> Result<Self> {
        let m = game.finite_mass()?;
        TypeSpace::new(game.n_outcomes(), m.n_max, &m.support(), cap)
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.level_of.len() - 1
    }

    /// Support sizes in ascending order.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn counts(&self, i: usize) -> &[u32] {
        &self.counts[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize) -> DatasetCounts {
        DatasetCounts(self.counts(i).to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks_exact(self.d)
    }

    pub fn size_of(&self, i: usize) -> usize {
        self.counts(i).iter().map(|&c| c as usize).sum()
    }

    /// Index of a count vector, or `None` if it is not a type.
    pub fn rank(&self, t: &[u32]) -> Option<usize> {
        if t.len() != self.d {
            return None;
        }
        let n: usize = t.iter().map(|&c| c as usize).sum();
        let li = (*self.level_of.get(n)?)?;
        let mut r = 0usize;
        let mut rem = n;
        for i in 0..self.d - 1 {
            let ti = t[i] as usize;
            let k = self.d - i - 1;
            if ti < rem {
                // vectors with a larger entry at position i come first
                let s = rem - ti - 1;
                r += self.table[s + k][k] as usize;
            }
            rem -= ti;
        }
        Some(self.offsets[li] + r)
    }

    /// Indices of the covering supersets of type `i`: all types one support
    /// level up that contain it.
    pub fn up_neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let n = self.size_of(i);
        let li = self.level_of[n].unwrap();
        let Some(&next) = self.levels.get(li + 1) else { return };
        let gap = next - n;
        let base = self.counts(i).to_vec();
        let mut buf = base.clone();
        add_compositions(&base, &mut buf, 0, gap, &mut |v| {
            if let Some(j) = self.rank(v) {
                out.push(j);
            }
        });
    }

    /// Indices of the covering subsets of type `i`.
    pub fn down_neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let n = self.size_of(i);
        let li = self.level_of[n].unwrap();
        if li == 0 {
            return;
        }
        let gap = n - self.levels[li - 1];
        let base = self.counts(i).to_vec();
        let mut buf = base.clone();
        sub_compositions(&base, &mut buf, 0, gap, &mut |v| {
            if let Some(j) = self.rank(v) {
                out.push(j);
            }
        });
    }
}

fn push_level(n: usize, d: usize, out: &mut Vec<u32>) {
    let mut cur = vec![0u32; d];
    fn rec(pos: usize, rem: usize, cur: &mut Vec<u32>, out: &mut Vec<u32>) {
        let d = cur.len();
        if pos == d - 1 {
            cur[pos] = rem as u32;
            out.extend_from_slice(cur);
            return;
        }
        for x in (0..=rem).rev() {
            cur[pos] = x as u32;
            rec(pos + 1, rem - x, cur, out);
        }
    }
    rec(0, n, &mut cur, out);
}

fn add_compositions(base: &[u32], buf: &mut Vec<u32>, pos: usize, rem: usize, f: &mut dyn FnMut(&[u32])) {
    if pos == base.len() - 1 {
        buf[pos] = base[pos] + rem as u32;
        f(buf);
        buf[pos] = base[pos];
        return;
    }
    for x in 0..=rem {
        buf[pos] = base[pos] + x as u32;
        add_compositions(base, buf, pos + 1, rem - x, f);
    }
    buf[pos] = base[pos];
}

fn sub_compositions(base: &[u32], buf: &mut Vec<u32>, pos: usize, rem: usize, f: &mut dyn FnMut(&[u32])) {
    if pos == base.len() - 1 {
        if base[pos] as usize >= rem {
            buf[pos] = base[pos] - rem as u32;
            f(buf);
            buf[pos] = base[pos];
        }
        return;
    }
    for x in 0..=rem.min(base[pos] as usize) {
        buf[pos] = base[pos] - x as u32;
        sub_compositions(base, buf, pos + 1, rem - x, f);
    }
    buf[pos] = base[pos];
}

/// Enumerates all types of a finite game.
pub fn enumerate_types(game: &Game, cap: usize) -> Result<Vec<DatasetCounts>> {
    let ts = TypeSpace::for_game(game, cap)?;
    Ok((0..ts.len()).map(|i| ts.get(i)).collect())
}

/// Log-likelihood terms `ln beta_j + sum_d t_d ln f_j(d)` per state.
pub fn log_weights(t: &[u32], game: &Game) -> Vec<f64> {
    (0..game.n_states())
        .map(|j| {
            let row = &game.outcomes.dist[j];
            let mut w = ln(game.prior(j));
            for (d, &c) in t.iter().enumerate() {
                if c > 0 {
                    if row[d] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    w += c as f64 * ln(row[d]);
                }
            }
            w
        })
        .collect()
}

fn ln_multinomial(t: &[u32]) -> f64 {
    let n: u32 = t.iter().sum();
    ln_gamma(n as f64 + 1.0) - t.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>()
}

/// Probability of type `t`: multinomial coefficient times `g_N(n)` times the
/// prior mixture of outcome likelihoods.
pub fn type_prob(t: &DatasetCounts, game: &Game) -> Result<f64> {
    let m = game.finite_mass()?;
    if t.dim() != game.n_outcomes() {
        return Err(Error::Dimension { expected: game.n_outcomes(), got: t.dim() });
    }
    let n = t.n();
    if n > m.n_max || m.pmf[n] == 0.0 {
        return Ok(0.0);
    }
    let lw = log_sum_exp(&log_weights(&t.0, game));
    if lw == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(exp(ln_multinomial(&t.0) + ln(m.pmf[n]) + lw))
}

/// Posterior over states given the full dataset, computed in log space.
pub fn type_posterior(t: &DatasetCounts, game: &Game) -> Result<Vec<f64>> {
    if t.dim() != game.n_outcomes() {
        return Err(Error::Dimension { expected: game.n_outcomes(), got: t.dim() });
    }
    posterior_slice(&t.0, game)
}

pub(crate) fn posterior_slice(t: &[u32], game: &Game) -> Result<Vec<f64>> {
    let lw = log_weights(t, game);
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::ImpossibleDataset);
    }
    let w: Vec<f64> = lw.iter().map(|&x| exp(x - m)).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Expected state under a belief.
pub fn expected_state(belief: &[f64], game: &Game) -> f64 {
    belief.iter().zip(&game.states.values).map(|(b, v)| b * v).sum()
}

/// Full-information payoff of every type, in enumeration order.
pub fn full_info_outcome(game: &Game, cap: usize) -> Result<Vec<(DatasetCounts, f64)>> {
    let ts = TypeSpace::for_game(game, cap)?;
    (0..ts.len())
        .map(|i| {
            let t = ts.get(i);
            let p = type_posterior(&t, game)?;
            let v = expected_state(&p, game);
            Ok((t, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{validate_game, FiniteMassDist, MassModel, OutcomeModel, RawGame, StateSpace};

    fn finite(values: Vec<f64>, prior: Vec<f64>, dist: Vec<Vec<f64>>, pmf: Vec<f64>) -> Game {
        let n_max = pmf.len() - 1;
        validate_game(RawGame {
            states: StateSpace { values, prior },
            outcomes: OutcomeModel { dist },
            mass: MassModel::Finite(FiniteMassDist { n_max, pmf }),
        })
        .unwrap()
    }

    #[test]
    fn enumeration_small() {
        let ts = TypeSpace::new(2, 1, &[0, 1], 100).unwrap();
        let all: Vec<Vec<u32>> = ts.iter().map(|c| c.to_vec()).collect();
        assert_eq!(all, vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(TypeSpace::new(2, 2, &[0, 1, 2], 100).unwrap().len(), 6);
        assert_eq!(TypeSpace::new(3, 4, &[4], 100).unwrap().len(), 15);
    }

    #[test]
    fn cap_is_enforced() {
        let e = TypeSpace::new(3, 4, &[4], 10).unwrap_err();
        assert_eq!(e, Error::CapExceeded { count: 15, cap: 10 });
    }

    #[test]
    fn rank_inverts_enumeration() {
        let ts = TypeSpace::new(4, 6, &[0, 2, 3, 6], 10_000).unwrap();
        for i in 0..ts.len() {
            assert_eq!(ts.rank(ts.counts(i)), Some(i));
        }
        assert_eq!(ts.rank(&[1, 0, 0, 0]), None);
        assert_eq!(ts.rank(&[7, 0, 0, 0]), None);
    }

    #[test]
    fn neighbors_with_gaps() {
        let ts = TypeSpace::new(2, 4, &[1, 3], 100).unwrap();
        let i = ts.rank(&[1, 0]).unwrap();
        let mut out = Vec::new();
        ts.up_neighbors(i, &mut out);
        let mut got: Vec<Vec<u32>> = out.iter().map(|&j| ts.counts(j).to_vec()).collect();
        got.sort();
        assert_eq!(got, vec![vec![1, 2], vec![2, 1], vec![3, 0]]);
        let k = ts.rank(&[2, 1]).unwrap();
        ts.down_neighbors(k, &mut out);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_type_has_pmf_zero_mass() {
        let g = finite(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.5, 0.5]);
        let p = type_prob(&DatasetCounts(vec![0, 0]), &g).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let p = type_prob(&DatasetCounts(vec![0, 1]), &g).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_state_uniform_mass() {
        let third = 1.0 / 3.0;
        let g = finite(vec![1.0], vec![1.0], vec![vec![0.5, 0.5]], vec![third, third, 1.0 - 2.0 * third]);
        let p = type_prob(&DatasetCounts(vec![1, 1]), &g).unwrap();
        assert!((p - 2.0 * (1.0 - 2.0 * third) * 0.25).abs() < 1e-15);
        assert!((p - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn table1_posterior() {
        let g = finite(
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![vec![0.2, 0.2, 0.4, 0.2], vec![0.1, 0.1, 0.5, 0.3]],
            vec![0.5, 0.5],
        );
        let p = type_posterior(&DatasetCounts(vec![0, 0, 0, 1]), &g).unwrap();
        assert!((p[1] - 0.6).abs() < 1e-15);
        let p = type_posterior(&DatasetCounts(vec![0, 0, 0, 0]), &g).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let p = type_posterior(&DatasetCounts(vec![0, 0, 0, 4000]), &g).unwrap();
        assert!(p[1] > 1.0 - 1e-12);
    }

    #[test]
    fn impossible_dataset_errors() {
        let g = finite(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0, 1.0]);
        assert_eq!(type_posterior(&DatasetCounts(vec![1, 1]), &g), Err(Error::ImpossibleDataset));
    }

    #[test]
    fn expected_state_examples() {
        let g = finite(vec![0.0, 4.0], vec![0.5, 0.5], vec![vec![1.0], vec![1.0]], vec![0.0, 1.0]);
        assert_eq!(expected_state(&[0.25, 0.75], &g), 3.0);
        assert_eq!(expected_state(&[0.5, 0.5], &g), 2.0);
        assert_eq!(expected_state(&[0.0, 1.0], &g), 4.0);
    }

    #[test]
    fn subset_examples() {
        let t = DatasetCounts(vec![1, 5]);
        assert!(is_subset(&DatasetCounts(vec![0, 0]), &t).unwrap());
        assert!(is_subset(&t, &t).unwrap());
        assert!(!is_subset(&DatasetCounts(vec![2, 0]), &t).unwrap());
        assert!(is_subset(&DatasetCounts(vec![2]), &t).is_err());
    }
}
