//! Monte-Carlo play of a solved finite game.
//!
//! Replication `r` draws from a ChaCha8 stream keyed by `(seed, r)`, and
//! replications are grouped into fixed chunks that are merged in chunk
//! order, so reports do not depend on the number of worker threads.

use std::collections::BTreeMap;

use anyhow::{bail, ensure, Result};
use disclosure_core::strategy::StrategyProfile;
use disclosure_core::types::{subset_slice, type_posterior};
use disclosure_core::{EquilibriumOutcome, FiniteInstance};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replications per chunk.
pub const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean from the sample variance.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// One sampled replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub state: usize,
    pub type_index: usize,
    pub message: usize,
}

/// Precomputed samplers for one solved instance.
pub struct Simulator<'a> {
    inst: &'a FiniteInstance,
    outcome: &'a EquilibriumOutcome,
    profile: &'a StrategyProfile,
    state_dist: WeightedIndex<f64>,
    size_dist: WeightedIndex<f64>,
    outcome_dist: Vec<WeightedIndex<f64>>,
}

impl<'a> Simulator<'a> {
    pub fn new(inst: &'a FiniteInstance, outcome: &'a EquilibriumOutcome, profile: &'a StrategyProfile) -> Result<Self> {
        let game = inst.game();
        ensure!(profile.n_types() == inst.len(), "strategy profile covers {} types, instance has {}", profile.n_types(), inst.len());
        let size_dist = WeightedIndex::new(&game.finite_mass()?.pmf)?;
        let outcome_dist = game.outcomes.dist.iter().map(WeightedIndex::new).collect::<Result<Vec<_>, _>>()?;
        Ok(Simulator { inst, outcome, profile, state_dist: WeightedIndex::new(&game.states.prior)?, size_dist, outcome_dist })
    }

    /// Nature's move: state, data size, then outcome counts.
    pub fn sample_type<R: Rng>(&self, rng: &mut R) -> (usize, Vec<u32>) {
        let state = self.state_dist.sample(rng);
        let n = self.size_dist.sample(rng);
        let mut counts = vec![0u32; self.inst.types().dim()];
        for _ in 0..n {
            counts[self.outcome_dist[state].sample(rng)] += 1;
        }
        (state, counts)
    }

    /// Message drawn with probability `x(t, m) / q(t)`.
    pub fn play<R: Rng>(&self, type_index: usize, rng: &mut R) -> Result<usize> {
        let (msgs, mass) = self.profile.row(type_index);
        let total: f64 = mass.iter().sum();
        if msgs.is_empty() || !(total > 0.0) {
            bail!("type {type_index} has no strategy; the profile is stale");
        }
        let mut u = rng.gen::<f64>() * total;
        for (&m, &x) in msgs.iter().zip(mass) {
            if u < x {
                return Ok(m as usize);
            }
            u -= x;
        }
        Ok(*msgs.last().unwrap() as usize)
    }

    pub fn replicate(&self, seed: u64, rep: u64) -> Result<Draw> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep);
        let (state, counts) = self.sample_type(&mut rng);
        let Some(type_index) = self.inst.types().rank(&counts) else { bail!("sampled counts {counts:?} outside the type space") };
        let message = self.play(type_index, &mut rng)?;
        let ts = self.inst.types();
        ensure!(subset_slice(ts.counts(message), &counts), "message {:?} is not a subset of type {counts:?}", ts.counts(message));
        Ok(Draw { state, type_index, message })
    }

    fn run_chunk(&self, seed: u64, range: std::ops::Range<u64>) -> Result<Tally> {
        let game = self.inst.game();
        let n_max = self.inst.types().n_max();
        let mut t = Tally::new(game.n_states());
        for rep in range {
            let d = self.replicate(seed, rep)?;
            let theta = game.theta(d.state);
            let action = self.outcome.payoff(d.message);
            let full = self.inst.y()[d.type_index];
            let size = self.inst.types().size_of(d.type_index);
            t.buckets.entry(d.message as u32).or_default().push(theta);
            t.cells[d.state * 3 + tercile(size, n_max)].push(self.outcome.payoff(d.type_index) - full);
            t.state_counts[d.state] += 1;
            t.size.push(size as f64);
            t.payoff.push(self.outcome.payoff(d.type_index));
            t.action_err.push((action - theta) * (action - theta));
            t.full_err.push((full - theta) * (full - theta));
        }
        Ok(t)
    }

    /// Runs `reps` replications on `workers` threads (0 = rayon default).
    pub fn run(&self, seed: u64, reps: u64, workers: usize) -> Result<SimReport> {
        ensure!(reps >= 1, "at least one replication is required");
        let chunks: Vec<std::ops::Range<u64>> = (0..reps.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(reps)).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        let parts: Vec<Result<Tally>> = pool.install(|| chunks.into_par_iter().map(|r| self.run_chunk(seed, r)).collect());
        let mut total = Tally::new(self.inst.game().n_states());
        for p in parts {
            total.merge(&p?);
        }
        Ok(self.report(total))
    }

    fn report(&self, t: Tally) -> SimReport {
        let game = self.inst.game();
        let exact = self.message_moments(&t);
        let buckets = t
            .buckets
            .iter()
            .map(|(&m, acc)| {
                let (value, var) = exact[&m];
                Bucket {
                    message: m as usize,
                    counts: self.inst.types().counts(m as usize).to_vec(),
                    asserted: self.outcome.payoff(m as usize),
                    conditional_mean: value,
                    empirical_mean: acc.mean(),
                    stderr: (var.max(0.0) / acc.n as f64).sqrt(),
                    n_obs: acc.n,
                }
            })
            .collect();
        let welfare = t
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.n > 0)
            .map(|(i, c)| WelfareCell { state: i / 3, tercile: i % 3, mean_gap: c.mean(), stderr: c.stderr(), n_obs: c.n })
            .collect();
        SimReport {
            reps: t.state_counts.iter().sum(),
            buckets,
            welfare,
            state_counts: t.state_counts,
            size: t.size,
            payoff: t.payoff,
            prior_mean: game.prior_mean(),
            mean_size: game.finite_mass().map(|m| m.mean()).unwrap_or(f64::NAN),
            action_mse: t.action_err.mean(),
            full_info_mse: t.full_err.mean(),
        }
    }

    /// Mean and variance of the state given each sampled message, under
    /// the strategy profile and the senders' posteriors.
    fn message_moments(&self, t: &Tally) -> BTreeMap<u32, (f64, f64)> {
        let game = self.inst.game();
        let mut acc: BTreeMap<u32, (f64, f64, f64)> = t.buckets.keys().map(|&m| (m, (0.0, 0.0, 0.0))).collect();
        for i in self.inst.active_indices() {
            let (msgs, mass) = self.profile.row(i);
            let mut post: Option<(f64, f64)> = None;
            for (m, &x) in msgs.iter().zip(mass) {
                if let Some(a) = acc.get_mut(m) {
                    let (m1, m2) = *post.get_or_insert_with(|| {
                        let p = type_posterior(&self.inst.types().get(i), game).expect("active type has a posterior");
                        let m1 = p.iter().zip(&game.states.values).map(|(p, v)| p * v).sum();
                        let m2 = p.iter().zip(&game.states.values).map(|(p, v)| p * v * v).sum();
                        (m1, m2)
                    });
                    a.0 += x;
                    a.1 += x * m1;
                    a.2 += x * m2;
                }
            }
        }
        acc.into_iter()
            .map(|(m, (w, s1, s2))| {
                let mean = s1 / w;
                (m, (mean, s2 / w - mean * mean))
            })
            .collect()
    }
}

/// Data-size tercile by `n / N`: `[0, 1/3)`, `[1/3, 2/3)`, `[2/3, 1]`.
pub fn tercile(n: usize, n_max: usize) -> usize {
    if n_max == 0 {
        return 0;
    }
    (3 * n / n_max).min(2)
}

#[derive(Debug, Clone)]
struct Tally {
    buckets: BTreeMap<u32, Moments>,
    cells: Vec<Moments>,
    state_counts: Vec<u64>,
    size: Moments,
    payoff: Moments,
    action_err: Moments,
    full_err: Moments,
}

impl Tally {
    fn new(n_states: usize) -> Self {
        Tally {
            buckets: BTreeMap::new(),
            cells: vec![Moments::default(); 3 * n_states],
            state_counts: vec![0; n_states],
            size: Moments::default(),
            payoff: Moments::default(),
            action_err: Moments::default(),
            full_err: Moments::default(),
        }
    }

    fn merge(&mut self, o: &Tally) {
        for (m, acc) in &o.buckets {
            self.buckets.entry(*m).or_default().merge(acc);
        }
        for (a, b) in self.cells.iter_mut().zip(&o.cells) {
            a.merge(b);
        }
        for (a, b) in self.state_counts.iter_mut().zip(&o.state_counts) {
            *a += b;
        }
        self.size.merge(&o.size);
        self.payoff.merge(&o.payoff);
        self.action_err.merge(&o.action_err);
        self.full_err.merge(&o.full_err);
    }
}

/// Calibration of one on-path message.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub message: usize,
    pub counts: Vec<u32>,
    /// Payoff the outcome assigns to the message.
    pub asserted: f64,
    /// Exact mean state given the message under the profile.
    pub conditional_mean: f64,
    pub empirical_mean: f64,
    /// Standard error of the empirical mean under the profile's
    /// conditional state distribution.
    pub stderr: f64,
    pub n_obs: u64,
}

impl Bucket {
    /// Distance to the asserted value in standard errors; 0 for a bucket
    /// whose state is deterministic and matches.
    pub fn z_score(&self) -> f64 {
        let gap = (self.empirical_mean - self.asserted).abs();
        if gap <= 1e-12 {
            0.0
        } else {
            gap / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelfareCell {
    pub state: usize,
    pub tercile: usize,
    /// Mean of equilibrium payoff minus full-information payoff.
    pub mean_gap: f64,
    pub stderr: f64,
    pub n_obs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub reps: u64,
    pub buckets: Vec<Bucket>,
    pub welfare: Vec<WelfareCell>,
    pub state_counts: Vec<u64>,
    pub size: Moments,
    pub payoff: Moments,
    pub prior_mean: f64,
    pub mean_size: f64,
    /// Mean squared error of the receiver's action against the state.
    pub action_mse: f64,
    /// Same error had the receiver seen the whole dataset.
    pub full_info_mse: f64,
}

impl SimReport {
    pub fn worst_z(&self) -> f64 {
        self.buckets.iter().map(Bucket::z_score).fold(0.0, f64::max)
    }

    pub fn calibrated(&self, z: f64) -> bool {
        self.buckets.iter().all(|b| b.z_score() <= z)
    }

    /// Rows of `(metric, value)` for the summary CSV.
    pub fn summary(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("reps".to_string(), self.reps as f64),
            ("buckets".to_string(), self.buckets.len() as f64),
            ("worst_z".to_string(), self.worst_z()),
            ("sender_mean_payoff".to_string(), self.payoff.mean()),
            ("sender_mean_payoff_stderr".to_string(), self.payoff.stderr()),
            ("prior_mean".to_string(), self.prior_mean),
            ("mean_size".to_string(), self.size.mean()),
            ("mean_size_stderr".to_string(), self.size.stderr()),
            ("expected_size".to_string(), self.mean_size),
            ("receiver_action_mse".to_string(), self.action_mse),
            ("full_info_mse".to_string(), self.full_info_mse),
        ];
        for (j, c) in self.state_counts.iter().enumerate() {
            rows.push((format!("state_{j}_frequency"), *c as f64 / self.reps as f64));
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terciles() {
        assert_eq!(tercile(0, 1), 0);
        assert_eq!(tercile(1, 1), 2);
        assert_eq!(tercile(13, 40), 0);
        assert_eq!(tercile(14, 40), 1);
        assert_eq!(tercile(27, 40), 2);
        assert_eq!(tercile(40, 40), 2);
    }

    #[test]
    fn moments() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        // sample variance 5/3
        assert!((m.stderr() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
