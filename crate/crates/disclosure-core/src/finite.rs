//! Truth-leaning outcome of the finite-data game.
//!
//! Pools are upward-closed sets of types in the subset order. The outcome
//! is computed two ways:
//!
//! * [`solve_by_peeling`] repeatedly extracts the maximal pool with the
//!   highest mean posterior state, each one found by Dinkelbach iteration
//!   over maximum-weight closures;
//! * [`solve_truth_leaning`] obtains the same pools as the level sets of the
//!   `q`-weighted isotonic regression of the posterior means, computed by
//!   divide and conquer on thresholds. Every split is one closure, so large
//!   type spaces need far fewer max-flow calls.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::{maximal_closure, CsrDag};
use crate::game::Game;
use crate::num::{exp, ln, ln_gamma, log_sum_exp};
use crate::types::{log_weights, subset_slice, DatasetCounts, TypeSpace};
use crate::{PROB_TOL, VALUE_TOL};

const NO_STEP: u32 = u32::MAX;
const MAX_DINKELBACH: usize = 100;
/// Largest type set accepted by [`brute_force_best_pool`].
pub const BRUTE_FORCE_MAX: usize = 20;

/// Types with their covering edges (subset to one-level-up superset).
#[derive(Debug, Clone)]
pub struct ImitationDag {
    pub types: TypeSpace,
    pub edges: CsrDag,
}

pub fn build_dag(types: TypeSpace) -> ImitationDag {
    let mut start = Vec::with_capacity(types.len() + 1);
    let mut to = Vec::with_capacity(types.len() * types.dim());
    let mut buf = Vec::new();
    start.push(0);
    for i in 0..types.len() {
        types.up_neighbors(i, &mut buf);
        buf.sort_unstable();
        to.extend(buf.iter().map(|&j| j as u32));
        start.push(to.len());
    }
    ImitationDag { types, edges: CsrDag { start, to } }
}

impl ImitationDag {
    pub fn n_edges(&self) -> usize {
        self.edges.n_edges()
    }

    /// Subgraph induced by `nodes`, relabelled to `0..nodes.len()`. Only
    /// meaningful for convex node sets, where covering edges still generate
    /// the order. `scratch` must be all `u32::MAX` and is restored.
    pub(crate) fn induced(&self, nodes: &[u32], scratch: &mut [u32]) -> CsrDag {
        for (k, &i) in nodes.iter().enumerate() {
            scratch[i as usize] = k as u32;
        }
        let mut start = Vec::with_capacity(nodes.len() + 1);
        let mut to = Vec::new();
        start.push(0);
        for &i in nodes {
            for &j in self.edges.out(i as usize) {
                let l = scratch[j as usize];
                if l != u32::MAX {
                    to.push(l);
                }
            }
            start.push(to.len());
        }
        for &i in nodes {
            scratch[i as usize] = u32::MAX;
        }
        CsrDag { start, to }
    }
}

/// Maximal maximum-weight upward-closed set of the whole DAG. With
/// `require_nonempty`, an empty optimum is replaced by the best principal
/// up-set (the up-set of a single type).
pub fn max_weight_closure(dag: &ImitationDag, w: &[f64], require_nonempty: bool) -> Vec<usize> {
    let (member, _) = maximal_closure(&dag.edges, w);
    let set: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
    if !set.is_empty() || !require_nonempty || w.is_empty() {
        return set;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for i in 0..w.len() {
        let up = up_set(&dag.edges, i);
        let v: f64 = up.iter().map(|&k| w[k]).sum();
        if best.as_ref().map_or(true, |(b, _)| v > *b) {
            best = Some((v, up));
        }
    }
    best.unwrap().1
}

fn up_set(dag: &CsrDag, i: usize) -> Vec<usize> {
    let mut seen = vec![false; dag.n_nodes()];
    let mut stack = vec![i];
    seen[i] = true;
    while let Some(u) = stack.pop() {
        for &j in dag.out(u) {
            if !seen[j as usize] {
                seen[j as usize] = true;
                stack.push(j as usize);
            }
        }
    }
    (0..seen.len()).filter(|&k| seen[k]).collect()
}

/// A finite game with its enumerated types, type probabilities `q` and
/// posterior means `y`. Types with zero probability under every state are
/// inactive: they never occur and take no part in pools.
#[derive(Debug, Clone)]
pub struct FiniteInstance {
    game: Game,
    dag: ImitationDag,
    q: Vec<f64>,
    y: Vec<f64>,
    active: Vec<bool>,
}

impl FiniteInstance {
    pub fn new(game: &Game, cap: usize) -> Result<Self> {
        let types = TypeSpace::for_game(game, cap)?;
        let pmf = &game.finite_mass()?.pmf;
        let n = types.len();
        let mut q = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut active = Vec::with_capacity(n);
        let lf: Vec<f64> = (0..=types.n_max() + 1).map(|k| ln_gamma(k as f64 + 1.0)).collect();
        for t in types.iter() {
            let lw = log_weights(t, game);
            let lse = log_sum_exp(&lw);
            if lse == f64::NEG_INFINITY {
                q.push(0.0);
                y.push(f64::NAN);
                active.push(false);
                continue;
            }
            let size: usize = t.iter().map(|&c| c as usize).sum();
            let lmult = lf[size] - t.iter().map(|&c| lf[c as usize]).sum::<f64>();
            q.push(exp(lmult + ln(pmf[size]) + lse));
            let mean = lw.iter().zip(&game.states.values).map(|(l, v)| exp(l - lse) * v).sum();
            y.push(mean);
            active.push(true);
        }
        let dag = build_dag(types);
        Ok(FiniteInstance { game: game.clone(), dag, q, y, active })
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn types(&self) -> &TypeSpace {
        &self.dag.types
    }

    pub fn dag(&self) -> &ImitationDag {
        &self.dag
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Type probabilities in enumeration order.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Full-information payoffs; `NaN` for inactive types.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn total_prob(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `q`-weighted mean of `y` over a set of types.
    pub fn pool_value(&self, set: &[usize]) -> f64 {
        let (s, w) = set.iter().fold((0.0, 0.0), |(s, w), &i| (s + self.q[i] * self.y[i], w + self.q[i]));
        s / w
    }

    fn pool_value_u32(&self, set: &[u32]) -> f64 {
        let (s, w) = set
            .iter()
            .fold((0.0, 0.0), |(s, w), &i| (s + self.q[i as usize] * self.y[i as usize], w + self.q[i as usize]));
        s / w
    }

    pub(crate) fn weights(&self, nodes: &[u32], lambda: f64) -> Vec<f64> {
        let snap = 1e-12 * (1.0 + lambda.abs());
        nodes
            .iter()
            .map(|&i| {
                let d = self.y[i as usize] - lambda;
                if d.abs() <= snap {
                    0.0
                } else {
                    self.q[i as usize] * d
                }
            })
            .collect()
    }
}

/// One pool of the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolStep {
    pub index: usize,
    pub value: f64,
    /// Minimal members; the pool is every remaining type above one of them.
    pub messages: Vec<usize>,
    pub members: Vec<usize>,
}

impl PoolStep {
    pub fn message_counts(&self, types: &TypeSpace) -> Vec<DatasetCounts> {
        self.messages.iter().map(|&i| types.get(i)).collect()
    }
}

/// Ordered pools plus the per-type step and payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOutcome {
    pub steps: Vec<PoolStep>,
    step_of: Vec<u32>,
    payoff: Vec<f64>,
}

impl EquilibriumOutcome {
    /// Payoff `u*(t)` of type index `i`.
    pub fn payoff(&self, i: usize) -> f64 {
        self.payoff[i]
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoff
    }

    /// Step index of type `i`. Inactive types get the step that answers
    /// their dataset as a message.
    pub fn step_of(&self, i: usize) -> usize {
        self.step_of[i] as usize
    }

    pub fn is_message(&self, i: usize) -> bool {
        let s = self.step_of(i);
        self.steps[s].messages.binary_search(&i).is_ok()
    }

    /// `sum_t q(t) u*(t) - E[theta]`.
    pub fn bayes_residual(&self, inst: &FiniteInstance) -> f64 {
        let s: f64 = inst.q.iter().zip(&self.payoff).filter(|(q, _)| **q > 0.0).map(|(q, u)| q * u).sum();
        s - inst.game.prior_mean()
    }
}

/// Payoff of an arbitrary dataset `m` used as a message: the value of the
/// highest step with a message contained in `m`, or the last step if none.
pub fn outcome_query(m: &DatasetCounts, outcome: &EquilibriumOutcome, inst: &FiniteInstance) -> Result<f64> {
    let ts = inst.types();
    if m.dim() != ts.dim() {
        return Err(Error::Dimension { expected: ts.dim(), got: m.dim() });
    }
    Ok(query_slice(&m.0, outcome, ts, &inst.active))
}

fn query_slice(m: &[u32], outcome: &EquilibriumOutcome, ts: &TypeSpace, active: &[bool]) -> f64 {
    if let Some(i) = ts.rank(m) {
        if active[i] {
            return outcome.payoff[i];
        }
    }
    scan_steps(m, &outcome.steps, ts).map_or(outcome.steps.last().unwrap().value, |s| outcome.steps[s].value)
}

fn scan_steps(m: &[u32], steps: &[PoolStep], ts: &TypeSpace) -> Option<usize> {
    steps.iter().position(|s| s.messages.iter().any(|&k| subset_slice(ts.counts(k), m)))
}

/// Turns levels listed from the top down into an outcome. Every prefix of
/// `levels` must be upward closed. Adjacent levels whose means are out of
/// order or within [`VALUE_TOL`] are pooled, so the result is monotone even
/// when a closure misplaced a type of negligible probability.
fn build_outcome(inst: &FiniteInstance, levels: Vec<(f64, Vec<u32>)>) -> Result<EquilibriumOutcome> {
    if levels.is_empty() {
        return Err(Error::Solver("no active types".into()));
    }
    // (sum q*y, sum q, members)
    let mut merged: Vec<(f64, f64, Vec<u32>)> = Vec::with_capacity(levels.len());
    for (_, set) in levels {
        let (mut a, mut b) = (0.0, 0.0);
        for &i in &set {
            a += inst.q[i as usize] * inst.y[i as usize];
            b += inst.q[i as usize];
        }
        merged.push((a, b, set));
        while merged.len() > 1 {
            let n = merged.len();
            let upper = merged[n - 2].0 / merged[n - 2].1;
            let lower = merged[n - 1].0 / merged[n - 1].1;
            if upper - lower > VALUE_TOL {
                break;
            }
            let (a, b, set) = merged.pop().unwrap();
            let last = merged.last_mut().unwrap();
            last.0 += a;
            last.1 += b;
            last.2.extend(set);
        }
    }
    let merged: Vec<(f64, Vec<u32>)> = merged.into_iter().map(|(_, _, set)| (0.0, set)).collect();
    let ts = inst.types();
    let mut step_of = vec![NO_STEP; inst.len()];
    let mut payoff = vec![f64::NAN; inst.len()];
    let mut steps = Vec::with_capacity(merged.len());
    for (s, (_, mut set)) in merged.into_iter().enumerate() {
        set.sort_unstable();
        let value = inst.pool_value_u32(&set);
        for &i in &set {
            step_of[i as usize] = s as u32;
            payoff[i as usize] = value;
        }
        steps.push(PoolStep { index: s, value, messages: Vec::new(), members: set.iter().map(|&i| i as usize).collect() });
    }
    for w in steps.windows(2) {
        if !(w[0].value > w[1].value) {
            return Err(Error::Solver("step values are not strictly decreasing".into()));
        }
    }
    let mut buf = Vec::new();
    for step in &mut steps {
        let s = step.index as u32;
        step.messages = step
            .members
            .iter()
            .copied()
            .filter(|&i| {
                ts.down_neighbors(i, &mut buf);
                buf.iter().all(|&k| step_of[k] != s)
            })
            .collect();
    }
    for i in 0..inst.len() {
        if step_of[i] == NO_STEP {
            let s = scan_steps(ts.counts(i), &steps, ts).unwrap_or(steps.len() - 1);
            step_of[i] = s as u32;
            payoff[i] = steps[s].value;
        }
    }
    Ok(EquilibriumOutcome { steps, step_of, payoff })
}

/// Computes the truth-leaning outcome as the level sets of the weighted
/// isotonic regression of `y` on the type lattice.
pub fn solve_truth_leaning(inst: &FiniteInstance) -> Result<EquilibriumOutcome> {
    let nodes: Vec<u32> = (0..inst.len() as u32).filter(|&i| inst.active[i as usize]).collect();
    let levels = isotonic_levels(inst, nodes);
    build_outcome(inst, levels)
}

fn isotonic_levels(inst: &FiniteInstance, nodes: Vec<u32>) -> Vec<(f64, Vec<u32>)> {
    let mut out = Vec::new();
    let mut scratch = vec![u32::MAX; inst.len()];
    let mut stack = vec![nodes];
    while let Some(set) = stack.pop() {
        if set.is_empty() {
            continue;
        }
        let mean = inst.pool_value_u32(&set);
        if set.len() == 1 {
            out.push((mean, set));
            continue;
        }
        let sub = inst.dag.induced(&set, &mut scratch);
        // a median threshold keeps the recursion balanced; the mean always
        // makes progress when the set is not a single level
        let mut thresholds = Vec::with_capacity(2);
        if set.len() > 32 {
            let mut ys: Vec<f64> = set.iter().map(|&i| inst.y[i as usize]).collect();
            let mid = ys.len() / 2;
            let (_, m, _) = ys.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            thresholds.push(*m);
        }
        thresholds.push(mean);
        let mut split = None;
        for lambda in thresholds {
            let w = inst.weights(&set, lambda);
            let (member, _) = maximal_closure(&sub, &w);
            let k = member.iter().filter(|&&b| b).count();
            if k > 0 && k < set.len() {
                split = Some(member);
                break;
            }
        }
        match split {
            None => out.push((mean, set)),
            Some(member) => {
                let (mut up, mut down) = (Vec::new(), Vec::new());
                for (k, &i) in set.iter().enumerate() {
                    if member[k] {
                        up.push(i);
                    } else {
                        down.push(i);
                    }
                }
                stack.push(down);
                stack.push(up);
            }
        }
    }
    out
}

/// Best pool in a remaining set of types.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub members: Vec<usize>,
    pub messages: Vec<usize>,
    pub value: f64,
    /// Dinkelbach iterates, starting from the mean of the remaining set.
    pub lambdas: Vec<f64>,
}

/// Maximal pool with the highest value among upward-closed subsets of
/// `remaining`, which must itself be downward closed within the active
/// types (as it is after removing earlier pools).
pub fn best_pool(inst: &FiniteInstance, remaining: &[usize]) -> Result<Pool> {
    if remaining.is_empty() {
        return Err(Error::Solver("best pool of an empty set".into()));
    }
    let mut nodes: Vec<u32> = remaining.iter().map(|&i| i as u32).collect();
    nodes.sort_unstable();
    let mut scratch = vec![u32::MAX; inst.len()];
    let sub = inst.dag.induced(&nodes, &mut scratch);
    let mut lambda = inst.pool_value_u32(&nodes);
    let mut lambdas = vec![lambda];
    let mut current: Vec<u32> = nodes.clone();
    for _ in 0..MAX_DINKELBACH {
        let w = inst.weights(&nodes, lambda);
        let (member, _) = maximal_closure(&sub, &w);
        let set: Vec<u32> = nodes.iter().zip(&member).filter(|(_, &m)| m).map(|(&i, _)| i).collect();
        // a closure worse than the current pool can only come from rounding
        // on types of negligible probability
        if !set.is_empty() && inst.pool_value_u32(&set) >= lambda {
            current = set;
        }
        let next = inst.pool_value_u32(&current);
        if next <= lambda + 1e-14 * (1.0 + lambda.abs()) {
            let members: Vec<usize> = current.iter().map(|&i| i as usize).collect();
            let messages = minimal_within(inst, &members);
            return Ok(Pool { value: inst.pool_value(&members), members, messages, lambdas });
        }
        lambda = next;
        lambdas.push(lambda);
    }
    Err(Error::Solver("Dinkelbach iteration did not converge".into()))
}

fn minimal_within(inst: &FiniteInstance, set: &[usize]) -> Vec<usize> {
    let ts = inst.types();
    let mut inside = vec![false; inst.len()];
    for &i in set {
        inside[i] = true;
    }
    let mut buf = Vec::new();
    set.iter()
        .copied()
        .filter(|&i| {
            ts.down_neighbors(i, &mut buf);
            buf.iter().all(|&k| !inside[k])
        })
        .collect()
}

/// Outcome by literal iterative pool elimination.
pub fn solve_by_peeling(inst: &FiniteInstance) -> Result<EquilibriumOutcome> {
    let mut remaining = inst.active_indices();
    let mut levels: Vec<(f64, Vec<u32>)> = Vec::new();
    while !remaining.is_empty() {
        let pool = best_pool(inst, &remaining)?;
        let mut inside = vec![false; inst.len()];
        for &i in &pool.members {
            inside[i] = true;
        }
        remaining.retain(|&i| !inside[i]);
        levels.push((pool.value, pool.members.iter().map(|&i| i as u32).collect()));
    }
    build_outcome(inst, levels)
}

/// Exhaustive best pool over all nonempty upward-closed subsets of
/// `remaining` (at most [`BRUTE_FORCE_MAX`] types); maximisers within
/// `1e-12` are unioned.
pub fn brute_force_best_pool(inst: &FiniteInstance, remaining: &[usize]) -> Result<(Vec<usize>, f64)> {
    let k = remaining.len();
    if k > BRUTE_FORCE_MAX {
        return Err(Error::CapExceeded { count: k, cap: BRUTE_FORCE_MAX });
    }
    if k == 0 {
        return Err(Error::Solver("best pool of an empty set".into()));
    }
    let ts = inst.types();
    let ups: Vec<u32> = (0..k)
        .map(|a| {
            (0..k)
                .filter(|&b| subset_slice(ts.counts(remaining[a]), ts.counts(remaining[b])))
                .fold(0u32, |m, b| m | (1 << b))
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut union = 0u32;
    for mask in 1u32..(1u32 << k) {
        if (0..k).any(|a| mask & (1 << a) != 0 && ups[a] & !mask != 0) {
            continue;
        }
        let (mut s, mut w) = (0.0, 0.0);
        for a in 0..k {
            if mask & (1 << a) != 0 {
                s += inst.q[remaining[a]] * inst.y[remaining[a]];
                w += inst.q[remaining[a]];
            }
        }
        let v = s / w;
        let tol = 1e-12 * (1.0 + best.abs());
        if v > best + tol {
            best = v;
            union = mask;
        } else if v >= best - tol {
            union |= mask;
            best = best.max(v);
        }
    }
    let members: Vec<usize> = (0..k).filter(|&a| union & (1 << a) != 0).map(|a| remaining[a]).collect();
    let value = inst.pool_value(&members);
    Ok((members, value))
}

/// Pools from iterating [`brute_force_best_pool`], merged like the solver's
/// steps. Intended as a test oracle.
pub fn brute_force_levels(inst: &FiniteInstance) -> Result<Vec<(f64, Vec<usize>)>> {
    let mut remaining = inst.active_indices();
    let mut levels: Vec<(f64, Vec<u32>)> = Vec::new();
    while !remaining.is_empty() {
        let (members, _) = brute_force_best_pool(inst, &remaining)?;
        remaining.retain(|i| !members.contains(i));
        levels.push((0.0, members.iter().map(|&i| i as u32).collect()));
    }
    let out = build_outcome(inst, levels)?;
    Ok(out.steps.into_iter().map(|s| (s.value, s.members)).collect())
}

/// Result of re-solving every step on its own remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnouncementReport {
    pub pass: bool,
    /// Largest excess of a re-solved pool value over the stored step value.
    pub worst_gap: f64,
    pub worst_step: Option<usize>,
    pub members_match: bool,
}

/// Checks that no remaining set of types could announce a better pool than
/// the one the outcome assigns at each step.
pub fn verify_announcement_proof(outcome: &EquilibriumOutcome, inst: &FiniteInstance) -> Result<AnnouncementReport> {
    let mut report = AnnouncementReport { pass: true, worst_gap: 0.0, worst_step: None, members_match: true };
    let mut remaining: Vec<usize> = Vec::new();
    for step in outcome.steps.iter().rev() {
        remaining.extend(&step.members);
        remaining.sort_unstable();
        let pool = best_pool(inst, &remaining)?;
        let gap = pool.value - step.value;
        if gap > report.worst_gap {
            report.worst_gap = gap;
            report.worst_step = Some(step.index);
        }
        let mut stored = step.members.clone();
        stored.sort_unstable();
        if symmetric_difference_mass(inst, &stored, &pool.members) > PROB_TOL * pool_mass(inst, &stored) {
            report.members_match = false;
            if report.worst_step.is_none() {
                report.worst_step = Some(step.index);
            }
        }
    }
    report.pass = report.members_match && report.worst_gap <= VALUE_TOL;
    Ok(report)
}

fn pool_mass(inst: &FiniteInstance, set: &[usize]) -> f64 {
    set.iter().map(|&i| inst.q[i]).sum()
}

/// Probability of the types in exactly one of two sorted sets.
fn symmetric_difference_mass(inst: &FiniteInstance, a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut m) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            m += inst.q[a[i]];
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            m += inst.q[b[j]];
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    m
}

/// Rebuilds an outcome from explicit pools; used to construct perturbed
/// outcomes in tests and by callers that load saved steps.
pub fn outcome_from_pools(inst: &FiniteInstance, pools: Vec<Vec<usize>>) -> Result<EquilibriumOutcome> {
    let mut levels = pools
        .into_iter()
        .map(|p| {
            let v = inst.pool_value(&p);
            (v, p.into_iter().map(|i| i as u32).collect())
        })
        .collect::<Vec<(f64, Vec<u32>)>>();
    levels.sort_by(|a, b| b.0.total_cmp(&a.0));
    build_outcome(inst, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{validate_game, FiniteMassDist, MassModel, OutcomeModel, RawGame, StateSpace};
    use crate::DEFAULT_MAX_TYPES;
    use proptest::prelude::*;

    pub(crate) fn finite_game(values: Vec<f64>, prior: Vec<f64>, dist: Vec<Vec<f64>>, pmf: Vec<f64>) -> Game {
        let n_max = pmf.len() - 1;
        validate_game(RawGame {
            states: StateSpace { values, prior },
            outcomes: OutcomeModel { dist },
            mass: MassModel::Finite(FiniteMassDist { n_max, pmf }),
        })
        .unwrap()
    }

    fn dye() -> FiniteInstance {
        let g = finite_game(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.5, 0.5]);
        FiniteInstance::new(&g, DEFAULT_MAX_TYPES).unwrap()
    }

    fn idx(inst: &FiniteInstance, c: &[u32]) -> usize {
        inst.types().rank(c).unwrap()
    }

    #[test]
    fn dag_edge_counts() {
        let d = build_dag(TypeSpace::new(2, 1, &[0, 1], 100).unwrap());
        assert_eq!(d.n_edges(), 2);
        assert_eq!(d.edges.out(0), &[1, 2]);
        let d = build_dag(TypeSpace::new(2, 3, &[3], 100).unwrap());
        assert_eq!(d.n_edges(), 0);
        // pairs differing by one unit: 2 from (0,0) plus 2 each from (1,0), (0,1)
        let d = build_dag(TypeSpace::new(2, 2, &[0, 1, 2], 100).unwrap());
        assert_eq!(d.n_edges(), 6);
    }

    #[test]
    fn dye_type_probabilities() {
        let inst = dye();
        let i = idx(&inst, &[0, 1]);
        assert!((inst.q()[i] - 0.25).abs() < 1e-15);
        assert!((inst.y()[i] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn dye_brute_force_first_pool() {
        let inst = dye();
        let (m, v) = brute_force_best_pool(&inst, &inst.active_indices()).unwrap();
        assert_eq!(m, vec![idx(&inst, &[0, 1])]);
        assert!((v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn dye_outcome() {
        let inst = dye();
        for out in [solve_truth_leaning(&inst).unwrap(), solve_by_peeling(&inst).unwrap()] {
            assert_eq!(out.steps.len(), 2);
            assert!((out.payoff(idx(&inst, &[0, 1])) - 0.8).abs() < 1e-12);
            assert!((out.payoff(idx(&inst, &[0, 0])) - 0.4).abs() < 1e-12);
            assert!((out.payoff(idx(&inst, &[1, 0])) - 0.4).abs() < 1e-12);
            assert_eq!(out.steps[1].messages, vec![idx(&inst, &[0, 0])]);
            assert!(out.bayes_residual(&inst).abs() < 1e-12);
            let big = outcome_query(&DatasetCounts(vec![5, 5]), &out, &inst).unwrap();
            assert!((big - 0.8).abs() < 1e-12);
            let empty = outcome_query(&DatasetCounts(vec![0, 0]), &out, &inst).unwrap();
            assert!((empty - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn closure_on_three_chain() {
        let dag = build_dag(TypeSpace::new(1, 2, &[0, 1, 2], 10).unwrap());
        assert_eq!(max_weight_closure(&dag, &[3.0, -2.0, 1.0], false), vec![0, 1, 2]);
        assert!(max_weight_closure(&dag, &[-3.0, -2.0, -1.0], false).is_empty());
        assert_eq!(max_weight_closure(&dag, &[-3.0, -2.0, -1.0], true), vec![2]);
        assert_eq!(max_weight_closure(&dag, &[1.0, 1.0, 1.0], false), vec![0, 1, 2]);
    }

    #[test]
    fn degenerate_mass_separates_fully() {
        let g = finite_game(
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![vec![0.2, 0.2, 0.4, 0.2], vec![0.1, 0.1, 0.5, 0.3]],
            vec![0.0, 0.0, 0.0, 1.0],
        );
        let inst = FiniteInstance::new(&g, DEFAULT_MAX_TYPES).unwrap();
        let out = solve_truth_leaning(&inst).unwrap();
        for i in 0..inst.len() {
            assert!((out.payoff(i) - inst.y()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_state_is_one_step() {
        let g = finite_game(vec![2.5], vec![1.0], vec![vec![0.3, 0.7]], vec![0.2, 0.3, 0.5]);
        let inst = FiniteInstance::new(&g, DEFAULT_MAX_TYPES).unwrap();
        let out = solve_truth_leaning(&inst).unwrap();
        assert_eq!(out.steps.len(), 1);
        assert!(out.payoffs().iter().all(|&u| (u - 2.5).abs() < 1e-12));
        let rep = verify_announcement_proof(&out, &inst).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn perturbed_outcome_fails_announcement_check() {
        let inst = dye();
        let out = solve_truth_leaning(&inst).unwrap();
        assert!(verify_announcement_proof(&out, &inst).unwrap().pass);
        // move (0,1) down into the bottom pool
        let pools = vec![inst.active_indices()];
        let bad = outcome_from_pools(&inst, pools).unwrap();
        let rep = verify_announcement_proof(&bad, &inst).unwrap();
        assert!(!rep.pass);
        assert!((rep.worst_gap - 0.3).abs() < 1e-12);
    }

    #[test]
    fn impossible_types_are_inactive() {
        let g = finite_game(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0]], vec![0.5, 0.5]);
        let inst = FiniteInstance::new(&g, DEFAULT_MAX_TYPES).unwrap();
        let k = idx(&inst, &[0, 0, 1]);
        assert!(!inst.is_active(k));
        let out = solve_truth_leaning(&inst).unwrap();
        assert!(out.bayes_residual(&inst).abs() < 1e-12);
        // (0,0,1) contains only the empty message
        assert_eq!(out.payoff(k), out.payoff(idx(&inst, &[0, 0, 0])));
    }

    pub(crate) fn arb_instance() -> impl Strategy<Value = FiniteInstance> {
        (1usize..=3, 1usize..=3, 1usize..=4)
            .prop_flat_map(|(j, d, n)| {
                (
                    prop::collection::vec(0.0f64..1.0, j),
                    prop::collection::vec(0.05f64..1.0, j),
                    prop::collection::vec(prop::collection::vec(0.05f64..1.0, d), j),
                    prop::collection::vec(0.0f64..1.0, n + 1),
                )
            })
            .prop_filter_map("too many types", |(vals, prior, rows, pmf)| {
                let mut vals = vals;
                vals.sort_by(|a, b| a.total_cmp(b));
                vals.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                let j = vals.len();
                let ps: f64 = prior[..j].iter().sum();
                let prior: Vec<f64> = prior[..j].iter().map(|p| p / ps).collect();
                let dist: Vec<Vec<f64>> = rows[..j]
                    .iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|x| x / s).collect()
                    })
                    .collect();
                let mut pmf = pmf;
                let last = pmf.len() - 1;
                pmf[last] += 0.1;
                let s: f64 = pmf.iter().sum();
                let pmf: Vec<f64> = pmf.iter().map(|x| x / s).collect();
                let g = validate_game(RawGame {
                    states: StateSpace { values: vals, prior },
                    outcomes: OutcomeModel { dist },
                    mass: MassModel::Finite(FiniteMassDist { n_max: last, pmf }),
                })
                .ok()?;
                let inst = FiniteInstance::new(&g, BRUTE_FORCE_MAX).ok()?;
                Some(inst)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solvers_agree_with_brute_force(inst in arb_instance()) {
            let oracle = brute_force_levels(&inst).unwrap();
            for out in [solve_truth_leaning(&inst).unwrap(), solve_by_peeling(&inst).unwrap()] {
                prop_assert_eq!(out.steps.len(), oracle.len());
                for (s, (v, m)) in out.steps.iter().zip(&oracle) {
                    prop_assert!((s.value - v).abs() <= 1e-12);
                    prop_assert_eq!(&s.members, m);
                }
            }
        }

        #[test]
        fn outcome_invariants(inst in arb_instance()) {
            let out = solve_truth_leaning(&inst).unwrap();
            prop_assert!(out.bayes_residual(&inst).abs() < 1e-9);
            prop_assert!((inst.total_prob() - 1.0).abs() < 1e-9);
            let ts = inst.types();
            let mut buf = Vec::new();
            for i in 0..inst.len() {
                ts.up_neighbors(i, &mut buf);
                for &j in &buf {
                    prop_assert!(out.payoff(i) <= out.payoff(j) + 1e-12);
                }
                // a type that loses relative to full information is never
                // forced away from its own dataset
                if inst.y()[i] > out.payoff(i) + VALUE_TOL {
                    prop_assert!(outcome_query(&ts.get(i), &out, &inst).unwrap() == out.payoff(i));
                }
            }
            for w in out.steps.windows(2) {
                prop_assert!(w[0].value > w[1].value);
            }
            let rep = verify_announcement_proof(&out, &inst).unwrap();
            prop_assert!(rep.pass);
        }

        #[test]
        fn dinkelbach_is_monotone(inst in arb_instance()) {
            let pool = best_pool(&inst, &inst.active_indices()).unwrap();
            prop_assert!(pool.lambdas.len() <= inst.len() + 1);
            for w in pool.lambdas.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }
}
