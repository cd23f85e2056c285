//! Mixed strategies that implement a solved finite outcome.
//!
//! Inside a pool with value `v`, types whose own posterior mean is at least
//! `v` disclose everything. Every other member sends the full dataset of
//! some truthful member contained in its own, in proportions that bring
//! each message's conditional mean down to exactly `v`. The proportions come
//! from decomposing the maximum flow that certifies the pool's closure.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::finite::{EquilibriumOutcome, FiniteInstance, PoolStep};
use crate::flow::closure_cut;
use crate::types::subset_slice;

/// Sparse `x(t, m)`: row `i` lists the messages of type `i` with the
/// probability mass (not conditional probability) sent to each.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    start: Vec<usize>,
    message: Vec<u32>,
    mass: Vec<f64>,
}

impl StrategyProfile {
    pub fn n_types(&self) -> usize {
        self.start.len() - 1
    }

    /// Messages of type `i` (as type indices) and their masses.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.start[i]..self.start[i + 1];
        (&self.message[r.clone()], &self.mass[r])
    }

    pub fn n_entries(&self) -> usize {
        self.mass.len()
    }

    /// Every message that some type sends with positive mass, ascending.
    pub fn on_path_messages(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_types()];
        for (&m, &x) in self.message.iter().zip(&self.mass) {
            if x > 0.0 {
                seen[m as usize] = true;
            }
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }
}

/// One entry of a pool strategy: `mass` of type `type_index` sends the full
/// dataset of type `message`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyEntry {
    pub type_index: usize,
    pub message: usize,
    pub mass: f64,
}

/// Strategy restricted to the members of one step.
pub fn pool_strategy(inst: &FiniteInstance, step: &PoolStep) -> Vec<StrategyEntry> {
    let nodes: Vec<u32> = step.members.iter().map(|&i| i as u32).collect();
    let q = inst.q();
    let y = inst.y();
    let w = inst.weights(&nodes, step.value);
    let mut out = Vec::with_capacity(nodes.len());
    if w.iter().all(|&x| x >= 0.0) {
        for &i in &step.members {
            out.push(StrategyEntry { type_index: i, message: i, mass: q[i] });
        }
        return out;
    }
    let mut scratch = vec![u32::MAX; inst.len()];
    let sub = inst.dag().induced(&nodes, &mut scratch);
    let cut = closure_cut(&sub, &w);

    // walk nodes in index order (subsets first), carrying FIFO pieces of
    // flow labelled by the truthful type they started from
    let k = nodes.len();
    let mut bags: Vec<VecDeque<(u32, f64)>> = vec![VecDeque::new(); k];
    let mut received: Vec<Vec<(u32, f64)>> = vec![Vec::new(); k];
    for u in 0..k {
        let mut bag = core::mem::take(&mut bags[u]);
        if w[u] > 0.0 {
            bag.push_back((u as u32, cut.terminal_flow[u]));
        } else if w[u] < 0.0 {
            received[u] = take(&mut bag, cut.terminal_flow[u]);
        }
        for e in sub.start[u]..sub.start[u + 1] {
            let f = cut.edge_flow[e];
            if f > 0.0 {
                let pieces = take(&mut bag, f);
                let target = &mut bags[sub.to[e] as usize];
                for p in pieces {
                    push_merged(target, p);
                }
            }
        }
    }

    for u in 0..k {
        let i = nodes[u] as usize;
        if w[u] >= 0.0 {
            out.push(StrategyEntry { type_index: i, message: i, mass: q[i] });
            continue;
        }
        let gap = step.value - y[i];
        let mut row: Vec<(u32, f64)> = Vec::new();
        for &(origin, amount) in &received[u] {
            match row.iter_mut().find(|(o, _)| *o == origin) {
                Some(r) => r.1 += amount / gap,
                None => row.push((origin, amount / gap)),
            }
        }
        let total: f64 = row.iter().map(|r| r.1).sum();
        if total > 0.0 {
            for (origin, x) in row {
                out.push(StrategyEntry { type_index: i, message: nodes[origin as usize] as usize, mass: x * q[i] / total });
            }
        } else {
            // only reachable for types below floating-point resolution
            out.push(StrategyEntry { type_index: i, message: i, mass: q[i] });
        }
    }
    out
}

/// Removes `amount` from the front of `bag`, splitting the last piece.
fn take(bag: &mut VecDeque<(u32, f64)>, mut amount: f64) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    while amount > 0.0 {
        let Some(front) = bag.front_mut() else { break };
        if front.1 <= amount {
            amount -= front.1;
            out.push(*front);
            bag.pop_front();
        } else {
            front.1 -= amount;
            out.push((front.0, amount));
            amount = 0.0;
        }
    }
    out
}

fn push_merged(bag: &mut VecDeque<(u32, f64)>, piece: (u32, f64)) {
    match bag.back_mut() {
        Some(last) if last.0 == piece.0 => last.1 += piece.1,
        _ => bag.push_back(piece),
    }
}

/// Strategy profile for every active type of a solved outcome. Inactive
/// types have empty rows.
pub fn strategy_profile(inst: &FiniteInstance, outcome: &EquilibriumOutcome) -> StrategyProfile {
    let mut entries: Vec<StrategyEntry> = Vec::with_capacity(inst.len());
    for step in &outcome.steps {
        entries.extend(pool_strategy(inst, step));
    }
    entries.sort_by_key(|e| (e.type_index, e.message));
    let mut start = vec![0usize; inst.len() + 1];
    for e in &entries {
        start[e.type_index + 1] += 1;
    }
    for i in 0..inst.len() {
        start[i + 1] += start[i];
    }
    StrategyProfile {
        start,
        message: entries.iter().map(|e| e.message as u32).collect(),
        mass: entries.iter().map(|e| e.mass).collect(),
    }
}

/// Worst violations of the profile's constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    /// Largest `|sum_m x(t, m) - q(t)|`.
    pub row_residual: f64,
    /// Largest `|sum_t x(t, m) (E[theta|t] - v)|` over messages `m`, with
    /// `v` the value of the step of `m`.
    pub mean_residual: f64,
    /// Every message is contained in its sender and lies in the sender's step.
    pub feasible: bool,
    pub pass: bool,
}

/// Tolerance on both residuals of [`check_strategy`].
pub const STRATEGY_TOL: f64 = 1e-8;

pub fn check_strategy(inst: &FiniteInstance, outcome: &EquilibriumOutcome, profile: &StrategyProfile) -> StrategyReport {
    let ts = inst.types();
    let q = inst.q();
    let y = inst.y();
    let mut row_residual: f64 = 0.0;
    let mut feasible = true;
    let mut balance = vec![0.0f64; inst.len()];
    for i in 0..inst.len() {
        let (msgs, mass) = profile.row(i);
        if !inst.is_active(i) {
            feasible &= msgs.is_empty();
            continue;
        }
        let s: f64 = mass.iter().sum();
        row_residual = row_residual.max((s - q[i]).abs());
        let v = outcome.steps[outcome.step_of(i)].value;
        for (&m, &x) in msgs.iter().zip(mass) {
            let m = m as usize;
            feasible &= x >= 0.0 && subset_slice(ts.counts(m), ts.counts(i)) && outcome.step_of(m) == outcome.step_of(i);
            balance[m] += x * (y[i] - v);
        }
    }
    let mean_residual = balance.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    StrategyReport {
        row_residual,
        mean_residual,
        feasible,
        pass: feasible && row_residual <= STRATEGY_TOL && mean_residual <= STRATEGY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::solve_truth_leaning;
    use crate::game::{validate_game, FiniteMassDist, MassModel, OutcomeModel, RawGame, StateSpace};
    use crate::DEFAULT_MAX_TYPES;
    use proptest::prelude::*;

    fn instance(values: Vec<f64>, prior: Vec<f64>, dist: Vec<Vec<f64>>, pmf: Vec<f64>) -> FiniteInstance {
        let n_max = pmf.len() - 1;
        let g = validate_game(RawGame {
            states: StateSpace { values, prior },
            outcomes: OutcomeModel { dist },
            mass: MassModel::Finite(FiniteMassDist { n_max, pmf }),
        })
        .unwrap();
        FiniteInstance::new(&g, DEFAULT_MAX_TYPES).unwrap()
    }

    #[test]
    fn dye_profile() {
        let inst = instance(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.5, 0.5]);
        let out = solve_truth_leaning(&inst).unwrap();
        let p = strategy_profile(&inst, &out);
        let ts = inst.types();
        let empty = ts.rank(&[0, 0]).unwrap();
        let low = ts.rank(&[1, 0]).unwrap();
        let high = ts.rank(&[0, 1]).unwrap();
        assert_eq!(p.row(high).0, &[high as u32]);
        assert_eq!(p.row(low).0, &[empty as u32]);
        assert_eq!(p.row(empty).0, &[empty as u32]);
        assert!((p.row(low).1[0] - inst.q()[low]).abs() < 1e-15);
        assert!(check_strategy(&inst, &out, &p).pass);
    }

    #[test]
    fn single_type_pool_is_truthful() {
        let inst = instance(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![0.8, 0.2], vec![0.2, 0.8]], vec![0.0, 1.0]);
        let out = solve_truth_leaning(&inst).unwrap();
        let p = strategy_profile(&inst, &out);
        for step in &out.steps {
            for &i in &step.members {
                assert_eq!(p.row(i).0, &[i as u32]);
            }
        }
    }

    #[test]
    fn table1_n6_pools_balance() {
        let pmf = vec![1.0 / 7.0; 7];
        let inst =
            instance(vec![0.0, 1.0], vec![0.5, 0.5], vec![vec![0.2, 0.2, 0.4, 0.2], vec![0.1, 0.1, 0.5, 0.3]], pmf);
        let out = solve_truth_leaning(&inst).unwrap();
        let p = strategy_profile(&inst, &out);
        let r = check_strategy(&inst, &out, &p);
        assert!(r.pass, "{r:?}");
        assert!(out.steps.iter().any(|s| s.members.len() > 2));
    }

    fn arb_instance() -> impl Strategy<Value = FiniteInstance> {
        (1usize..=3, 2usize..=3, 1usize..=4).prop_flat_map(|(j, d, n)| {
            (
                proptest::collection::vec(0.0f64..1.0, j),
                proptest::collection::vec(0.05f64..1.0, j),
                proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, d), j),
                proptest::collection::vec(0.05f64..1.0, n + 1),
            )
                .prop_map(|(mut vals, prior, dist, pmf)| {
                    vals.sort_by(|a, b| a.total_cmp(b));
                    for k in 1..vals.len() {
                        if vals[k] <= vals[k - 1] {
                            vals[k] = vals[k - 1] + 0.1;
                        }
                    }
                    let norm = |v: Vec<f64>| {
                        let s: f64 = v.iter().sum();
                        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
                    };
                    instance(vals, norm(prior), dist.into_iter().map(norm).collect(), norm(pmf))
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn profiles_implement_the_outcome(inst in arb_instance()) {
            let out = solve_truth_leaning(&inst).unwrap();
            let p = strategy_profile(&inst, &out);
            let r = check_strategy(&inst, &out, &p);
            prop_assert!(r.pass, "{:?}", r);
            // messages sent are on-path: the sender's step value is attained
            for m in p.on_path_messages() {
                prop_assert!((out.payoff(m) - out.steps[out.step_of(m)].value).abs() < 1e-12);
            }
        }
    }
}
