//! Continuum-limit equilibrium by a top-down sweep over payoff levels.
//!
//! At level `v` the states above `v` carry a burden `b_k`: the smallest mass
//! of `f_k` whose message is worth at least `v`. A type `mu f_j` is worth at
//! least `v` when it can send one of these messages, i.e. when `mu` exceeds
//! its reach `tau_j = min_k r_j(k) b_k`. The sweep starts at the top state,
//! lowers `v`, and records how burdens move:
//!
//! * an honest entry when `v` crosses a state value,
//! * strict stretches where each group of targets ("element") shrinks its
//!   burdens by a common factor so that the mean state of the types at its
//!   frontier equals `v`,
//! * flat pools where a whole band of types is worth the same.
//!
//! Pieces are stored top-down and payoffs are read back from them.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::binary::effective_top;
use crate::density::PiecewiseDensity;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::num::golden_max;
use crate::series::{mixture_derivs, mixture_value_fast, Term, MAX_ORDER};

/// Largest state count accepted by the sweep.
pub const MAX_LIMIT_STATES: usize = 8;
/// Largest target count enumerated by the partition step.
pub const MAX_PARTITION_TARGETS: usize = 12;
/// Putative steps per gap between the two highest states.
pub const STEPS_PER_GAP: f64 = 256.0;

const OPT_TOL: f64 = 1e-10;
const EVENT_WIDTH: f64 = 1e-11;
const POOL_MARGIN: f64 = 1e-10;
const VALUE_TIE: f64 = 1e-9;
const DERIV_TIE: f64 = 1e-7;
const FLOOR_GRID: usize = 4096;
const SCAN_GRID: usize = 256;
const STALL_LIMIT: usize = 4;

/// How a type's payoff is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Payoff strictly increasing in the type's mass.
    Strict,
    /// Flat stretch shared by a pooled band of types.
    Pool,
    /// Flat stretch at the type's own state value.
    Honest,
}

impl SegmentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmentKind::Strict => "strict",
            SegmentKind::Pool => "pool",
            SegmentKind::Honest => "honest",
        }
    }
}

/// Continuum data of a game: ratios, priors and the mass density.
#[derive(Debug, Clone)]
pub struct LimitModel {
    g: PiecewiseDensity,
    theta: Vec<f64>,
    beta: Vec<f64>,
    ratio: Vec<Vec<f64>>,
    s_lo: f64,
    s_hi: f64,
    scale: f64,
}

fn effective_bottom(g: &PiecewiseDensity) -> f64 {
    for p in g.pieces() {
        if p.coeffs.iter().any(|c| *c != 0.0) {
            return p.lo;
        }
    }
    g.support_lo()
}

impl LimitModel {
    pub fn new(game: &Game) -> Result<Self> {
        let n = game.n_states();
        if n > MAX_LIMIT_STATES {
            return Err(Error::Unsupported(alloc::format!("at most {MAX_LIMIT_STATES} states in the limit")));
        }
        let g = game.density()?.clone();
        let theta: Vec<f64> = (0..n).map(|j| game.theta(j)).collect();
        let beta = (0..n).map(|j| game.prior(j)).collect();
        let ratio = (0..n).map(|j| (0..n).map(|k| game.imitation_ratio(j, k)).collect()).collect();
        let scale = if n > 1 { theta[n - 1] - theta[0] } else { 1.0 };
        let s_lo = effective_bottom(&g);
        let s_hi = effective_top(&g);
        Ok(Self { g, theta, beta, ratio, s_lo, s_hi, scale })
    }

    pub fn n_states(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.theta[j]
    }

    pub fn prior(&self, j: usize) -> f64 {
        self.beta[j]
    }

    pub fn ratio(&self, j: usize, k: usize) -> f64 {
        self.ratio[j][k]
    }

    pub fn density(&self) -> &PiecewiseDensity {
        &self.g
    }

    /// Bottom and top of the part of the support carrying mass.
    pub fn support(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    /// Reach of every state given burdens (`inf` marks a non-target).
    pub fn reach(&self, burden: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|j| {
                let mut t = f64::INFINITY;
                for (k, &b) in burden.iter().enumerate() {
                    let r = self.ratio[j][k];
                    if b.is_finite() && r.is_finite() {
                        t = t.min(r * b);
                    }
                }
                t
            })
            .collect()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x.is_finite() {
            self.g.cdf(x)
        } else {
            1.0
        }
    }

    fn has_mass_below(&self, x: f64) -> bool {
        x > self.s_lo
    }

    fn terms(&self, states: &[usize], reach: &[f64]) -> Vec<Term> {
        states.iter().map(|&j| Term { weight: self.beta[j], theta: self.theta[j], tau: reach[j] }).collect()
    }

    /// Gain from pooling the types between the frontiers `m <= b` at level
    /// `w`: `sum_j beta_j (theta_j - w) [G(tau_j(b)) - G(tau_j(m))]`.
    pub fn pool_gain(&self, reach_b: &[f64], m: &[f64], w: f64) -> PoolStats {
        let reach_m = self.reach(m);
        let mut st = PoolStats { gain: 0.0, mass: 0.0, weighted: 0.0 };
        for j in 0..self.n_states() {
            let d = (self.cdf(reach_b[j]) - self.cdf(reach_m[j])).max(0.0);
            st.mass += self.beta[j] * d;
            st.weighted += self.beta[j] * self.theta[j] * d;
            st.gain += self.beta[j] * (self.theta[j] - w) * d;
        }
        st
    }

    /// Level-set objective `sum_j beta_j (theta_j - v) (1 - G(tau_j(b)))`.
    pub fn level_objective(&self, burden: &[f64], v: f64) -> f64 {
        let reach = self.reach(burden);
        (0..self.n_states()).map(|j| self.beta[j] * (self.theta[j] - v) * (1.0 - self.cdf(reach[j]))).sum()
    }

    fn exhausted(&self, reach: &[f64]) -> bool {
        reach.iter().all(|&t| !self.has_mass_below(t))
    }
}

/// Mass and mean of a candidate pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolStats {
    pub gain: f64,
    pub mass: f64,
    pub weighted: f64,
}

impl PoolStats {
    pub fn value(&self) -> f64 {
        self.weighted / self.mass
    }
}

/// A group of targets whose burdens move together, with the states whose
/// frontier types send them.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionElement {
    pub targets: Vec<usize>,
    pub supp: Vec<usize>,
    /// Left derivatives of the frontier mean at the current burdens, or
    /// `None` when no supporting type has mass just below its reach.
    pub derivs: Option<[f64; MAX_ORDER + 1]>,
}

#[derive(Debug, Clone)]
pub struct PartitionState {
    pub reach: Vec<f64>,
    /// Cheapest targets of each state.
    pub opt: Vec<Vec<usize>>,
    pub elements: Vec<PartitionElement>,
}

fn cmp_keys(a: &[f64; MAX_ORDER + 1], b: &[f64; MAX_ORDER + 1], scale: f64) -> Ordering {
    for n in 0..=MAX_ORDER {
        // larger value first, then slower decline to the left
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let tol = if n == 0 { VALUE_TIE } else { DERIV_TIE } * scale;
        let (x, y) = (sign * a[n], sign * b[n]);
        if x > y + tol {
            return Ordering::Greater;
        }
        if y > x + tol {
            return Ordering::Less;
        }
    }
    Ordering::Equal
}

fn cheapest_targets(model: &LimitModel, burden: &[f64], reach: &[f64]) -> Vec<Vec<usize>> {
    (0..model.n_states())
        .map(|j| {
            if !reach[j].is_finite() {
                return Vec::new();
            }
            (0..burden.len())
                .filter(|&k| {
                    let r = model.ratio[j][k];
                    burden[k].is_finite() && r.is_finite() && r * burden[k] <= reach[j] * (1.0 + OPT_TOL) + 1e-300
                })
                .collect()
        })
        .collect()
}

fn components(targets: &[usize], states: &[usize], opt: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..targets.len()).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for &j in states {
        let idx: Vec<usize> = opt[j].iter().filter_map(|k| targets.iter().position(|t| t == k)).collect();
        for w in idx.windows(2) {
            let (a, b) = (root(&mut label, w[0]), root(&mut label, w[1]));
            label[a] = b;
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..targets.len() {
        let r = root(&mut label, i);
        match roots.iter().position(|&x| x == r) {
            Some(p) => out[p].push(targets[i]),
            None => {
                roots.push(r);
                out.push(vec![targets[i]]);
            }
        }
    }
    out
}

/// `Delta_n` of the frontier mean of the states targeting `set` at burdens
/// scaled by `alpha`.
pub fn delta_n(model: &LimitModel, set: &[usize], burden: &[f64], alpha: f64, n: usize) -> Option<f64> {
    let reach = model.reach(burden);
    let opt = cheapest_targets(model, burden, &reach);
    let supp: Vec<usize> = (0..model.n_states()).filter(|&j| opt[j].iter().any(|k| set.contains(k))).collect();
    mixture_derivs(&model.g, &model.terms(&supp, &reach), alpha).and_then(|d| d.get(n).copied())
}

/// Splits the current targets into elements, picking at each stage the
/// subset whose frontier mean is highest and declines slowest to the left.
pub fn partition_states(model: &LimitModel, burden: &[f64]) -> Result<PartitionState> {
    let targets: Vec<usize> = (0..burden.len()).filter(|&k| burden[k].is_finite()).collect();
    if targets.len() > MAX_PARTITION_TARGETS {
        return Err(Error::CapExceeded { count: targets.len(), cap: MAX_PARTITION_TARGETS });
    }
    let reach = model.reach(burden);
    let opt = cheapest_targets(model, burden, &reach);
    let mut free: Vec<usize> = (0..model.n_states()).filter(|&j| !opt[j].is_empty()).collect();
    let mut queue = components(&targets, &free, &opt);
    let mut elements = Vec::new();
    while let Some(comp) = queue.pop() {
        let mut best: Option<(Vec<usize>, Vec<usize>, [f64; MAX_ORDER + 1])> = None;
        for mask in 1u32..(1u32 << comp.len()) {
            let set: Vec<usize> = (0..comp.len()).filter(|i| mask & (1 << i) != 0).map(|i| comp[i]).collect();
            let supp: Vec<usize> = free.iter().copied().filter(|&j| opt[j].iter().any(|k| set.contains(k))).collect();
            if supp.is_empty() {
                continue;
            }
            let Some(key) = mixture_derivs(&model.g, &model.terms(&supp, &reach), 1.0) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((bs, _, bk)) => match cmp_keys(&key, bk, model.scale) {
                    Ordering::Greater => true,
                    Ordering::Equal => set.len() > bs.len(),
                    Ordering::Less => false,
                },
            };
            if better {
                best = Some((set, supp, key));
            }
        }
        match best {
            None => {
                for &k in &comp {
                    let supp: Vec<usize> = free.iter().copied().filter(|&j| opt[j].contains(&k)).collect();
                    free.retain(|j| !supp.contains(j));
                    elements.push(PartitionElement { targets: vec![k], supp, derivs: None });
                }
            }
            Some((set, supp, key)) => {
                free.retain(|j| !supp.contains(j));
                let rest: Vec<usize> = comp.iter().copied().filter(|k| !set.contains(k)).collect();
                elements.push(PartitionElement { targets: set, supp, derivs: Some(key) });
                if !rest.is_empty() {
                    queue.extend(components(&rest, &free, &opt));
                }
            }
        }
    }
    elements.sort_by_key(|e| e.targets[0]);
    Ok(PartitionState { reach, opt, elements })
}

/// Frontier mean of an element when its burdens are scaled by `alpha`.
pub fn putative_payoff(model: &LimitModel, el: &PartitionElement, reach: &[f64], alpha: f64) -> Option<f64> {
    mixture_value_fast(&model.g, &model.terms(&el.supp, reach), alpha)
}

/// Largest scale in `[lo, 1]` at which the putative payoff is at most `w`,
/// assuming it is increasing on that range.
pub fn invert_putative(model: &LimitModel, el: &PartitionElement, reach: &[f64], w: f64, lo: f64) -> f64 {
    let terms = model.terms(&el.supp, reach);
    let f = |a: f64| mixture_value_fast(&model.g, &terms, a).unwrap_or(f64::NEG_INFINITY);
    let (mut a, mut b) = (lo, 1.0);
    if f(b) <= w {
        return 1.0;
    }
    if f(a) >= w {
        return a;
    }
    for _ in 0..64 {
        if b - a <= 1e-16 {
            break;
        }
        let m = 0.5 * (a + b);
        if f(m) >= w {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

/// One element as it moves during a strict stretch.
#[derive(Debug, Clone)]
struct Mover {
    el: PartitionElement,
    terms: Vec<Term>,
    /// Cheapest targets of each supporting state, within this element.
    opt: Vec<(usize, Vec<usize>)>,
    frozen: bool,
    v1: f64,
    floor_alpha: f64,
    floor_value: f64,
    floor_has_mass: bool,
}

impl Mover {
    fn new(model: &LimitModel, el: PartitionElement, part: &PartitionState) -> Self {
        let terms = model.terms(&el.supp, &part.reach);
        let opt = el.supp.iter().map(|&j| (j, part.opt[j].iter().copied().filter(|k| el.targets.contains(k)).collect())).collect();
        let mut m = Mover {
            el,
            terms,
            opt,
            frozen: true,
            v1: 0.0,
            floor_alpha: 1.0,
            floor_value: f64::NEG_INFINITY,
            floor_has_mass: false,
        };
        let live = m.terms.iter().any(|t| model.has_mass_below(t.tau.min(model.s_hi)));
        let v1 = match m.el.derivs {
            Some(d) if live => d[0],
            _ => return m,
        };
        m.frozen = false;
        m.v1 = v1;
        m.scan_floor(model);
        m
    }

    fn value(&self, model: &LimitModel, a: f64) -> Option<f64> {
        mixture_value_fast(&model.g, &self.terms, a)
    }

    /// First local minimum of the putative payoff below `alpha = 1`.
    fn scan_floor(&mut self, model: &LimitModel) {
        let tmax = self.terms.iter().filter(|t| t.tau.is_finite() && t.tau > 0.0).fold(0.0f64, |m, t| m.max(t.tau));
        let a_min = if model.s_lo > 0.0 && tmax > 0.0 { (model.s_lo / tmax).min(1.0) } else { 0.0 };
        let step = (1.0 - a_min) / FLOOR_GRID as f64;
        let (mut best, mut best_i) = (self.v1, 0usize);
        let mut last_i = 0;
        for i in 1..=FLOOR_GRID {
            let a = 1.0 - i as f64 * step;
            let Some(x) = self.value(model, a) else { break };
            last_i = i;
            if x < best - 1e-13 * model.scale {
                best = x;
                best_i = i;
            } else if x > best + 1e-12 * model.scale {
                break;
            }
        }
        let _ = last_i;
        let mut alpha = 1.0 - best_i as f64 * step;
        if best_i > 0 {
            let lo = (alpha - step).max(a_min);
            let hi = (alpha + step).min(1.0);
            let (a, fx) = golden_max(|a| -self.value(model, a).unwrap_or(f64::INFINITY), lo, hi, 1e-14);
            if -fx <= best {
                alpha = a;
                best = -fx;
            }
        }
        self.floor_alpha = alpha;
        self.floor_value = best;
        self.floor_has_mass = self.terms.iter().any(|t| model.has_mass_below((alpha * t.tau).min(model.s_hi)));
    }

    /// Scale of the element's burdens at level `w` and whether the floor is
    /// crossed with mass left below it.
    fn alpha_at(&self, model: &LimitModel, w: f64) -> (f64, bool) {
        if self.frozen || self.v1 <= w {
            return (1.0, false);
        }
        if w < self.floor_value - 1e-12 * model.scale {
            return (self.floor_alpha, self.floor_has_mass);
        }
        if w <= self.floor_value {
            return (self.floor_alpha, false);
        }
        (invert_putative(model, &self.el, &self.reach_of_terms(), w, self.floor_alpha), false)
    }

    fn reach_of_terms(&self) -> Vec<f64> {
        let n = self.el.supp.iter().max().map_or(0, |m| m + 1);
        let mut r = vec![f64::INFINITY; n];
        for (t, &j) in self.terms.iter().zip(&self.el.supp) {
            r[j] = t.tau;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Events {
    reach: bool,
    subset: bool,
    floor: bool,
    pool: bool,
}

impl Events {
    fn any(&self) -> bool {
        self.reach || self.subset || self.floor || self.pool
    }
}

/// Result of a search for a profitable pool below a frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSearch {
    /// Lower burdens of the pool.
    pub burden: Vec<f64>,
    pub stats: PoolStats,
}

fn refine_coord(model: &LimitModel, reach_b: &[f64], m: &mut [f64], k: usize, hi: f64, w: f64, grid: usize) -> f64 {
    let eval = |x: f64, m: &mut [f64]| {
        m[k] = x;
        model.pool_gain(reach_b, m, w).gain
    };
    let xs: Vec<f64> = (0..=grid).map(|i| hi * i as f64 / grid as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| eval(x, m)).collect();
    let mut best_x = m[k];
    let mut best_v = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..=grid)
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i == grid || vals[i] >= vals[i + 1]))
        .collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    for &i in order.iter().take(3) {
        if vals[i] > best_v || (vals[i] == best_v && xs[i] < best_x) {
            best_v = vals[i];
            best_x = xs[i];
        }
        let lo = xs[i.saturating_sub(1)];
        let up = xs[(i + 1).min(grid)];
        if up > lo {
            let mut mm = m.to_vec();
            let (x, fx) = golden_max(|x| eval(x, &mut mm), lo, up, 1e-15 * hi.max(1e-300));
            if fx > best_v {
                best_v = fx;
                best_x = x;
            }
        }
    }
    m[k] = best_x;
    best_v
}

/// Best pool below burdens `b` at level `w`: maximizes the pooling gain
/// over lower burdens `m <= b`, preferring the largest pool among ties.
pub fn pooling_search(model: &LimitModel, burden: &[f64], w: f64) -> PoolSearch {
    let reach_b = model.reach(burden);
    let targets: Vec<usize> = (0..burden.len()).filter(|&k| burden[k].is_finite()).collect();
    let gain = |m: &[f64]| model.pool_gain(&reach_b, m, w).gain;
    let mut best = burden.to_vec();
    let mut best_v = 0.0;
    if targets.is_empty() {
        return PoolSearch { burden: best, stats: model.pool_gain(&reach_b, burden, w) };
    }
    let caps: Vec<f64> = burden.iter().map(|b| if b.is_finite() { b.min(model.s_hi) } else { *b }).collect();
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    // common scaling of all burdens
    for i in 0..SCAN_GRID {
        let t = i as f64 / SCAN_GRID as f64;
        let m: Vec<f64> = caps.iter().map(|b| if b.is_finite() { t * b } else { *b }).collect();
        starts.push((gain(&m), m));
    }
    if targets.len() > 1 {
        for &k in &targets {
            for i in 0..SCAN_GRID {
                let mut m = burden.to_vec();
                m[k] = caps[k] * i as f64 / SCAN_GRID as f64;
                starts.push((gain(&m), m));
            }
        }
    }
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_starts = if targets.len() == 1 { 1 } else { 4 };
    for (_, start) in starts.into_iter().take(n_starts) {
        let mut m = start;
        let mut cur = gain(&m);
        for _ in 0..50 {
            let before = cur;
            for &k in &targets {
                cur = cur.max(refine_coord(model, &reach_b, &mut m, k, caps[k], w, 64));
            }
            if targets.len() == 1 || cur <= before + 1e-17 * model.scale {
                break;
            }
        }
        // largest set among ties
        for &k in &targets {
            let keep = m[k];
            m[k] = 0.0;
            if gain(&m) < cur - 1e-16 * model.scale {
                m[k] = keep;
            }
        }
        cur = gain(&m);
        if cur > best_v {
            best_v = cur;
            best = m;
        }
    }
    let stats = model.pool_gain(&reach_b, &best, w);
    PoolSearch { burden: best, stats }
}

/// One element of a strict piece, with its supporting reaches at the top of
/// the piece.
#[derive(Debug, Clone)]
pub struct StrictElement {
    pub targets: Vec<usize>,
    pub supp: Vec<usize>,
    pub alpha_lo: f64,
    terms: Vec<Term>,
}

/// A stretch of levels `[v_lo, v_hi]` and how burdens and reaches move
/// across it.
#[derive(Debug, Clone)]
pub struct LimitPiece {
    pub kind: SegmentKind,
    /// For pools: whether the pooled types would have differing payoffs
    /// without pooling. A pool over types whose frontier mean is already
    /// constant is flat but not ironed.
    pub ironed: bool,
    pub v_hi: f64,
    pub v_lo: f64,
    pub burden_hi: Vec<f64>,
    pub burden_lo: Vec<f64>,
    pub reach_hi: Vec<f64>,
    pub reach_lo: Vec<f64>,
    pub elements: Vec<StrictElement>,
}

impl LimitPiece {
    fn flat(kind: SegmentKind, v: f64, model: &LimitModel, burden_hi: Vec<f64>, burden_lo: Vec<f64>) -> Self {
        let reach_hi = model.reach(&burden_hi);
        let reach_lo = model.reach(&burden_lo);
        LimitPiece { kind, ironed: false, v_hi: v, v_lo: v, burden_hi, burden_lo, reach_hi, reach_lo, elements: Vec::new() }
    }

    fn strict_value(&self, g: &PiecewiseDensity, el: &StrictElement, alpha: f64) -> f64 {
        mixture_value_fast(g, &el.terms, alpha).unwrap_or(self.v_lo).clamp(self.v_lo, self.v_hi)
    }

    fn type_value(&self, g: &PiecewiseDensity, j: usize, mu: f64) -> Option<f64> {
        if !(mu >= self.reach_lo[j]) {
            return None;
        }
        if self.kind != SegmentKind::Strict || mu >= self.reach_hi[j] {
            return Some(self.v_hi);
        }
        match self.elements.iter().find(|e| e.supp.contains(&j)) {
            Some(e) => Some(self.strict_value(g, e, mu / self.reach_hi[j])),
            None => Some(self.v_hi),
        }
    }

    fn message_value(&self, g: &PiecewiseDensity, k: usize, mu: f64) -> Option<f64> {
        if !(mu >= self.burden_lo[k]) {
            return None;
        }
        if self.kind != SegmentKind::Strict || mu >= self.burden_hi[k] {
            return Some(self.v_hi);
        }
        match self.elements.iter().find(|e| e.targets.contains(&k)) {
            Some(e) => Some(self.strict_value(g, e, mu / self.burden_hi[k])),
            None => Some(self.v_hi),
        }
    }
}

/// Counters describing how the sweep went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepDiagnostics {
    pub steps: usize,
    pub events: usize,
    pub pools: usize,
    pub forced_steps: usize,
}

/// Payoffs of the continuum equilibrium.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    model: LimitModel,
    pieces: Vec<LimitPiece>,
    pub diagnostics: SweepDiagnostics,
}

/// Burden at which state `l` starts to be announced honestly: the cheapest
/// mass no lower type can still imitate.
fn honest_entry(model: &LimitModel, reach: &[f64], l: usize) -> f64 {
    let mut b = 0.0f64;
    for j in 0..model.n_states() {
        let r = model.ratio[j][l];
        if j != l && r.is_finite() {
            b = b.max(reach[j].min(model.s_hi) / r);
        }
    }
    b.min(model.s_hi)
}

struct Sweep<'a> {
    model: &'a LimitModel,
    burden: Vec<f64>,
    reach: Vec<f64>,
    movers: Vec<Mover>,
}

impl<'a> Sweep<'a> {
    fn new(model: &'a LimitModel, burden: &[f64]) -> Result<Self> {
        let part = partition_states(model, burden)?;
        let movers = part.elements.iter().cloned().map(|e| Mover::new(model, e, &part)).collect();
        Ok(Sweep { model, burden: burden.to_vec(), reach: part.reach, movers })
    }

    fn putative(&self, w: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, bool) {
        let mut burden = self.burden.clone();
        let mut reach = self.reach.clone();
        let mut alphas = Vec::with_capacity(self.movers.len());
        let mut floor = false;
        for mv in &self.movers {
            let (a, f) = mv.alpha_at(self.model, w);
            floor |= f;
            for &k in &mv.el.targets {
                burden[k] = a * self.burden[k];
            }
            for &j in &mv.el.supp {
                reach[j] = a * self.reach[j];
            }
            alphas.push(a);
        }
        (burden, reach, alphas, floor)
    }

    fn events(&self, w: f64, check_ties: bool) -> Events {
        let model = self.model;
        let (burden, reach, alphas, floor) = self.putative(w);
        let mut ev = Events { floor, ..Events::default() };
        if check_ties {
            let fresh = model.reach(&burden);
            for j in 0..model.n_states() {
                if fresh[j] < reach[j] * (1.0 - OPT_TOL)
                    && fresh[j] < model.s_hi
                    && model.has_mass_below(reach[j].min(model.s_hi))
                {
                    ev.reach = true;
                }
            }
            for (mv, &a) in self.movers.iter().zip(&alphas) {
                if mv.frozen || mv.el.targets.len() < 2 || a == 1.0 {
                    continue;
                }
                let n = mv.el.targets.len();
                for mask in 1u32..((1u32 << n) - 1) {
                    let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| mv.el.targets[i]).collect();
                    let terms: Vec<Term> = mv
                        .opt
                        .iter()
                        .zip(&mv.terms)
                        .filter(|((_, o), _)| o.iter().any(|k| set.contains(k)))
                        .map(|(_, t)| *t)
                        .collect();
                    if let Some(x) = mixture_value_fast(&model.g, &terms, a) {
                        if x > w + VALUE_TIE * model.scale {
                            ev.subset = true;
                        }
                    }
                }
            }
        }
        let probe = pooling_search(model, &burden, w + POOL_MARGIN * model.scale);
        if probe.stats.gain > 1e-15 * model.scale {
            ev.pool = true;
        }
        ev
    }

    fn strict_piece(&self, v_hi: f64, v_lo: f64) -> (LimitPiece, Vec<f64>) {
        let (burden_lo, reach_lo, alphas, _) = self.putative(v_lo);
        let elements = self
            .movers
            .iter()
            .zip(&alphas)
            .map(|(mv, &a)| StrictElement {
                targets: mv.el.targets.clone(),
                supp: mv.el.supp.clone(),
                alpha_lo: a,
                terms: mv.terms.clone(),
            })
            .collect();
        let piece = LimitPiece {
            kind: SegmentKind::Strict,
            ironed: false,
            v_hi,
            v_lo,
            burden_hi: self.burden.clone(),
            burden_lo: burden_lo.clone(),
            reach_hi: self.reach.clone(),
            reach_lo,
            elements,
        };
        (piece, burden_lo)
    }
}

/// Whether every band of types between `lo` and `hi` along the straight
/// path of burdens has the same frontier mean.
fn flat_between(model: &LimitModel, hi: &[f64], lo: &[f64]) -> bool {
    let mut vals = Vec::new();
    for i in 1..64 {
        let t = i as f64 / 64.0;
        let b: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| if h.is_finite() { l + t * (h - l) } else { *h }).collect();
        let reach = model.reach(&b);
        let states: Vec<usize> = (0..model.n_states()).filter(|&j| reach[j].is_finite()).collect();
        if let Some(x) = mixture_value_fast(&model.g, &model.terms(&states, &reach), 1.0) {
            vals.push(x);
        }
    }
    let lo_v = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    vals.is_empty() || hi_v - lo_v <= 1e-9 * model.scale
}

/// Runs the sweep.
pub fn solve_limit(game: &Game) -> Result<LimitSolution> {
    let model = LimitModel::new(game)?;
    let n = model.n_states();
    let mut pieces: Vec<LimitPiece> = Vec::new();
    let mut diag = SweepDiagnostics::default();
    let mut burden = vec![f64::INFINITY; n];
    let h = if n > 1 { (model.theta[n - 1] - model.theta[n - 2]) / STEPS_PER_GAP } else { 1.0 };
    for l in (0..n).rev() {
        let reach = model.reach(&burden);
        if l == 0 {
            let lo: Vec<f64> = vec![0.0; n];
            pieces.push(LimitPiece::flat(SegmentKind::Honest, model.theta[0], &model, burden.clone(), lo));
            break;
        }
        let mut next = burden.clone();
        next[l] = honest_entry(&model, &reach, l);
        pieces.push(LimitPiece::flat(SegmentKind::Honest, model.theta[l], &model, burden.clone(), next.clone()));
        burden = next;
        let v_end = model.theta[l - 1];
        let mut v = model.theta[l];
        let mut stall = 0usize;
        while v > v_end {
            if model.exhausted(&model.reach(&burden)) {
                break;
            }
            let sweep = Sweep::new(&model, &burden)?;
            let w_try = (v - h).max(v_end);
            diag.steps += 1;
            let check_ties = stall < STALL_LIMIT;
            let ev = sweep.events(w_try, check_ties);
            if !ev.any() {
                let (piece, b) = sweep.strict_piece(v, w_try);
                pieces.push(piece);
                burden = b;
                v = w_try;
                stall = 0;
                continue;
            }
            diag.events += 1;
            let (mut lo, mut hi) = (w_try, v);
            let mut ev_lo = ev;
            while hi - lo > EVENT_WIDTH * model.scale {
                let mid = 0.5 * (lo + hi);
                let e = sweep.events(mid, check_ties);
                if e.any() {
                    lo = mid;
                    ev_lo = e;
                } else {
                    hi = mid;
                }
            }
            if hi < v {
                let (piece, b) = sweep.strict_piece(v, hi);
                pieces.push(piece);
                burden = b;
                v = hi;
                stall = 0;
            } else {
                stall += 1;
            }
            if ev_lo.pool || ev_lo.floor {
                let found = pooling_search(&model, &burden, lo);
                if found.stats.gain > 1e-15 * model.scale && found.stats.mass > 0.0 {
                    let value = found.stats.value().min(v);
                    let mut piece = LimitPiece::flat(SegmentKind::Pool, value, &model, burden.clone(), found.burden.clone());
                    piece.ironed = !flat_between(&model, &burden, &found.burden);
                    pieces.push(piece);
                    burden = found.burden;
                    v = value;
                    diag.pools += 1;
                    stall = 0;
                    continue;
                }
                if ev_lo.floor && !ev_lo.reach && !ev_lo.subset {
                    // the frontier mean only approaches the next state's value
                    if v - v_end <= VALUE_TIE * model.scale {
                        break;
                    }
                    return Err(Error::Solver(alloc::format!("payoff floor at level {v} without a profitable pool")));
                }
            }
            if stall > STALL_LIMIT + 2 {
                // tie events keep firing at the current level: move on
                let w = (v - 1e-9 * model.scale).max(v_end);
                let (piece, b) = sweep.strict_piece(v, w);
                pieces.push(piece);
                burden = b;
                v = w;
                diag.forced_steps += 1;
                stall = 0;
            }
        }
    }
    Ok(LimitSolution { model, pieces, diagnostics: diag })
}

/// Level at which every reach of `burden` stays put: the largest maximizer
/// of the level-set objective, found by a direct global search. Used as an
/// independent check of the sweep. Supports up to two states above `v`.
pub fn level_set_burdens(model: &LimitModel, v: f64) -> Result<Vec<f64>> {
    let n = model.n_states();
    let active: Vec<usize> = (0..n).filter(|&k| model.theta[k] > v).collect();
    let mut m = vec![f64::INFINITY; n];
    let top = model.s_hi;
    match active.len() {
        0 => {}
        1 => {
            let k = active[0];
            let f = |x: f64| {
                let mut b = vec![f64::INFINITY; n];
                b[k] = x;
                model.level_objective(&b, v)
            };
            m[k] = argmax_smallest(f, top, 4000);
        }
        2 => {
            let (k1, k2) = (active[0], active[1]);
            let obj = |x: f64, y: f64| {
                let mut b = vec![f64::INFINITY; n];
                b[k1] = x;
                b[k2] = y;
                model.level_objective(&b, v)
            };
            // nested search: the objective has ridges along reach switches
            let inner = |x: f64| argmax_smallest(|y| obj(x, y), top, 600);
            let profile = |x: f64| obj(x, inner(x));
            let x = argmax_smallest(profile, top, 300);
            m[k1] = x;
            m[k2] = inner(x);
        }
        _ => return Err(Error::Unsupported("level-set search with at most two targets".into())),
    }
    Ok(m)
}

/// Smallest global maximizer of `f` on `[0, top]`.
fn argmax_smallest<F: Fn(f64) -> f64>(f: F, top: f64, grid: usize) -> f64 {
    let xs: Vec<f64> = (0..=grid).map(|i| top * i as f64 / grid as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=grid {
        let peak = (i == 0 || vals[i] >= vals[i - 1]) && (i == grid || vals[i] >= vals[i + 1]);
        if !peak {
            continue;
        }
        let lo = xs[i.saturating_sub(1)];
        let hi = xs[(i + 1).min(grid)];
        let (x, fx) = golden_max(&f, lo, hi, 1e-15);
        let (x, fx) = if vals[i] >= fx { (xs[i], vals[i]) } else { (x, fx) };
        if fx > best.0 + 1e-14 {
            best = (fx, x);
        }
    }
    best.1
}

/// Ordered thresholds of one state: below `low` the payoff is under the
/// state value, below `high` at most the state value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

/// Levels and burdens of the sweep on a grid of payoff levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRow {
    pub v: f64,
    pub burden: Vec<f64>,
    pub reach: Vec<f64>,
}

/// One message in a type's strategy support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitMessage {
    pub target: usize,
    pub mass: f64,
    pub weight: f64,
}

impl LimitSolution {
    pub fn model(&self) -> &LimitModel {
        &self.model
    }

    pub fn pieces(&self) -> &[LimitPiece] {
        &self.pieces
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn type_piece(&self, j: usize, mu: f64) -> Option<(&LimitPiece, f64)> {
        self.pieces.iter().find_map(|p| p.type_value(&self.model.g, j, mu).map(|v| (p, v)))
    }

    /// Equilibrium payoff of type `mu f_j`.
    pub fn type_payoff(&self, j: usize, mu: f64) -> f64 {
        self.type_piece(j, mu).map_or(self.model.theta[0], |(_, v)| v)
    }

    pub fn segment(&self, j: usize, mu: f64) -> SegmentKind {
        match self.type_piece(j, mu) {
            Some((p, _)) if p.kind == SegmentKind::Honest && p.v_hi != self.model.theta[j] => SegmentKind::Pool,
            Some((p, _)) => p.kind,
            None => SegmentKind::Pool,
        }
    }

    /// Receiver's expectation after the message `mu f_k`.
    pub fn message_value(&self, k: usize, mu: f64) -> f64 {
        self.pieces.iter().find_map(|p| p.message_value(&self.model.g, k, mu)).unwrap_or(self.model.theta[0])
    }

    /// Flat pooled stretches.
    pub fn pool_regions(&self) -> Vec<&LimitPiece> {
        self.pieces.iter().filter(|p| p.kind == SegmentKind::Pool).collect()
    }

    /// Pools over types whose payoffs would otherwise differ.
    pub fn ironing_regions(&self) -> Vec<&LimitPiece> {
        self.pieces.iter().filter(|p| p.kind == SegmentKind::Pool && p.ironed).collect()
    }

    /// Smallest mass of `f_k` whose message is worth at least `v`.
    pub fn burden(&self, k: usize, v: f64) -> f64 {
        let top = self.model.s_hi.max(1.0);
        if self.message_value(k, top) < v - 1e-12 * self.model.scale {
            return f64::INFINITY;
        }
        if self.message_value(k, 0.0) >= v - 1e-12 * self.model.scale {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.message_value(k, mid) >= v - 1e-12 * self.model.scale {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn frontier_table(&self, levels: &[f64]) -> Vec<FrontierRow> {
        levels
            .iter()
            .map(|&v| {
                let burden: Vec<f64> = (0..self.n_states()).map(|k| self.burden(k, v)).collect();
                let reach = self.model.reach(&burden);
                FrontierRow { v, burden, reach }
            })
            .collect()
    }

    /// Thresholds of state `j`, assuming its payoff is nondecreasing.
    pub fn thresholds(&self, j: usize) -> Thresholds {
        let th = self.model.theta[j];
        let tol = 1e-12 * self.model.scale;
        let sup = |pred: &dyn Fn(f64) -> bool| {
            if pred(1.0) {
                return 1.0;
            }
            if !pred(0.0) {
                return 0.0;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if pred(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let high = sup(&|mu| self.type_payoff(j, mu) <= th + tol);
        let low = sup(&|mu| self.type_payoff(j, mu) < th - tol);
        Thresholds { low, high }
    }

    /// Targets maximizing the payoff of `mu f_j` among states it can imitate.
    pub fn target_set(&self, j: usize, mu: f64) -> Vec<usize> {
        let vals = self.target_values(j, mu);
        let best = vals.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        vals.into_iter().filter(|x| x.1 >= best - VALUE_TIE * self.model.scale).map(|x| x.0).collect()
    }

    fn target_values(&self, j: usize, mu: f64) -> Vec<(usize, f64)> {
        (0..self.n_states())
            .filter(|&k| self.model.ratio[j][k].is_finite())
            .map(|k| (k, self.message_value(k, mu / self.model.ratio[j][k])))
            .collect()
    }

    /// Equilibrium messages of `mu f_j`: truthful unless imitation pays
    /// strictly more, otherwise uniform over the best targets, each at the
    /// cheapest mass worth the same.
    pub fn strategy(&self, j: usize, mu: f64) -> Vec<LimitMessage> {
        let u = self.type_payoff(j, mu);
        let tol = VALUE_TIE * self.model.scale;
        if u <= self.model.theta[j] + tol {
            return vec![LimitMessage { target: j, mass: mu, weight: 1.0 }];
        }
        let vals = self.target_values(j, mu);
        let best: Vec<(usize, f64)> = vals.into_iter().filter(|&(k, x)| k != j && x >= u - tol).collect();
        if best.is_empty() {
            return vec![LimitMessage { target: j, mass: mu, weight: 1.0 }];
        }
        let w = 1.0 / best.len() as f64;
        best.iter().map(|&(k, x)| LimitMessage { target: k, mass: self.burden(k, x), weight: w }).collect()
    }

    /// `sum_j beta_j E[u_j]` by adaptive Simpson quadrature; equals the prior
    /// mean when the payoffs are consistent.
    pub fn expected_payoff(&self) -> f64 {
        let g = &self.model.g;
        let mut pts = g.breakpoints();
        for j in 0..self.n_states() {
            for p in &self.pieces {
                for x in [p.reach_hi[j], p.reach_lo[j]] {
                    if x.is_finite() && x > g.support_lo() && x < g.support_hi() {
                        pts.push(x);
                    }
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut total = 0.0;
        for j in 0..self.n_states() {
            let f = |x: f64| self.type_payoff(j, x) * g.g(x);
            let mut acc = 0.0;
            for w in pts.windows(2) {
                acc += simpson(&f, w[0], w[1], 1e-12, 30);
            }
            total += self.model.beta[j] * acc;
        }
        total
    }

    /// Sampled payoff curves of every state on `[0, 1]`.
    pub fn curves(&self, grid: usize) -> PayoffCurves {
        let mu: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
        let payoff = (0..self.n_states()).map(|j| mu.iter().map(|&x| self.type_payoff(j, x)).collect()).collect();
        let kind = (0..self.n_states()).map(|j| mu.iter().map(|&x| self.segment(j, x)).collect()).collect();
        PayoffCurves { mu, payoff, kind }
    }
}

/// Payoffs of every state on a grid, with the segment kind of each point.
#[derive(Debug, Clone)]
pub struct PayoffCurves {
    pub mu: Vec<f64>,
    pub payoff: Vec<Vec<f64>>,
    pub kind: Vec<Vec<SegmentKind>>,
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_rec(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, fc: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_rec(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1) + simpson_rec(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::tests::table1;

    #[test]
    fn top_entry_burden() {
        let game = table1(PiecewiseDensity::triangular());
        let sol = solve_limit(&game).unwrap();
        let p = &sol.pieces()[0];
        assert_eq!(p.kind, SegmentKind::Honest);
        assert!((p.burden_lo[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(p.burden_lo[0].is_infinite());
    }

    #[test]
    fn binary_partition_is_single_element() {
        let game = table1(PiecewiseDensity::triangular());
        let model = LimitModel::new(&game).unwrap();
        let part = partition_states(&model, &[f64::INFINITY, 0.5]).unwrap();
        assert_eq!(part.elements.len(), 1);
        assert_eq!(part.elements[0].targets, vec![1]);
        assert_eq!(part.elements[0].supp, vec![0, 1]);
        // rho(0.5) = (4 - 2) / (10 - 6.5)
        let d0 = delta_n(&model, &[1], &[f64::INFINITY, 0.5], 1.0, 0).unwrap();
        assert!((d0 - 2.0 / 3.5).abs() < 1e-14);
    }

    #[test]
    fn inversion_matches_closed_form() {
        let game = table1(PiecewiseDensity::triangular());
        let model = LimitModel::new(&game).unwrap();
        let b = [f64::INFINITY, 0.5];
        let part = partition_states(&model, &b).unwrap();
        let el = &part.elements[0];
        for w in [0.32, 0.35, 0.4, 0.5] {
            // 4 mu / (6 - 5 mu) = w
            let mu = 6.0 * w / (4.0 + 5.0 * w);
            let a = invert_putative(&model, el, &part.reach, w, 0.0);
            assert!((a * 0.5 - mu).abs() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn pool_search_finds_bottom_pool() {
        let game = table1(PiecewiseDensity::triangular());
        let model = LimitModel::new(&game).unwrap();
        let found = pooling_search(&model, &[f64::INFINITY, 0.34], 4.0 / 13.0 - 1e-6);
        assert_eq!(found.burden[1], 0.0);
        assert!(found.stats.gain > 0.0);
        // rho(0.45) = 0.48: nothing below the frontier is worth more
        let none = pooling_search(&model, &[f64::INFINITY, 0.45], 0.48);
        assert!(none.stats.gain <= 1e-15);
    }

    #[test]
    fn simpson_integrates_cubic() {
        let v = simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12, 20);
        assert!((v - 4.0).abs() < 1e-12);
    }
}
