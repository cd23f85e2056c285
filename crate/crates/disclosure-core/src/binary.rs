//! Closed path for games where every sender imitates a single target state.
//!
//! With one target `k`, a message is just a mass `mu` of `f_k`. The types
//! unable to send `mu f_k` have cumulative mass `s(mu) = sum_j b_j G(r_j mu)`
//! and cumulative state-weighted mass `P(mu) = sum_j b_j theta_j G(r_j mu)`,
//! with `r_j = r_j(k)`. The candidate payoff `rho = dP/ds` is the mean state
//! of the types exactly at the boundary; the equilibrium payoff is the slope
//! of the greatest convex minorant of `P` against `s`.

use alloc::vec::Vec;

use crate::density::PiecewiseDensity;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::num::bisect;
use crate::series::{mixture_value, Term};

/// Grid points for locating ironing intervals before refinement.
pub const IRON_GRID: usize = 20_000;

/// A flat stretch `[lo, hi]` of the ironed payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IronInterval {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

/// Payoff to sending `mu f_k` when all senders target state `k`.
#[derive(Debug, Clone)]
pub struct IronedCurve {
    g: PiecewiseDensity,
    terms: Vec<Term>,
    fallback: f64,
    top: f64,
    intervals: Vec<IronInterval>,
}

fn require_binary(game: &Game) -> Result<()> {
    if game.n_states() != 2 {
        return Err(Error::Unsupported("exactly two states".into()));
    }
    Ok(())
}

/// Largest point below which the density still has mass.
pub(crate) fn effective_top(g: &PiecewiseDensity) -> f64 {
    for p in g.pieces().iter().rev() {
        let zero = p.coeffs.iter().all(|c| *c == 0.0);
        if !zero {
            return p.hi;
        }
    }
    g.support_hi()
}

/// `rho(mu)` for a two-state game on the value scale: the mean state of
/// the types who can send at most `mu f_H`. Where both densities vanish the
/// limit from the left is used; above the support the value at the top of
/// the support; otherwise the prior mean.
pub fn rho_binary(mu: f64, game: &Game) -> Result<f64> {
    require_binary(game)?;
    let (g, terms) = single_target_terms(game, 1)?;
    Ok(ratio_at(g, &terms, mu, game.prior_mean()))
}

fn single_target_terms(game: &Game, k: usize) -> Result<(&PiecewiseDensity, Vec<Term>)> {
    let g = game.density()?;
    let terms = (0..game.n_states())
        .map(|j| Term { weight: game.prior(j), theta: game.theta(j), tau: game.imitation_ratio(j, k) })
        .collect();
    Ok((g, terms))
}

fn ratio_at(g: &PiecewiseDensity, terms: &[Term], mu: f64, fallback: f64) -> f64 {
    let top = effective_top(g);
    if let Some(v) = mixture_value(g, terms, mu.min(top)) {
        return v;
    }
    fallback
}

impl IronedCurve {
    /// Un-ironed boundary mean `rho(mu)`.
    pub fn rho(&self, mu: f64) -> f64 {
        ratio_at(&self.g, &self.terms, mu, self.fallback)
    }

    /// Mass of types unable to send `mu f_k`.
    pub fn s(&self, mu: f64) -> f64 {
        self.terms.iter().filter(|t| t.tau.is_finite()).map(|t| t.weight * self.g.cdf(t.tau * mu)).sum::<f64>()
            + self.terms.iter().filter(|t| !t.tau.is_finite()).map(|t| t.weight).sum::<f64>()
    }

    /// State-weighted mass of types unable to send `mu f_k`.
    pub fn p(&self, mu: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| if t.tau.is_finite() { t.weight * t.theta * self.g.cdf(t.tau * mu) } else { t.weight * t.theta })
            .sum()
    }

    /// Mean state of the types that can send `a f_k` but not `b f_k`.
    pub fn pool_value(&self, a: f64, b: f64) -> f64 {
        (self.p(b) - self.p(a)) / (self.s(b) - self.s(a))
    }

    pub fn intervals(&self) -> &[IronInterval] {
        &self.intervals
    }

    /// Top of the mass support; the domain of the curve is `[0, top]`.
    pub fn top(&self) -> f64 {
        self.top
    }

    /// Ironed payoff.
    pub fn eval(&self, mu: f64) -> f64 {
        for iv in &self.intervals {
            if mu >= iv.lo && mu <= iv.hi {
                return iv.value;
            }
        }
        self.rho(mu)
    }
}

/// Ironing intervals of a two-state game (target is the high state).
pub fn gcm_iron(game: &Game) -> Result<IronedCurve> {
    require_binary(game)?;
    iron_single_target(game, 1)
}

/// Ironed payoff when every state targets state `k`.
pub fn iron_single_target(game: &Game, k: usize) -> Result<IronedCurve> {
    let (g, terms) = single_target_terms(game, k)?;
    let top = effective_top(g);
    let mut curve =
        IronedCurve { g: g.clone(), terms, fallback: game.prior_mean(), top, intervals: Vec::new() };
    let mut xs: Vec<f64> = (0..=IRON_GRID).map(|i| top * i as f64 / IRON_GRID as f64).collect();
    for t in &curve.terms {
        if t.tau.is_finite() && t.tau > 0.0 {
            xs.extend(g.breakpoints().iter().map(|b| b / t.tau).filter(|x| *x > 0.0 && *x < top));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let s: Vec<f64> = xs.iter().map(|&x| curve.s(x)).collect();
    let p: Vec<f64> = xs.iter().map(|&x| curve.p(x)).collect();
    let raw = hull_intervals(&s, &p);
    let mut out = Vec::new();
    for (i, j) in raw {
        out.push(refine(&curve, &xs, i, j));
    }
    curve.intervals = out;
    Ok(curve)
}

/// Index pairs `(i, j)` of lower-hull edges of the points `(s, p)` that skip
/// points lying strictly above the chord.
pub fn hull_intervals(s: &[f64], p: &[f64]) -> Vec<(usize, usize)> {
    let n = s.len();
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        if let Some(&last) = hull.last() {
            if s[i] <= s[last] {
                continue;
            }
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (s[b] - s[a]) * (p[i] - p[a]) - (p[b] - p[a]) * (s[i] - s[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let span = p.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut out = Vec::new();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a + 1 {
            continue;
        }
        let slope = (p[b] - p[a]) / (s[b] - s[a]);
        let dev = (a + 1..b).map(|k| p[k] - (p[a] + slope * (s[k] - s[a]))).fold(0.0f64, f64::max);
        if dev > 1e-12 * span {
            out.push((a, b));
        }
    }
    out
}

/// Moves grid endpoints to where the chord is tangent: `rho(a) = rho(b)`
/// equals the pooled mean. Endpoints on the domain boundary stay put.
fn refine(c: &IronedCurve, xs: &[f64], ia: usize, ib: usize) -> IronInterval {
    let last = xs.len() - 1;
    let fixed_a = ia == 0;
    let fixed_b = ib == last;
    let (mut a, mut b) = (xs[ia], xs[ib]);
    let tol = 1e-14;
    match (fixed_a, fixed_b) {
        (true, true) => {}
        (true, false) => {
            let (lo, hi) = window(xs, ib);
            b = bisect(|x| c.rho(x) - c.pool_value(a, x), lo, hi, tol);
        }
        (false, true) => {
            let (lo, hi) = window(xs, ia);
            a = bisect(|x| c.rho(x) - c.pool_value(x, b), lo, hi, tol);
        }
        (false, false) => {
            let (alo, ahi) = window(xs, ia);
            let (blo, bhi) = window(xs, ib);
            let root_a = |v: f64| bisect(|x| c.rho(x) - v, alo, ahi, tol);
            let root_b = |v: f64| bisect(|x| c.rho(x) - v, blo, bhi, tol);
            let h = |v: f64| {
                let (a, b) = (root_a(v), root_b(v));
                (c.p(b) - c.p(a)) - v * (c.s(b) - c.s(a))
            };
            let v_lo = c.rho(alo).max(c.rho(blo));
            let v_hi = c.rho(ahi).min(c.rho(bhi));
            if v_lo < v_hi {
                let v = bisect(h, v_lo, v_hi, 1e-15);
                a = root_a(v);
                b = root_b(v);
            }
        }
    }
    IronInterval { lo: a, hi: b, value: c.pool_value(a, b) }
}

/// A bracket of a few grid cells around index `i`.
fn window(xs: &[f64], i: usize) -> (f64, f64) {
    let lo = i.saturating_sub(3);
    let hi = (i + 3).min(xs.len() - 1);
    (xs[lo], xs[hi])
}

/// Payoff curves of a two-state game.
#[derive(Debug, Clone)]
pub struct BinaryCurves {
    pub high: IronedCurve,
    /// `r_L(H)`.
    pub ratio: f64,
    pub theta_low: f64,
}

impl BinaryCurves {
    /// Payoff of type `mu f_H`.
    pub fn u_high(&self, mu: f64) -> f64 {
        self.high.eval(mu)
    }

    /// Payoff of type `mu f_L`, who sends the largest `f_H`-shaped subset.
    pub fn u_low(&self, mu: f64) -> f64 {
        if self.ratio.is_finite() {
            self.high.eval(mu / self.ratio)
        } else {
            self.theta_low
        }
    }
}

pub fn solve_binary(game: &Game) -> Result<BinaryCurves> {
    let high = gcm_iron(game)?;
    Ok(BinaryCurves { high, ratio: game.imitation_ratio(0, 1), theta_low: game.theta(0) })
}
