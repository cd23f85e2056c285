//! Left Taylor expansions of frontier-weighted state means.
//!
//! A frontier mixture is the ratio `N(a) / D(a)` with
//! `N(a) = sum_j w_j theta_j tau_j g(a tau_j)` and
//! `D(a) = sum_j w_j tau_j g(a tau_j)`: the mean state among types sitting
//! at mass `a tau_j` under each state `j`. Both the binary ratio and the
//! putative payoffs of the continuum construction are of this form.

use crate::density::PiecewiseDensity;
use crate::num::powi;

/// Highest derivative order used for tie-breaking.
pub const MAX_ORDER: usize = 3;

/// One state's share of a frontier mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub theta: f64,
    pub tau: f64,
}

const FACT: [f64; 8] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

fn usable(t: &Term) -> bool {
    t.tau.is_finite() && t.tau > 0.0 && t.weight > 0.0
}

/// Taylor coefficients `Q_0..Q_3` of `N / D` at `alpha`, built from left
/// derivatives of `g` so that the expansion describes `alpha' <= alpha`.
///
/// When `D` vanishes at `alpha` the leading orders are cancelled first
/// (L'Hopital). Returns `None` when no term has mass immediately to the left.
pub fn quotient_series(g: &PiecewiseDensity, terms: &[Term], alpha: f64) -> Option<[f64; MAX_ORDER + 1]> {
    const K: usize = 2 * MAX_ORDER + 2;
    let mut nc = [0.0f64; K];
    let mut dc = [0.0f64; K];
    let mut scale = [0.0f64; K];
    for t in terms.iter().filter(|t| usable(t)) {
        let x = alpha * t.tau;
        for n in 0..K {
            let tp = powi(t.tau, n as i32 + 1);
            let d = g.g_left_deriv(x, n) * tp / FACT[n];
            dc[n] += t.weight * d;
            nc[n] += t.weight * t.theta * d;
            scale[n] += t.weight * tp * powi(10.0, n as i32);
        }
    }
    let s = (0..=MAX_ORDER).find(|&n| dc[n].abs() > 1e-13 * scale[n])?;
    let mut q = [0.0f64; MAX_ORDER + 1];
    for n in 0..=MAX_ORDER {
        let mut acc = nc[n + s];
        for i in 1..=n {
            acc -= dc[i + s] * q[n - i];
        }
        q[n] = acc / dc[s];
    }
    Some(q)
}

/// Value of the mixture at `alpha` as a left limit.
pub fn mixture_value(g: &PiecewiseDensity, terms: &[Term], alpha: f64) -> Option<f64> {
    quotient_series(g, terms, alpha).map(|q| q[0])
}

/// Same as [`mixture_value`], skipping the series when the density terms
/// are clearly nonzero.
pub fn mixture_value_fast(g: &PiecewiseDensity, terms: &[Term], alpha: f64) -> Option<f64> {
    let (mut n, mut d, mut sc) = (0.0, 0.0, 0.0);
    for t in terms.iter().filter(|t| usable(t)) {
        let x = t.weight * t.tau * g.g(alpha * t.tau);
        d += x;
        n += x * t.theta;
        sc += t.weight * t.tau;
    }
    if d > 1e-13 * sc {
        Some(n / d)
    } else {
        mixture_value(g, terms, alpha)
    }
}

/// `Delta_n`: the n-th left derivative in `alpha` of the mixture value.
pub fn mixture_derivs(g: &PiecewiseDensity, terms: &[Term], alpha: f64) -> Option<[f64; MAX_ORDER + 1]> {
    quotient_series(g, terms, alpha).map(|q| {
        let mut d = q;
        for (n, x) in d.iter_mut().enumerate() {
            *x *= FACT[n];
        }
        d
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(r: f64) -> [Term; 2] {
        [Term { weight: 0.5, theta: 1.0, tau: 1.0 }, Term { weight: 0.5, theta: 0.0, tau: r }]
    }

    #[test]
    fn triangular_ratio_values() {
        let g = PiecewiseDensity::triangular();
        let t = binary(1.5);
        assert!((mixture_value(&g, &t, 0.25).unwrap() - 4.0 / 13.0).abs() < 1e-15);
        assert!((mixture_value(&g, &t, 0.4).unwrap() - 0.4).abs() < 1e-15);
        assert!((mixture_value(&g, &t, 0.7).unwrap() - 1.0).abs() < 1e-15);
        // both densities vanish at 0: limit of the flat branch
        assert!((mixture_value(&g, &t, 0.0).unwrap() - 4.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_closed_form() {
        // 4a / (6 - 5a) has derivative 24 / (6 - 5a)^2
        let g = PiecewiseDensity::triangular();
        let d = mixture_derivs(&g, &binary(1.5), 0.4).unwrap();
        let want = 24.0 / (6.0 - 2.0f64).powi(2);
        assert!((d[1] - want).abs() < 1e-12);
        // second derivative 240 / (6 - 5a)^3
        assert!((d[2] - 240.0 / 64.0).abs() < 1e-11);
    }

    #[test]
    fn single_state_is_constant() {
        let g = PiecewiseDensity::triangular();
        let t = [Term { weight: 0.3, theta: 0.7, tau: 0.9 }];
        let d = mixture_derivs(&g, &t, 0.6).unwrap();
        assert!((d[0] - 0.7).abs() < 1e-15);
        assert!(d[1].abs() < 1e-12 && d[2].abs() < 1e-12);
    }

    #[test]
    fn nothing_to_the_left() {
        let g = PiecewiseDensity::centered_triangle(0.5, 0.5).unwrap();
        assert!(mixture_value(&g, &binary(1.5), 0.1).is_none());
    }
}
