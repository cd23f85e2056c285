//! Piecewise-polynomial data-mass densities on `[a, 1]`.
//!
//! Coefficients are in powers of the global coordinate `x`, so a piece with
//! coefficients `[c0, c1, c2]` is `c0 + c1 x + c2 x^2` on its interval.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::num::sqrt;

pub const MAX_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, coeffs: Vec<f64>) -> Self {
        Piece { lo, hi, coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        poly_eval(&self.coeffs, x)
    }

    /// n-th derivative at `x`.
    pub fn deriv(&self, x: f64, n: usize) -> f64 {
        let mut c = self.coeffs.clone();
        for _ in 0..n {
            c = poly_deriv(&c);
        }
        poly_eval(&c, x)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let p = poly_antideriv(&self.coeffs);
        poly_eval(&p, b) - poly_eval(&p, a)
    }

    /// Minimum over the interval, using endpoints and stationary points.
    fn min_value(&self) -> f64 {
        let mut m = self.eval(self.lo).min(self.eval(self.hi));
        let d = poly_deriv(&self.coeffs);
        for r in real_roots(&d) {
            if r > self.lo && r < self.hi {
                m = m.min(self.eval(r));
            }
        }
        m
    }
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &a)| a * i as f64).collect()
}

pub fn poly_antideriv(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(c.iter().enumerate().map(|(i, &a)| a / (i as f64 + 1.0)));
    out
}

/// Real roots of a polynomial of degree at most 2.
fn real_roots(c: &[f64]) -> Vec<f64> {
    let c0 = c.first().copied().unwrap_or(0.0);
    let c1 = c.get(1).copied().unwrap_or(0.0);
    let c2 = c.get(2).copied().unwrap_or(0.0);
    if c2 != 0.0 {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Vec::new();
        }
        let s = sqrt(disc);
        vec![(-c1 - s) / (2.0 * c2), (-c1 + s) / (2.0 * c2)]
    } else if c1 != 0.0 {
        vec![-c0 / c1]
    } else {
        Vec::new()
    }
}

/// A validated density with cached cumulative masses at piece boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    pieces: Vec<Piece>,
    cum: Vec<f64>,
}

impl PiecewiseDensity {
    /// Validates the density invariants: ordered contiguous pieces of degree
    /// at most 3 inside `[0, 1]`, unit mass, continuity at interior
    /// breakpoints, `g >= 0`, and `g(1) = 0`.
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        const F: &str = "mass.density";
        if pieces.is_empty() {
            return Err(invalid(F, "no pieces"));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.coeffs.len() > MAX_DEGREE + 1 {
                return Err(invalid(F, alloc::format!("piece {i} has degree above {MAX_DEGREE}")));
            }
            if !(p.lo < p.hi) || !p.lo.is_finite() || !p.hi.is_finite() {
                return Err(invalid(F, alloc::format!("piece {i} has an empty or invalid interval")));
            }
            if p.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(invalid(F, alloc::format!("piece {i} has non-finite coefficients")));
            }
        }
        if pieces[0].lo < 0.0 || pieces[0].lo >= 1.0 {
            return Err(invalid(F, "support must start in [0, 1)"));
        }
        if pieces.last().unwrap().hi > 1.0 + 1e-12 {
            return Err(invalid(F, "support must end at or before 1"));
        }
        for w in pieces.windows(2) {
            if (w[0].hi - w[1].lo).abs() > 1e-12 {
                return Err(invalid(F, "pieces must be contiguous"));
            }
            let jump = (w[0].eval(w[0].hi) - w[1].eval(w[1].lo)).abs();
            if jump > 1e-10 {
                return Err(invalid(F, alloc::format!("discontinuous at {}", w[0].hi)));
            }
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.min_value() < -1e-12 {
                return Err(invalid(F, alloc::format!("negative on piece {i}")));
            }
        }
        let last = pieces.last().unwrap();
        if last.eval(last.hi).abs() > 1e-10 {
            return Err(invalid(F, "g(1) must be 0"));
        }
        let mut cum = Vec::with_capacity(pieces.len() + 1);
        cum.push(0.0);
        for p in &pieces {
            let c = *cum.last().unwrap() + p.integral(p.lo, p.hi);
            cum.push(c);
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-10 {
            return Err(invalid(F, alloc::format!("integrates to {total}, not 1")));
        }
        Ok(PiecewiseDensity { pieces, cum })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn support_lo(&self) -> f64 {
        self.pieces[0].lo
    }

    pub fn support_hi(&self) -> f64 {
        self.pieces.last().unwrap().hi
    }

    /// Breakpoints including both support ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.lo).collect();
        b.push(self.support_hi());
        b
    }

    /// Index of the piece whose half-open interval `(lo, hi]` holds `x`.
    fn left_piece(&self, x: f64) -> Option<usize> {
        if x <= self.support_lo() || x > self.support_hi() {
            return None;
        }
        let i = self.pieces.partition_point(|p| p.hi < x);
        Some(i.min(self.pieces.len() - 1))
    }

    /// Density value, using the left piece at breakpoints. At the bottom of
    /// the support the right limit is returned.
    pub fn g(&self, x: f64) -> f64 {
        if x == self.support_lo() {
            return self.pieces[0].eval(x);
        }
        match self.left_piece(x) {
            Some(i) => self.pieces[i].eval(x).max(0.0),
            None => 0.0,
        }
    }

    /// n-th left derivative of g at `x`; zero outside the support.
    pub fn g_left_deriv(&self, x: f64, n: usize) -> f64 {
        if n == 0 {
            return self.g(x);
        }
        match self.left_piece(x) {
            Some(i) => self.pieces[i].deriv(x, n),
            None => {
                if x == self.support_lo() {
                    self.pieces[0].deriv(x, n)
                } else {
                    0.0
                }
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support_lo() {
            return 0.0;
        }
        if x >= self.support_hi() {
            return 1.0;
        }
        let i = self.left_piece(x).unwrap();
        let p = &self.pieces[i];
        (self.cum[i] + p.integral(p.lo, x)).clamp(0.0, 1.0)
    }

    /// Mass on `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    /// Mean and variance of the mass distribution.
    pub fn moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for p in &self.pieces {
            let mut x1 = vec![0.0];
            x1.extend_from_slice(&p.coeffs);
            let mut x2 = vec![0.0, 0.0];
            x2.extend_from_slice(&p.coeffs);
            let a1 = poly_antideriv(&x1);
            let a2 = poly_antideriv(&x2);
            m1 += poly_eval(&a1, p.hi) - poly_eval(&a1, p.lo);
            m2 += poly_eval(&a2, p.hi) - poly_eval(&a2, p.lo);
        }
        (m1, m2 - m1 * m1)
    }

    /// `2 - 4|x - 1/2|` on `[0, 1]`.
    pub fn triangular() -> Self {
        Self::centered_triangle(0.5, 1.0).unwrap()
    }

    /// `2 - 8|x - 1/4|` on `[0, 1/2]` and `2 - 8|x - 3/4|` on `(1/2, 1]`.
    pub fn double_peaked() -> Self {
        PiecewiseDensity::new(vec![
            Piece::new(0.0, 0.25, vec![0.0, 8.0]),
            Piece::new(0.25, 0.5, vec![4.0, -8.0]),
            Piece::new(0.5, 0.75, vec![-4.0, 8.0]),
            Piece::new(0.75, 1.0, vec![8.0, -8.0]),
        ])
        .unwrap()
    }

    /// Symmetric triangle with the given centre and base width, padded with
    /// a zero piece up to 1 when the base ends early.
    pub fn centered_triangle(center: f64, width: f64) -> Result<Self> {
        let lo = center - width / 2.0;
        let hi = center + width / 2.0;
        if lo < 0.0 || hi > 1.0 + 1e-15 || width <= 0.0 {
            return Err(invalid("mass.density", "triangle must lie inside [0, 1]"));
        }
        let h = 2.0 / width;
        let s = h / (width / 2.0);
        let mut pieces = vec![
            Piece::new(lo, center, vec![-s * lo, s]),
            Piece::new(center, hi.min(1.0), vec![s * hi, -s]),
        ];
        if hi < 1.0 - 1e-15 {
            pieces.push(Piece::new(hi, 1.0, vec![0.0]));
        }
        PiecewiseDensity::new(pieces)
    }
}
