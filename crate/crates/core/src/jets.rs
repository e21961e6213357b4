//! Second-order truncated jets in a single scalar variable.
//!
//! A [`Jet2`] carries a value together with its first and second derivative
//! with respect to the regression target `y`. Arithmetic on jets propagates
//! both derivatives exactly, so evaluating a network on a seeded `y` yields
//! `f`, `∂f/∂y` and `∂²f/∂y²` in one pass.

use std::ops::{Add, Mul, Neg, Sub};

/// Value, first derivative and second derivative with respect to `y`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    #[inline]
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// Lifts the differentiation variable: `(y, 1, 0)`.
    #[inline]
    pub const fn seed(y: f64) -> Self {
        Self::new(y, 1.0, 0.0)
    }

    /// Lifts a constant: `(c, 0, 0)`.
    #[inline]
    pub const fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }

    #[inline]
    pub fn scale(self, c: f64) -> Self {
        Self::new(self.v * c, self.d1 * c, self.d2 * c)
    }

    /// Chain rule through a scalar function given `g(v)`, `g'(v)`, `g''(v)`.
    #[inline]
    pub fn compose(self, g: f64, g1: f64, g2: f64) -> Self {
        Self::new(g, g1 * self.d1, g1 * self.d2 + g2 * self.d1 * self.d1)
    }

    #[inline]
    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = 1.0 - t * t;
        self.compose(t, s, -2.0 * t * s)
    }

    /// Rectifier with the subgradient `g'(0) = 0` and `g'' = 0` everywhere.
    #[inline]
    pub fn relu(self) -> Self {
        if self.v > 0.0 {
            self
        } else {
            Self::default()
        }
    }

    #[inline]
    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v + rhs.v, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2::new(self.v - rhs.v, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        Jet2::new(-self.v, -self.d1, -self.d2)
    }
}

/// Leibniz rule truncated at second order.
impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2::new(
            self.v * rhs.v,
            self.d1 * rhs.v + self.v * rhs.d1,
            (self.d2 * rhs.v + self.v * rhs.d2) + 2.0 * self.d1 * rhs.d1,
        )
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}
