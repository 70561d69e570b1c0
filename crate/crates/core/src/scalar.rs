//! Scalar abstraction shared by plain complex evaluation and forward-mode jets.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub type C64 = Complex64;

/// A field element that polynomial and map evaluation can run over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_c(c: C64) -> Self;
    fn value(&self) -> C64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;

    fn scale(self, c: C64) -> Self {
        self * Self::from_c(c)
    }

    fn powu(self, k: u32) -> Self {
        let mut acc = Self::from_c(C64::new(1.0, 0.0));
        let mut base = self;
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl Scalar for C64 {
    #[inline]
    fn from_c(c: C64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> C64 {
        *self
    }
    #[inline]
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    #[inline]
    fn scale(self, c: C64) -> Self {
        self * c
    }
}

/// Second-order jet of a holomorphic function of one variable: (f, f', f'').
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: C64,
    pub d1: C64,
    pub d2: C64,
}

impl Jet {
    pub const fn new(v: C64, d1: C64, d2: C64) -> Self {
        Jet { v, d1, d2 }
    }

    pub fn constant(v: C64) -> Self {
        Jet::new(v, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// The identity jet at `t`.
    pub fn variable(t: C64) -> Self {
        Jet::new(t, C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Jet::new(e, e * self.d1, e * (self.d2 + self.d1 * self.d1))
    }

    /// Principal logarithm.
    pub fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        Jet::new(
            self.v.ln(),
            self.d1 * inv,
            self.d2 * inv - self.d1 * self.d1 * inv * inv,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let q1 = (self.d1 - q * o.d1) * inv;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) * inv;
        Jet::new(q, q1, q2)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Scalar for Jet {
    #[inline]
    fn from_c(c: C64) -> Self {
        Jet::constant(c)
    }
    #[inline]
    fn value(&self) -> C64 {
        self.v
    }
    #[inline]
    fn ln(self) -> Self {
        Jet::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Jet::exp(self)
    }
    #[inline]
    fn scale(self, c: C64) -> Self {
        Jet::new(self.v * c, self.d1 * c, self.d2 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(C64) -> C64, t: C64) -> (C64, C64) {
        let h = 1e-4;
        let d1 = (f(t + h) - f(t - h)) / (2.0 * h);
        let d2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn jet_matches_finite_differences() {
        let t = C64::new(0.7, -0.3);
        let f_c = |t: C64| ((t * t + 1.0) / (t - 3.0)).exp() * (t + 2.0).ln();
        let x = Jet::variable(t);
        let one = Jet::constant(C64::new(1.0, 0.0));
        let j = ((x * x + one) / (x - Jet::constant(C64::new(3.0, 0.0)))).exp()
            * (x + Jet::constant(C64::new(2.0, 0.0))).ln();
        let (d1, d2) = fd(f_c, t);
        assert!((j.v - f_c(t)).norm() < 1e-14);
        assert!((j.d1 - d1).norm() < 1e-7);
        assert!((j.d2 - d2).norm() < 1e-5);
    }
}
