//! Precision settings and a minimal extended-precision complex type used for
//! pre-escape orbit iteration.

use crate::scalar::C64;
use astro_float::{BigFloat, RoundingMode};
use serde::{Deserialize, Serialize};

const RM: RoundingMode = RoundingMode::ToEven;

/// Arithmetic used for the part of an orbit before it enters the escape region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    /// Binary floating point with the given mantissa width (at least 64 bits).
    Extended { bits: usize },
}

/// Options for Green and Böttcher evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOpts {
    pub max_iter: usize,
    pub tol: f64,
    pub precision: Precision,
}

impl Default for GreenOpts {
    fn default() -> Self {
        GreenOpts {
            max_iter: 2000,
            tol: 1e-14,
            precision: Precision::Double,
        }
    }
}

impl GreenOpts {
    pub fn extended(bits: usize) -> Self {
        GreenOpts {
            precision: Precision::Extended { bits: bits.max(64) },
            ..Default::default()
        }
    }
}

/// Complex number over `BigFloat`.
#[derive(Debug, Clone)]
pub struct BigC {
    pub re: BigFloat,
    pub im: BigFloat,
    p: usize,
}

impl BigC {
    pub fn from_c(z: C64, p: usize) -> Self {
        BigC {
            re: BigFloat::from_f64(z.re, p),
            im: BigFloat::from_f64(z.im, p),
            p,
        }
    }

    pub fn add(&self, o: &BigC) -> BigC {
        BigC {
            re: self.re.add(&o.re, self.p, RM),
            im: self.im.add(&o.im, self.p, RM),
            p: self.p,
        }
    }

    pub fn sub(&self, o: &BigC) -> BigC {
        BigC {
            re: self.re.sub(&o.re, self.p, RM),
            im: self.im.sub(&o.im, self.p, RM),
            p: self.p,
        }
    }

    pub fn mul(&self, o: &BigC) -> BigC {
        let p = self.p;
        let rr = self.re.mul(&o.re, p, RM);
        let ii = self.im.mul(&o.im, p, RM);
        let ri = self.re.mul(&o.im, p, RM);
        let ir = self.im.mul(&o.re, p, RM);
        BigC {
            re: rr.sub(&ii, p, RM),
            im: ri.add(&ir, p, RM),
            p,
        }
    }

    pub fn div(&self, o: &BigC) -> BigC {
        let p = self.p;
        let den = o.re.mul(&o.re, p, RM).add(&o.im.mul(&o.im, p, RM), p, RM);
        let conj = BigC {
            re: o.re.clone(),
            im: o.im.neg(),
            p,
        };
        let num = self.mul(&conj);
        BigC {
            re: num.re.div(&den, p, RM),
            im: num.im.div(&den, p, RM),
            p,
        }
    }

    /// Rounds to the nearest double-precision value.
    pub fn to_c(&self) -> C64 {
        C64::new(big_to_f64(&self.re), big_to_f64(&self.im))
    }

    /// Squared modulus rounded to double (saturates to infinity).
    pub fn norm_sqr_f64(&self) -> f64 {
        let z = self.to_c();
        z.re * z.re + z.im * z.im
    }
}

/// Converts a `BigFloat` to the nearest-below double.
pub fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf() {
        return if x.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    if x.is_zero() {
        return 0.0;
    }
    let (Some(words), Some(e)) = (x.mantissa_digits(), x.exponent()) else {
        return f64::NAN;
    };
    let top = *words.last().unwrap() as u64;
    let next = if words.len() > 1 {
        words[words.len() - 2] as u64
    } else {
        0
    };
    let bits = Word::BITS as i32;
    let m = top as f64 + next as f64 / 2f64.powi(bits);
    let v = m * pow2(e as i32 - bits);
    if x.is_negative() {
        -v
    } else {
        v
    }
}

type Word = astro_float::Word;

fn pow2(k: i32) -> f64 {
    if k > 1023 {
        f64::INFINITY
    } else if k < -1074 {
        0.0
    } else if k < -1022 {
        2f64.powi(-1022) * 2f64.powi(k + 1022)
    } else {
        2f64.powi(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_doubles() {
        for x in [1.0, -3.25, 1e-300, 7.5e200, 0.1, -2.0f64.powi(-40)] {
            let b = BigFloat::from_f64(x, 128);
            assert_eq!(big_to_f64(&b), x);
        }
    }

    #[test]
    fn complex_product() {
        let a = BigC::from_c(C64::new(1.5, -2.0), 128);
        let b = BigC::from_c(C64::new(0.25, 3.0), 128);
        let z = a.mul(&b).sub(&a).add(&b);
        let e = C64::new(1.5, -2.0) * C64::new(0.25, 3.0) - C64::new(1.5, -2.0) + C64::new(0.25, 3.0);
        assert!((z.to_c() - e).norm() < 1e-15);
    }
}
