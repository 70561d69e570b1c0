#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use henon_lab::{Poly1D, C64};

pub const RM: RoundingMode = RoundingMode::ToEven;
pub const P: usize = 256;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn quad(cst: f64) -> Poly1D {
    Poly1D::from_real(&[cst, 0.0, 1.0]).unwrap()
}

pub fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

pub fn to_f64(x: &BigFloat) -> f64 {
    x.to_string().parse().unwrap()
}

/// ln|x| / 2ⁿ for a BigFloat of arbitrary exponent.
pub fn log_over_pow2(x: &BigFloat, n: u32) -> f64 {
    let mut cc = Consts::new().unwrap();
    let l = x.abs().ln(P, RM, &mut cc);
    let s = BigFloat::from_f64(2f64.powi(n as i32), P);
    to_f64(&l.div(&s, P, RM))
}

/// G_{z²+c}(0) for real c by iterating the critical orbit n times at 256 bits.
pub fn g0_big(cst: f64, n: u32) -> f64 {
    let mut z = big(0.0);
    let cb = big(cst);
    for _ in 0..n {
        z = z.mul(&z, P, RM).add(&cb, P, RM);
    }
    log_over_pow2(&z, n)
}

/// Frozen value of G_{z²−6}(0) from `g0_big(-6.0, 30)`.
pub const G0: f64 = 0.849_462_752_696_550_4;
