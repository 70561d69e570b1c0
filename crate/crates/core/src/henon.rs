//! Generalized Hénon maps: compositions of factors (z, w) ↦ (a·w + p(z), a·z).

use crate::error::{LabError, Result};
use crate::poly::{CPoly, Poly1D};
use crate::precision::{BigC, GreenOpts, Precision};
use crate::scalar::{Jet, Scalar, C64};
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A point of ℂ².
pub type Point = [C64; 2];
/// A 2×2 complex matrix, row major.
pub type Mat2 = [[C64; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn mat_det(a: &Mat2) -> C64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// One factor (z, w) ↦ (a·w + p(z), a·z) with p monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HenonFactor {
    pub a: C64,
    pub p: Poly1D,
}

impl HenonFactor {
    pub fn new(a: C64, p: Poly1D) -> Result<Self> {
        if !a.is_finite() {
            return Err(LabError::NonFinite);
        }
        let f = HenonFactor { a, p };
        // determinant of [[p'(z), a], [a, 0]] at an arbitrary point
        let j = mat_det(&f.differential(C64::new(0.37, -0.21)));
        debug_assert!((j - f.jacobian()).norm() <= 1e-14 * (1.0 + j.norm()));
        Ok(f)
    }

    pub fn degree(&self) -> usize {
        self.p.degree()
    }

    pub fn jacobian(&self) -> C64 {
        -self.a * self.a
    }

    #[inline]
    pub fn apply<S: Scalar>(&self, z: S, w: S) -> (S, S) {
        (w.scale(self.a) + self.p.eval(z), z.scale(self.a))
    }

    pub fn inverse(&self, x: Point) -> Result<Point> {
        if self.a == ZERO {
            return Err(LabError::Degenerate("factor with a = 0 has no inverse".into()));
        }
        let u = x[1] / self.a;
        Ok([u, (x[0] - self.p.eval(u)) / self.a])
    }

    pub fn differential(&self, z: C64) -> Mat2 {
        let (_, dp) = self.p.eval_d(z);
        [[dp, self.a], [self.a, ZERO]]
    }

    /// |a| + Σ|non-leading coefficients of p|.
    pub fn coefficient_norm(&self) -> f64 {
        self.a.norm() + self.p.lower_norm()
    }

    /// Radius R with the growth and invariance properties on
    /// {|z| ≥ R, |w| ≤ |z|}: |z′| ≥ |z|^d/2, |z′| ≥ 2|z|, |w′| < |z′|.
    pub fn escape_radius(&self) -> f64 {
        let t = self.coefficient_norm();
        let d = self.degree() as f64;
        let ar = self.a.norm();
        let wedge = (2.0 * ar).powf(1.0 / (d - 1.0)) * (1.0 + 1e-12);
        2f64.max(t + 2.0).max(2.0 * t).max(wedge)
    }

    /// Radius in the w coordinate for the inverse factor on
    /// {|w| ≥ R, |z| ≤ |w|}. Infinite when a = 0.
    pub fn inverse_escape_radius(&self) -> f64 {
        let ar = self.a.norm();
        if ar == 0.0 {
            return f64::INFINITY;
        }
        let t = self.coefficient_norm();
        let d = self.degree() as f64;
        let wedge = (2.0 * ar.max(ar * ar)).powf(1.0 / (d - 1.0)) * (1.0 + 1e-12);
        ar * 2f64.max(t + 2.0).max(2.0 * t).max(wedge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapSpec {
    factors: Vec<HenonFactor>,
}

/// Composition of Hénon factors, applied first to last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpec", into = "MapSpec")]
pub struct HenonMap {
    factors: Vec<HenonFactor>,
    degree: usize,
    jacobian: C64,
}

impl TryFrom<MapSpec> for HenonMap {
    type Error = LabError;
    fn try_from(s: MapSpec) -> Result<Self> {
        HenonMap::new(s.factors)
    }
}

impl From<HenonMap> for MapSpec {
    fn from(m: HenonMap) -> Self {
        MapSpec { factors: m.factors }
    }
}

/// Result of [`HenonMap::induced_polynomial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedPolynomial {
    /// Polynomial parametrization t ↦ (x(t), y(t)) of the image curve M.
    pub curve: [CPoly; 2],
    /// The degree-d polynomial q with f ∘ φ_M = φ_M ∘ q.
    pub q: Poly1D,
    /// Degree of the curve (degree of its first coordinate).
    pub curve_degree: usize,
    /// Index of the factor with a = 0.
    pub degenerate_index: usize,
}

impl InducedPolynomial {
    pub fn curve_point(&self, t: C64) -> Point {
        [self.curve[0].eval(t), self.curve[1].eval(t)]
    }
}

impl HenonMap {
    pub fn new(factors: Vec<HenonFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(LabError::InvalidInput("a map needs at least one factor".into()));
        }
        let degree = factors.iter().map(|f| f.degree()).product();
        let jacobian = factors.iter().map(|f| f.jacobian()).product();
        Ok(HenonMap {
            factors,
            degree,
            jacobian,
        })
    }

    pub fn single(a: C64, p: Poly1D) -> Result<Self> {
        HenonMap::new(vec![HenonFactor::new(a, p)?])
    }

    pub fn factors(&self) -> &[HenonFactor] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn jacobian(&self) -> C64 {
        self.jacobian
    }

    pub fn is_degenerate(&self) -> bool {
        self.factors.iter().any(|f| f.a == ZERO)
    }

    /// The same cyclic composition started at factor `k` (a conjugate map).
    pub fn rotated(&self, k: usize) -> HenonMap {
        let m = self.factors.len();
        let f = (0..m).map(|i| self.factors[(i + k) % m].clone()).collect();
        HenonMap::new(f).expect("nonempty")
    }

    #[inline]
    pub fn forward_s<S: Scalar>(&self, mut z: S, mut w: S) -> (S, S) {
        for f in &self.factors {
            (z, w) = f.apply(z, w);
        }
        (z, w)
    }

    pub fn forward(&self, x: Point) -> Point {
        let (z, w) = self.forward_s(x[0], x[1]);
        [z, w]
    }

    pub fn backward(&self, x: Point) -> Result<Point> {
        if self.is_degenerate() {
            return Err(LabError::Degenerate("backward iteration of a degenerate map".into()));
        }
        let mut y = x;
        for f in self.factors.iter().rev() {
            y = f.inverse(y)?;
        }
        Ok(y)
    }

    pub fn apply(&self, x: Point, dir: Direction) -> Result<Point> {
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(LabError::NonFinite);
        }
        match dir {
            Direction::Forward => Ok(self.forward(x)),
            Direction::Backward => self.backward(x),
        }
    }

    pub fn iterate(&self, x: Point, n: usize) -> Point {
        let mut y = x;
        for _ in 0..n {
            y = self.forward(y);
        }
        y
    }

    /// Chain-rule differential of the composed map at x.
    pub fn differential(&self, x: Point) -> Mat2 {
        let mut m = IDENTITY;
        let (mut z, mut w) = (x[0], x[1]);
        for f in &self.factors {
            m = mat_mul(&f.differential(z), &m);
            (z, w) = f.apply(z, w);
        }
        let _ = w;
        m
    }

    /// Differential of fⁿ at x.
    pub fn differential_n(&self, x: Point, n: usize) -> Mat2 {
        let mut m = IDENTITY;
        let mut y = x;
        for _ in 0..n {
            m = mat_mul(&self.differential(y), &m);
            y = self.forward(y);
        }
        m
    }

    /// Escape radius of V_R⁺ = {|z| ≥ R, |w| ≤ |z|}, the largest factor radius.
    pub fn escape_radius(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.escape_radius())
            .fold(0.0, f64::max)
    }

    /// Radius of V_R⁻ = {|w| ≥ R, |z| ≤ |w|} for the inverse composition.
    pub fn inverse_escape_radius(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.inverse_escape_radius())
            .fold(0.0, f64::max)
    }

    /// Bidisk radius for the filtration: both wedges use it.
    pub fn filtration_radius(&self) -> f64 {
        let r = self.escape_radius();
        let ri = self.inverse_escape_radius();
        if ri.is_finite() {
            r.max(ri)
        } else {
            r
        }
    }

    /// Constant C with |φ⁺(z, w) − z| ≤ C on V_R⁺.
    pub fn bottcher_offset_bound(&self) -> f64 {
        3.0 * self
            .factors
            .iter()
            .map(|f| f.coefficient_norm())
            .fold(0.0, f64::max)
    }

    pub fn in_escape_region(&self, x: Point) -> bool {
        let az = x[0].norm();
        az >= self.escape_radius() && x[1].norm() <= az
    }

    pub fn in_inverse_escape_region(&self, x: Point) -> bool {
        let aw = x[1].norm();
        aw >= self.inverse_escape_radius() && x[0].norm() <= aw
    }

    /// log φ⁺(z, w) for a point of V_R⁺, generic over the scalar type. The
    /// branch is Log z plus a convergent sum of principal logarithms of
    /// ratios within 1/2 of 1. The caller checks the region.
    pub fn log_bottcher_s<S: Scalar>(&self, z: S, w: S) -> S {
        let one = S::from_c(ONE);
        let mut u = one / z;
        let mut v = w * u;
        let mut acc = z.ln();
        let mut scale = 1.0;
        for _ in 0..64 {
            for f in &self.factors {
                let d = f.degree();
                scale /= d as f64;
                let ud1 = u.powu(d as u32 - 1);
                let mut s = S::from_c(ZERO);
                for &c in f.p.coeffs()[..d].iter() {
                    s = (s + S::from_c(c)) * u;
                }
                let r = one + (v * ud1).scale(f.a) + s;
                acc = acc + r.ln().scale(C64::new(scale, 0.0));
                v = ud1.scale(f.a) / r;
                u = ud1 * u / r;
                // later factors are 1 + O(|u|); a single r = 1 says nothing
                if (u.value().norm() + v.value().norm()) * scale < 1e-18 {
                    return acc;
                }
            }
        }
        acc
    }

    /// Böttcher coordinate φ⁺ on V_R⁺.
    pub fn bottcher_plus(&self, x: Point) -> Result<C64> {
        self.check_escape(x)?;
        Ok(self.log_bottcher_s(x[0], x[1]).exp())
    }

    fn check_escape(&self, x: Point) -> Result<()> {
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(LabError::NonFinite);
        }
        if !self.in_escape_region(x) {
            return Err(LabError::OutsideEscapeRegion {
                modulus: x[0].norm(),
                radius: self.escape_radius(),
            });
        }
        Ok(())
    }

    /// Forward iterate until the orbit enters V_R⁺; returns the entry point and
    /// the number of steps, `None` for orbits that stay out for `max_iter` steps.
    fn forward_entry(&self, x: Point, opts: &GreenOpts) -> Result<Option<(Point, usize)>> {
        match opts.precision {
            Precision::Double => {
                let mut y = x;
                for n in 0..=opts.max_iter {
                    if !y[0].is_finite() || !y[1].is_finite() {
                        return Err(LabError::Overflow("forward orbit".into()));
                    }
                    if self.in_escape_region(y) {
                        return Ok(Some((y, n)));
                    }
                    if n < opts.max_iter {
                        y = self.forward(y);
                    }
                }
                Ok(None)
            }
            Precision::Extended { bits } => {
                let bits = bits.max(64);
                let facs = self.big_factors(bits);
                let mut z = BigC::from_c(x[0], bits);
                let mut w = BigC::from_c(x[1], bits);
                for n in 0..=opts.max_iter {
                    let y = [z.to_c(), w.to_c()];
                    if !y[0].is_finite() || !y[1].is_finite() {
                        return Err(LabError::Overflow("forward orbit".into()));
                    }
                    if self.in_escape_region(y) {
                        return Ok(Some((y, n)));
                    }
                    if n < opts.max_iter {
                        for (a, p) in &facs {
                            let mut acc = p.last().unwrap().clone();
                            for c in p.iter().rev().skip(1) {
                                acc = acc.mul(&z).add(c);
                            }
                            let nz = a.mul(&w).add(&acc);
                            w = a.mul(&z);
                            z = nz;
                        }
                    }
                }
                Ok(None)
            }
        }
    }

    fn backward_entry(&self, x: Point, opts: &GreenOpts) -> Result<Option<(Point, usize)>> {
        match opts.precision {
            Precision::Double => {
                let mut y = x;
                for n in 0..=opts.max_iter {
                    if !y[0].is_finite() || !y[1].is_finite() {
                        return Err(LabError::Overflow("backward orbit".into()));
                    }
                    if self.in_inverse_escape_region(y) {
                        return Ok(Some((y, n)));
                    }
                    if n < opts.max_iter {
                        y = self.backward(y)?;
                    }
                }
                Ok(None)
            }
            Precision::Extended { bits } => {
                let bits = bits.max(64);
                let facs = self.big_factors(bits);
                let mut z = BigC::from_c(x[0], bits);
                let mut w = BigC::from_c(x[1], bits);
                for n in 0..=opts.max_iter {
                    let y = [z.to_c(), w.to_c()];
                    if !y[0].is_finite() || !y[1].is_finite() {
                        return Err(LabError::Overflow("backward orbit".into()));
                    }
                    if self.in_inverse_escape_region(y) {
                        return Ok(Some((y, n)));
                    }
                    if n < opts.max_iter {
                        for (a, p) in facs.iter().rev() {
                            let u = w.div(a);
                            let mut acc = p.last().unwrap().clone();
                            for c in p.iter().rev().skip(1) {
                                acc = acc.mul(&u).add(c);
                            }
                            w = z.sub(&acc).div(a);
                            z = u;
                        }
                    }
                }
                Ok(None)
            }
        }
    }

    fn big_factors(&self, bits: usize) -> Vec<(BigC, Vec<BigC>)> {
        self.factors
            .iter()
            .map(|f| {
                (
                    BigC::from_c(f.a, bits),
                    f.p.coeffs().iter().map(|&c| BigC::from_c(c, bits)).collect(),
                )
            })
            .collect()
    }

    /// Green functions G⁺ (forward escape rate) and G⁻ (backward escape rate).
    pub fn green(&self, x: Point, sign: Sign, opts: &GreenOpts) -> Result<f64> {
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(LabError::NonFinite);
        }
        let d = self.degree as f64;
        match sign {
            Sign::Plus => {
                let Some((y, n)) = self.forward_entry(x, opts)? else {
                    return Ok(0.0);
                };
                let g = self.log_bottcher_s(y[0], y[1]).re;
                Ok((g * d.powi(-(n as i32))).max(0.0))
            }
            Sign::Minus => {
                if self.is_degenerate() {
                    return Err(LabError::Degenerate("G⁻ of a degenerate map".into()));
                }
                let Some((y, n)) = self.backward_entry(x, opts)? else {
                    return Ok(0.0);
                };
                let g = self.inverse_log_rate(y);
                Ok((g * d.powi(-(n as i32))).max(0.0))
            }
        }
    }

    pub fn green_plus(&self, x: Point) -> Result<f64> {
        self.green(x, Sign::Plus, &GreenOpts::default())
    }

    pub fn green_minus(&self, x: Point) -> Result<f64> {
        self.green(x, Sign::Minus, &GreenOpts::default())
    }

    /// lim D⁻¹ log|w| along the backward orbit of a point of V_R⁻, computed
    /// with the recursion log|w′| = log|c| + d·log|w| + log|r|, c = −a^{−(d+1)},
    /// in coordinates 1/w and z/w that never overflow.
    fn inverse_log_rate(&self, y: Point) -> f64 {
        let mut iw = 1.0 / y[1];
        let mut v = y[0] * iw;
        let mut acc = y[1].norm().ln();
        let mut scale = 1.0;
        for _ in 0..64 {
            for f in self.factors.iter().rev() {
                let d = f.degree();
                let a = f.a;
                let c = -a.powi(-(d as i32 + 1));
                let t = a * iw;
                let mut s = ZERO;
                for &cj in f.p.coeffs()[..d].iter() {
                    s = (s + cj) * t;
                }
                let r = ONE + s - v * a.powu(d as u32) * iw.powu(d as u32 - 1);
                scale /= d as f64;
                acc += scale * (c.norm().ln() + r.norm().ln());
                let iwd = iw.powu(d as u32);
                let nv = iw.powu(d as u32 - 1) / (a * c * r);
                iw = iwd / (c * r);
                v = nv;
            }
        }
        acc
    }

    /// π₁,λ: the point ζ with φ⁺(ζ, 0) = φ⁺(x).
    pub fn fiber_projection(&self, x: Point) -> Result<C64> {
        self.check_escape(x)?;
        if self.factors[0].a == ZERO {
            // the map factors through (z, w) ↦ z
            return Ok(x[0]);
        }
        let target = self.log_bottcher_s(x[0], x[1]);
        self.axis_preimage_log(target, target.exp())
    }

    /// Solves log φ⁺(ζ, 0) = target (mod 2πi) by Newton from `start`.
    pub fn axis_preimage_log(&self, target: C64, start: C64) -> Result<C64> {
        let r = self.escape_radius();
        let phi_t = target.exp();
        let mut zeta = start;
        for _ in 0..50 {
            if !zeta.is_finite() || zeta.norm() < r {
                break;
            }
            let j = self.log_bottcher_s(Jet::variable(zeta), Jet::constant(ZERO));
            // Newton on φ(ζ) − φ_t written multiplicatively for scale invariance
            let phi = j.v.exp();
            let dphi = phi * j.d1;
            let step = (phi - phi_t) / dphi;
            zeta -= step;
            if step.norm() <= 1e-15 * zeta.norm() {
                return Ok(zeta);
            }
        }
        Err(LabError::NoConvergence {
            what: "fiber projection Newton".into(),
            iterations: 50,
        })
    }

    /// The degree-d polynomial induced on the image curve of a map with exactly
    /// one factor of zero Jacobian.
    pub fn induced_polynomial(&self) -> Result<InducedPolynomial> {
        let zeros: Vec<usize> = (0..self.factors.len())
            .filter(|&i| self.factors[i].a == ZERO)
            .collect();
        if zeros.len() != 1 {
            return Err(LabError::InvalidInput(format!(
                "induced polynomial needs exactly one degenerate factor, found {}",
                zeros.len()
            )));
        }
        let i0 = zeros[0];
        let sym = |z: CPoly, w: CPoly, fs: &[HenonFactor]| -> (CPoly, CPoly) {
            let (mut z, mut w) = (z, w);
            for f in fs {
                let nz = w.scale(f.a).add(&f.p.as_cpoly().compose(&z));
                w = z.scale(f.a);
                z = nz;
            }
            (z, w)
        };
        let (mx, my) = sym(
            CPoly::identity(),
            CPoly::constant(ZERO),
            &self.factors[i0 + 1..],
        );
        let (bx, _) = sym(mx.clone(), my.clone(), &self.factors[..i0]);
        let qc = self.factors[i0].p.as_cpoly().compose(&bx);
        let q = Poly1D::new(qc.coeffs)?;
        if q.degree() != self.degree {
            return Err(LabError::Anomaly(format!(
                "induced polynomial has degree {} instead of {}",
                q.degree(),
                self.degree
            )));
        }
        let ind = InducedPolynomial {
            curve_degree: mx.degree(),
            curve: [mx, my],
            q,
            degenerate_index: i0,
        };
        check_curve_injective(&ind)?;
        Ok(ind)
    }
}

/// Detects a singular image curve: a generic point must have a single
/// parameter, and a generic fiber point must have d distinct q-preimages.
fn check_curve_injective(ind: &InducedPolynomial) -> Result<()> {
    let t0 = C64::new(0.6180339887, 0.3819660113);
    let pt = ind.curve_point(t0);
    let mut eq = ind.curve[0].clone();
    eq.coeffs[0] -= pt[0];
    let scale = 1.0 + pt[0].norm() + pt[1].norm();
    let mut hits = 0;
    for t in eq.roots()? {
        if (ind.curve[1].eval(t) - pt[1]).norm() < 1e-7 * scale {
            hits += 1;
        }
    }
    if hits != 1 {
        return Err(LabError::Anomaly(format!(
            "image curve is not injective: {hits} parameters map to one point"
        )));
    }
    let y = ind.q.eval(t0);
    let pre = ind.q.preimages(y)?;
    let distinct = crate::poly::cluster_roots(&pre, 1e-7).len();
    if distinct != ind.q.degree() {
        return Err(LabError::Anomaly(format!(
            "generic fiber has {distinct} preimages instead of {}",
            ind.q.degree()
        )));
    }
    Ok(())
}

/// A factor whose `a` and coefficients of `p` are polynomials in a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFamily {
    pub a: CPoly,
    pub p: Vec<CPoly>,
}

/// A holomorphic family of Hénon maps, polynomial in one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFamily {
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub factors: Vec<FactorFamily>,
}

fn default_parameter() -> String {
    "b".into()
}

impl MapFamily {
    /// Single factor (b·w + p(z), b·z).
    pub fn degeneration(p: &Poly1D) -> Self {
        MapFamily {
            parameter: "b".into(),
            factors: vec![FactorFamily {
                a: CPoly::identity(),
                p: p.coeffs().iter().map(|&c| CPoly::constant(c)).collect(),
            }],
        }
    }

    /// Single factor (λ·w + z² + c(λ), λ·z) for fixed c: the Jacobian family.
    pub fn jacobian_family(p: &Poly1D) -> Self {
        let mut f = MapFamily::degeneration(p);
        f.parameter = "a".into();
        f
    }

    /// Single factor (a·w + z² + λ, a·z) with a fixed: the constant-term family.
    pub fn quadratic_constant_family(a: C64) -> Self {
        MapFamily {
            parameter: "c".into(),
            factors: vec![FactorFamily {
                a: CPoly::constant(a),
                p: vec![CPoly::identity(), CPoly::constant(ZERO), CPoly::constant(ONE)],
            }],
        }
    }

    pub fn at(&self, b: C64) -> Result<HenonMap> {
        let mut fs = Vec::with_capacity(self.factors.len());
        for f in &self.factors {
            let coeffs: Vec<C64> = f.p.iter().map(|c| c.eval(b)).collect();
            fs.push(HenonFactor::new(f.a.eval(b), Poly1D::new(coeffs)?)?);
        }
        HenonMap::new(fs)
    }
}

/// A family f_b with f_0 = (p(z), 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneratingFamily {
    pub base_poly: Poly1D,
    pub family: MapFamily,
}

impl DegeneratingFamily {
    pub fn new(base_poly: Poly1D, family: MapFamily) -> Result<Self> {
        let f0 = family.at(ZERO)?;
        let ok = f0.factors().len() == 1
            && f0.factors()[0].a == ZERO
            && f0.factors()[0].p == base_poly;
        if !ok {
            return Err(LabError::InvalidInput(
                "family at b = 0 must be the single factor (p(z), 0)".into(),
            ));
        }
        for f in &family.factors {
            if f.p.len() != base_poly.degree() + 1 {
                return Err(LabError::InvalidInput(
                    "residual terms must have degree below d".into(),
                ));
            }
        }
        Ok(DegeneratingFamily { base_poly, family })
    }

    pub fn standard(p: &Poly1D) -> Self {
        DegeneratingFamily {
            base_poly: p.clone(),
            family: MapFamily::degeneration(p),
        }
    }

    pub fn at(&self, b: C64) -> Result<HenonMap> {
        self.family.at(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn quad(a: f64, cst: f64) -> HenonMap {
        HenonMap::single(c(a, 0.0), Poly1D::from_real(&[cst, 0.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn apply_single_factor() {
        let f = quad(1.0, 0.0);
        let y = f.apply([c(1.0, 0.0), c(1.0, 0.0)], Direction::Forward).unwrap();
        assert_eq!(y, [c(2.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn forward_backward_identity() {
        let f = quad(0.3, 0.0);
        let x = [c(2.0, 0.0), c(-1.0, 0.0)];
        let y = f.apply(f.apply(x, Direction::Forward).unwrap(), Direction::Backward).unwrap();
        assert!((y[0] - x[0]).norm() < 1e-12 && (y[1] - x[1]).norm() < 1e-12);
    }

    #[test]
    fn backward_rejected_when_degenerate() {
        let f = quad(0.0, 0.0);
        assert!(f.apply([c(1.0, 0.0), ZERO], Direction::Backward).is_err());
        assert!(f.green([c(3.0, 0.0), ZERO], Sign::Minus, &GreenOpts::default()).is_err());
    }

    #[test]
    fn differential_direct_formula() {
        let f = quad(0.3, 0.0);
        let m = f.differential([c(0.91, 0.0), c(0.5, 0.2)]);
        assert!((m[0][0] - c(1.82, 0.0)).norm() < 1e-14);
        assert_eq!(m[0][1], c(0.3, 0.0));
        assert_eq!(m[1][0], c(0.3, 0.0));
        assert_eq!(m[1][1], ZERO);
    }

    #[test]
    fn escape_radius_examples() {
        assert_eq!(quad(0.0, 0.0).escape_radius(), 2.0);
        let r = quad(0.3, 0.0).escape_radius();
        assert!(r <= 2.3 + 1e-12);
    }

    #[test]
    fn escape_radius_inequalities_on_grid() {
        for (a, cst) in [(0.3, 0.0), (0.2, -6.0), (0.05, -1.0), (1.5, 0.5)] {
            let f = quad(a, cst);
            let r = f.escape_radius();
            for i in 0..100 {
                for j in 0..100 {
                    let z = C64::from_polar(r, 2.0 * std::f64::consts::PI * i as f64 / 100.0);
                    let w = C64::from_polar(r * j as f64 / 99.0, 0.7 * j as f64);
                    let y = f.forward([z, w]);
                    assert!(y[0].norm() >= z.norm().powi(2) / 2.0 * (1.0 - 1e-12));
                    assert!(y[0].norm() >= 2.0 * z.norm() * (1.0 - 1e-12));
                    assert!(y[1].norm() <= y[0].norm());
                }
            }
        }
    }

    #[test]
    fn escape_radius_monotone_in_a() {
        let mut last = 0.0;
        for k in 0..40 {
            let r = quad(k as f64 * 0.1, -1.0).escape_radius();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn degenerate_green_and_bottcher() {
        let f = quad(0.0, 0.0);
        let g = f.green_plus([c(3.0, 0.0), c(17.0, 0.0)]).unwrap();
        assert!((g - 3f64.ln()).abs() < 1e-14);
        let phi = f.bottcher_plus([c(3.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!((phi - c(3.0, 0.0)).norm() < 1e-14);
        assert_eq!(f.fiber_projection([c(5.0, 0.0), c(2.0, 0.0)]).unwrap(), c(5.0, 0.0));
    }

    #[test]
    fn bounded_orbits_have_zero_green() {
        let f = quad(0.3, 0.0);
        let x = [ZERO, ZERO];
        assert_eq!(f.green_plus(x).unwrap(), 0.0);
        assert_eq!(f.green_minus(x).unwrap(), 0.0);
    }

    #[test]
    fn bottcher_offset_bound_on_wedge_boundary() {
        let f = quad(0.3, 0.0);
        let r = f.escape_radius() * (1.0 + 1e-12);
        let cb = f.bottcher_offset_bound();
        for i in 0..64 {
            for j in 0..8 {
                let z = C64::from_polar(r, i as f64 * 0.098);
                let w = C64::from_polar(r * j as f64 / 7.0 * (1.0 - 1e-12), j as f64);
                let phi = f.bottcher_plus([z, w]).unwrap();
                assert!((phi - z).norm() < cb);
            }
        }
        assert!(f.bottcher_plus([c(1.0, 0.0), ZERO]).is_err());
    }

    #[test]
    fn fiber_projection_fixes_axis() {
        let f = quad(0.1, 0.0);
        let r = f.escape_radius();
        for th in [0.0, 1.0, 2.5, 4.0] {
            let zeta = C64::from_polar(r * 1.3, th);
            let z = f.fiber_projection([zeta, ZERO]).unwrap();
            assert!((z - zeta).norm() < 1e-10);
        }
    }

    #[test]
    fn extended_green_matches_double() {
        let f = quad(0.3, -6.0);
        for x in [[c(4.0, 0.0), ZERO], [c(0.5, 0.1), c(-0.2, 0.3)]] {
            let g1 = f.green(x, Sign::Plus, &GreenOpts::default()).unwrap();
            let g2 = f.green(x, Sign::Plus, &GreenOpts::extended(160)).unwrap();
            assert!((g1 - g2).abs() < 1e-12);
            let h1 = f.green(x, Sign::Minus, &GreenOpts::default()).unwrap();
            let h2 = f.green(x, Sign::Minus, &GreenOpts::extended(160)).unwrap();
            assert!((h1 - h2).abs() < 1e-12);
        }
    }

    #[test]
    fn induced_polynomial_single_degenerate_factor() {
        let p = Poly1D::from_real(&[-1.0, 0.5, 1.0]).unwrap();
        let f = HenonMap::single(ZERO, p.clone()).unwrap();
        let ind = f.induced_polynomial().unwrap();
        assert_eq!(ind.q, p);
        assert_eq!(ind.curve_degree, 1);
        assert!(quad(0.2, 0.0).induced_polynomial().is_err());
    }

    #[test]
    fn serde_map_format() {
        let f = quad(0.3, -6.0);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"factors":[{"a":[0.3,0.0],"p":[[-6.0,0.0],[0.0,0.0],[1.0,0.0]]}]}"#
        );
        let back: HenonMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn family_evaluation() {
        let p = Poly1D::from_real(&[-6.0, 0.0, 1.0]).unwrap();
        let fam = DegeneratingFamily::standard(&p);
        assert_eq!(fam.at(c(0.3, 0.0)).unwrap(), quad(0.3, -6.0));
        assert!(fam.at(ZERO).unwrap().is_degenerate());
        let json = serde_json::to_string(&fam.family).unwrap();
        let back: MapFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fam.family);
        assert!(DegeneratingFamily::new(p, MapFamily::quadratic_constant_family(c(0.2, 0.0))).is_err());
    }

    fn arb_map() -> impl Strategy<Value = HenonMap> {
        (0.05f64..0.9, -3.0f64..3.0, -1.0f64..1.0, 0.05f64..0.9, 0.0f64..6.28, any::<bool>()).prop_map(
            |(a1, c1, ci, a2, th, two)| {
                let f1 = HenonFactor::new(c(a1, 0.0), Poly1D::quadratic(c(c1, ci))).unwrap();
                let mut fs = vec![f1];
                if two {
                    let p2 = Poly1D::new(vec![c(0.1, 0.2), c(0.5, 0.0), ZERO, ONE]).unwrap();
                    fs.push(HenonFactor::new(C64::from_polar(a2, th), p2).unwrap());
                }
                HenonMap::new(fs).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn determinant_is_constant(f in arb_map(), zr in -2.0f64..2.0, zi in -2.0f64..2.0,
                                   wr in -2.0f64..2.0, wi in -2.0f64..2.0) {
            let m = f.differential([c(zr, zi), c(wr, wi)]);
            let det = mat_det(&m);
            prop_assert!((det - f.jacobian()).norm() <= 1e-10 * f.jacobian().norm());
        }

        #[test]
        fn inverse_round_trip(f in arb_map(), zr in -2.0f64..2.0, zi in -2.0f64..2.0,
                              wr in -2.0f64..2.0, wi in -2.0f64..2.0) {
            let x = [c(zr, zi), c(wr, wi)];
            let y = f.backward(f.forward(x)).unwrap();
            let s = 1.0 + x[0].norm() + x[1].norm();
            prop_assert!((y[0] - x[0]).norm() + (y[1] - x[1]).norm() <= 1e-12 * s * 1e3);
        }

        #[test]
        fn green_functional_equations(f in arb_map(), r in 1.0f64..8.0, th in 0.0f64..6.28,
                                      s in 0.0f64..1.5, ph in 0.0f64..6.28) {
            let x = [C64::from_polar(r, th), C64::from_polar(s, ph)];
            let d = f.degree() as f64;
            let g = f.green_plus(x).unwrap();
            prop_assume!(g > 1e-3);
            let g1 = f.green_plus(f.forward(x)).unwrap();
            prop_assert!((g1 - d * g).abs() <= 1e-8 * g1);
            let y = [C64::from_polar(s, ph), C64::from_polar(r, th)];
            let h = f.green_minus(y).unwrap();
            prop_assume!(h > 1e-3);
            let h1 = f.green_minus(f.backward(y).unwrap()).unwrap();
            prop_assert!((h1 - d * h).abs() <= 1e-8 * h1);
        }

        #[test]
        fn bottcher_functional_equation(f in arb_map(), extra in 0.0f64..10.0, th in 0.0f64..6.28,
                                        s in 0.0f64..1.0, ph in 0.0f64..6.28) {
            let r = f.escape_radius() + extra;
            let x = [C64::from_polar(r, th), C64::from_polar(r * s, ph)];
            let phi = f.bottcher_plus(x).unwrap();
            let phi1 = f.bottcher_plus(f.forward(x)).unwrap();
            let dpow = phi.powu(f.degree() as u32);
            prop_assert!((phi1 - dpow).norm() <= 1e-8 * phi1.norm());
            let g = f.green_plus(x).unwrap();
            prop_assert!((phi.norm().ln() - g).abs() <= 1e-8 * g);
        }

        #[test]
        fn fiber_projection_constant_on_fibers(a in 0.02f64..0.5, cst in -3.0f64..1.0,
                                               extra in 1.0f64..6.0, th in 0.0f64..6.28,
                                               s in 0.0f64..1.0, ph in 0.0f64..6.28) {
            let f = quad(a, cst);
            let r = f.escape_radius() + extra;
            let x = [C64::from_polar(r, th), C64::from_polar(r * s, ph)];
            let zeta = f.fiber_projection(x).unwrap();
            let phi = f.bottcher_plus(x).unwrap();
            let phi_axis = f.bottcher_plus([zeta, ZERO]).unwrap();
            prop_assert!((phi - phi_axis).norm() <= 1e-10 * phi.norm());
            // a second point on the same fiber: the axis point itself
            let z2 = f.fiber_projection([zeta, ZERO]).unwrap();
            prop_assert!((z2 - zeta).norm() < 1e-8);
        }
    }
}
