//! Complex polynomials: a general coefficient vector type and the monic
//! `Poly1D` used as the dynamical object.

use crate::error::{LabError, Result};
use crate::scalar::{Scalar, C64};
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Polynomial with complex coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<C64>", into = "Vec<C64>")]
pub struct CPoly {
    pub coeffs: Vec<C64>,
}

impl From<Vec<C64>> for CPoly {
    fn from(c: Vec<C64>) -> Self {
        CPoly::new(c)
    }
}

impl From<CPoly> for Vec<C64> {
    fn from(p: CPoly) -> Self {
        p.coeffs
    }
}

impl CPoly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == ZERO {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        CPoly { coeffs }
    }

    pub fn constant(c: C64) -> Self {
        CPoly { coeffs: vec![c] }
    }

    /// The identity polynomial t.
    pub fn identity() -> Self {
        CPoly { coeffs: vec![ZERO, ONE] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == ZERO
    }

    pub fn leading(&self) -> C64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval<S: Scalar>(&self, z: S) -> S {
        let mut acc = S::from_c(self.leading());
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = acc * z + S::from_c(c);
        }
        acc
    }

    pub fn derivative(&self) -> CPoly {
        if self.coeffs.len() == 1 {
            return CPoly::constant(ZERO);
        }
        CPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| c * j as f64)
                .collect(),
        )
    }

    pub fn add(&self, o: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let mut out = vec![ZERO; n];
        for (j, &c) in self.coeffs.iter().enumerate() {
            out[j] += c;
        }
        for (j, &c) in o.coeffs.iter().enumerate() {
            out[j] += c;
        }
        CPoly::new(out)
    }

    pub fn sub(&self, o: &CPoly) -> CPoly {
        self.add(&o.scale(-ONE))
    }

    pub fn scale(&self, s: C64) -> CPoly {
        CPoly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, o: &CPoly) -> CPoly {
        let mut out = vec![ZERO; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPoly::new(out)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &CPoly) -> CPoly {
        let mut acc = CPoly::constant(self.leading());
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = acc.mul(inner).add(&CPoly::constant(c));
        }
        acc
    }

    /// All complex roots (with repetition), see [`roots`].
    pub fn roots(&self) -> Result<Vec<C64>> {
        roots(&self.coeffs)
    }
}

/// Monic polynomial of degree at least two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct Poly1D {
    coeffs: Vec<C64>,
}

impl TryFrom<Vec<C64>> for Poly1D {
    type Error = LabError;
    fn try_from(v: Vec<C64>) -> Result<Self> {
        Poly1D::new(v)
    }
}

impl From<Poly1D> for Vec<C64> {
    fn from(p: Poly1D) -> Self {
        p.coeffs
    }
}

impl Poly1D {
    /// Builds a polynomial from coefficients (lowest degree first). Trailing
    /// zeros are dropped; the result must be monic of degree ≥ 2.
    pub fn new(mut coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LabError::NonFinite);
        }
        while coeffs.len() > 1 && *coeffs.last().unwrap() == ZERO {
            coeffs.pop();
        }
        if coeffs.len() < 3 {
            return Err(LabError::InvalidInput(format!(
                "polynomial degree must be at least 2, got {}",
                coeffs.len().saturating_sub(1)
            )));
        }
        let lead = *coeffs.last().unwrap();
        if (lead - ONE).norm() > 1e-12 {
            return Err(LabError::InvalidInput(format!(
                "polynomial must be monic, leading coefficient is {lead}"
            )));
        }
        *coeffs.last_mut().unwrap() = ONE;
        Ok(Poly1D { coeffs })
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        Poly1D::new(coeffs.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// `z^d + c`.
    pub fn unicritical(d: usize, c: C64) -> Result<Self> {
        let mut v = vec![ZERO; d + 1];
        v[0] = c;
        v[d] = ONE;
        Poly1D::new(v)
    }

    /// `z² + c`.
    pub fn quadratic(c: C64) -> Self {
        Poly1D { coeffs: vec![c, ZERO, ONE] }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn as_cpoly(&self) -> CPoly {
        CPoly { coeffs: self.coeffs.clone() }
    }

    pub fn eval<S: Scalar>(&self, z: S) -> S {
        let mut acc = S::from_c(ONE);
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = acc * z + S::from_c(c);
        }
        acc
    }

    /// Value and first derivative.
    pub fn eval_d(&self, z: C64) -> (C64, C64) {
        let mut p = ONE;
        let mut dp = ZERO;
        for &c in self.coeffs.iter().rev().skip(1) {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> CPoly {
        self.as_cpoly().derivative()
    }

    /// Sum of moduli of all coefficients except the leading one.
    pub fn lower_norm(&self) -> f64 {
        self.coeffs[..self.degree()].iter().map(|c| c.norm()).sum()
    }

    /// Escape radius `max(2, 1 + Σ|c_j|)` over the non-leading coefficients.
    pub fn escape_radius(&self) -> f64 {
        (1.0 + self.lower_norm()).max(2.0)
    }

    /// `self ∘ inner`, again monic of degree `deg(self)·deg(inner)`.
    pub fn compose(&self, inner: &Poly1D) -> Poly1D {
        let c = self.as_cpoly().compose(&inner.as_cpoly());
        Poly1D { coeffs: c.coeffs }
    }

    /// Critical points with multiplicities (roots of p′ clustered).
    pub fn critical_points(&self) -> Result<Vec<(C64, usize)>> {
        let dp = self.derivative();
        let d = self.degree() as f64;
        let monic: Vec<C64> = dp.coeffs.iter().map(|&c| c / d).collect();
        let r = roots(&monic)?;
        let scale = 1.0 + self.lower_norm();
        Ok(cluster_roots(&r, 1e-5 * scale))
    }

    /// The d solutions of p(z) = y.
    pub fn preimages(&self, y: C64) -> Result<Vec<C64>> {
        if !y.is_finite() {
            return Err(LabError::NonFinite);
        }
        if self.degree() == 2 {
            let b = self.coeffs[1];
            let c = self.coeffs[0] - y;
            let disc = (b * b - 4.0 * c).sqrt();
            // avoid cancellation: pick the larger-magnitude root first
            let q = if (-b + disc).norm() >= (-b - disc).norm() {
                (-b + disc) * 0.5
            } else {
                (-b - disc) * 0.5
            };
            let r2 = if q.norm() > 0.0 { c / q } else { -b - q };
            return Ok(vec![q, r2]);
        }
        let mut v = self.coeffs.clone();
        v[0] -= y;
        roots(&v)
    }
}

/// Roots of the polynomial with the given coefficients (lowest first, leading
/// coefficient nonzero) by the Aberth–Ehrlich iteration followed by Newton
/// polishing. Roots are returned in a deterministic order.
pub fn roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut c: Vec<C64> = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == ZERO {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(LabError::NonFinite);
    }
    let lead = *c.last().unwrap();
    let c: Vec<C64> = c.iter().map(|&x| x / lead).collect();
    if n == 1 {
        return Ok(vec![-c[0]]);
    }
    // Fujiwara-type bound for the initial circle.
    let mut radius: f64 = 0.0;
    for (j, cj) in c.iter().enumerate().take(n) {
        let k = (n - j) as f64;
        radius = radius.max(2.0 * cj.norm().powf(1.0 / k));
    }
    let radius = radius.max(1e-3);
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + 0.4;
            C64::from_polar(radius * 0.5 + 0.1, th)
        })
        .collect();
    let eval = |x: C64| -> (C64, C64) {
        let mut p = ONE;
        let mut dp = ZERO;
        for &a in c.iter().rev().skip(1) {
            dp = dp * x + p;
            p = p * x + a;
        }
        (p, dp)
    };
    let mut converged = vec![false; n];
    for _ in 0..2000 {
        let mut all = true;
        for i in 0..n {
            if converged[i] {
                continue;
            }
            let (p, dp) = eval(z[i]);
            if p == ZERO {
                converged[i] = true;
                continue;
            }
            let ratio = p / dp;
            let mut s = ZERO;
            for j in 0..n {
                if j != i {
                    let diff = z[i] - z[j];
                    if diff != ZERO {
                        s += 1.0 / diff;
                    }
                }
            }
            let w = ratio / (ONE - ratio * s);
            if !w.is_finite() {
                continue;
            }
            z[i] -= w;
            if w.norm() <= 1e-15 * (1.0 + z[i].norm()) {
                converged[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            break;
        }
    }
    // Newton polish, kept only when it improves the residual.
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval(*zi);
            if dp == ZERO {
                break;
            }
            let cand = *zi - p / dp;
            if cand.is_finite() && eval(cand).0.norm() < p.norm() {
                *zi = cand;
            } else {
                break;
            }
        }
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(LabError::NoConvergence {
            what: "polynomial root finder".into(),
            iterations: 2000,
        });
    }
    z.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    Ok(z)
}

/// Groups roots closer than `tol` (single linkage) and returns cluster means
/// with cluster sizes.
pub fn cluster_roots(roots: &[C64], tol: f64) -> Vec<(C64, usize)> {
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        l[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (roots[i] - roots[j]).norm() < tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut out: Vec<(C64, usize)> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        if let Some(k) = seen.iter().position(|&s| s == r) {
            out[k].0 += roots[i];
            out[k].1 += 1;
        } else {
            seen.push(r);
            out.push((roots[i], 1));
        }
    }
    for o in out.iter_mut() {
        o.0 /= o.1 as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_non_monic_and_low_degree() {
        assert!(Poly1D::from_real(&[1.0, 2.0]).is_err());
        assert!(Poly1D::from_real(&[0.0, 0.0, 2.0]).is_err());
        assert!(Poly1D::from_real(&[0.0, 0.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn eval_matches_horner() {
        let p = Poly1D::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0), ONE]).unwrap();
        let z = c(0.3, -1.1);
        let direct = c(1.0, 2.0) + c(-3.0, 0.5) * z + c(0.0, 1.0) * z * z + z * z * z;
        assert!((p.eval(z) - direct).norm() < 1e-14);
        assert!((p.eval_d(z).0 - direct).norm() < 1e-14);
        let dd = c(-3.0, 0.5) + 2.0 * c(0.0, 1.0) * z + 3.0 * z * z;
        assert!((p.eval_d(z).1 - dd).norm() < 1e-14);
    }

    #[test]
    fn roots_of_cubic() {
        // (z-1)(z+2)(z-i)
        let p = CPoly::new(vec![c(0.0, -1.0), ONE])
            .mul(&CPoly::new(vec![c(-1.0, 0.0), ONE]))
            .mul(&CPoly::new(vec![c(2.0, 0.0), ONE]));
        let r = p.roots().unwrap();
        assert_eq!(r.len(), 3);
        let expect = [c(-2.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        for e in expect {
            assert!(r.iter().any(|x| (x - e).norm() < 1e-12));
        }
    }

    #[test]
    fn critical_points_cluster_multiplicity() {
        let p = Poly1D::from_real(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let cp = p.critical_points().unwrap();
        assert_eq!(cp.len(), 1);
        assert_eq!(cp[0].1, 2);
        assert!(cp[0].0.norm() < 1e-6);
    }

    #[test]
    fn preimages_solve() {
        let p = Poly1D::from_real(&[-6.0, 0.0, 1.0]).unwrap();
        for y in [c(30.0, 0.0), c(0.0, 1e-9), c(-6.0, 0.0)] {
            for z in p.preimages(y).unwrap() {
                assert!((p.eval(z) - y).norm() < 1e-10);
            }
        }
        let q = Poly1D::new(vec![ONE, c(0.0, 1.0), ZERO, ONE]).unwrap();
        let pre = q.preimages(c(2.0, -1.0)).unwrap();
        assert_eq!(pre.len(), 3);
        for z in pre {
            assert!((q.eval(z) - c(2.0, -1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn compose_degrees_multiply() {
        let q = Poly1D::quadratic(c(0.5, 0.0));
        let r = Poly1D::from_real(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        let qr = q.compose(&r);
        assert_eq!(qr.degree(), 6);
        let z = c(0.2, 0.7);
        assert!((qr.eval(z) - q.eval(r.eval(z))).norm() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let p = Poly1D::from_real(&[-6.0, 0.0, 1.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[-6.0,0.0],[0.0,0.0],[1.0,0.0]]");
        let back: Poly1D = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Poly1D>("[[1.0,0.0],[2.0,0.0]]").is_err());
    }
}
