//! Lyapunov exponent estimators, dimension formulas and the G⁺max bound.

use crate::critical::{CurveContext, Region, SearchOpts};
use crate::error::{LabError, Result};
use crate::henon::{mat_mul, HenonMap, Mat2, Point};
use crate::poly::Poly1D;
use crate::poly1d;
use crate::saddle::{chi_from_saddles, find_periodic_orbits, NewtonOpts, SearchBox, UnstableCurve};
use serde::{Deserialize, Serialize};

/// Slack on the lower bound χ⁺ ≥ log d.
pub const LOWER_BOUND_SLACK: f64 = 0.02;
/// Spread above which a Bedford–Smillie estimate counts as not stabilized.
pub const STABILIZATION_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Saddle,
    BedfordSmillie,
    ManningPrzytycki,
    Birkhoff1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent {
    ChiPlus,
    ChiMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    BelowLowerBound,
    NotStabilized,
    /// χ⁻ obtained as log|Jac| − χ⁺.
    FromJacobian,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub period: Option<usize>,
    pub orbit_count: Option<usize>,
    pub annulus_a: Option<f64>,
    pub rho: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub exponent: Exponent,
    pub method: Method,
    pub parameters: EstimateParams,
    pub spread: f64,
    pub flags: Vec<Flag>,
}

impl ExponentEstimate {
    fn new(value: f64, exponent: Exponent, method: Method, parameters: EstimateParams, spread: f64, d: usize) -> Self {
        let mut e = ExponentEstimate {
            value,
            exponent,
            method,
            parameters,
            spread,
            flags: Vec::new(),
        };
        if exponent == Exponent::ChiPlus && !e.lower_bound_ok(d) {
            e.flags.push(Flag::BelowLowerBound);
        }
        e
    }

    /// χ⁺ ≥ log d − slack.
    pub fn lower_bound_ok(&self, d: usize) -> bool {
        self.exponent != Exponent::ChiPlus || self.value >= (d as f64).ln() - LOWER_BOUND_SLACK
    }
}

/// χ̂⁺ and χ̂⁻ from all saddle orbits of period n found by symbolic seeding
/// plus an optional grid.
pub fn chi_saddle(f: &HenonMap, n: usize, grid: usize) -> Result<(ExponentEstimate, ExponentEstimate)> {
    let search = find_periodic_orbits(f, n, &SearchBox::for_map(f), grid, &NewtonOpts::default())?;
    let est = chi_from_saddles(f, &search.saddles())?;
    let params = EstimateParams {
        period: Some(n),
        orbit_count: Some(est.orbit_count),
        samples: Some(grid),
        ..Default::default()
    };
    let d = f.degree();
    Ok((
        ExponentEstimate::new(est.chi_plus, Exponent::ChiPlus, Method::Saddle, params, est.spread_plus, d),
        ExponentEstimate::new(est.chi_minus, Exponent::ChiMinus, Method::Saddle, params, est.spread_minus, d),
    ))
}

pub fn chi_manning_przytycki_estimate(p: &Poly1D) -> Result<ExponentEstimate> {
    let v = poly1d::chi_manning_przytycki(p)?;
    Ok(ExponentEstimate::new(v, Exponent::ChiPlus, Method::ManningPrzytycki, EstimateParams::default(), 0.0, p.degree()))
}

/// Birkhoff average of log|p′| over a sample of the equilibrium measure;
/// the spread is the standard error.
pub fn chi_birkhoff_1d_estimate(p: &Poly1D, depth: usize, count: usize, seed: u64) -> Result<ExponentEstimate> {
    let sample = poly1d::equilibrium_sample(p, depth, count, seed)?;
    let v = poly1d::chi_birkhoff_1d(p, &sample)?;
    let logs: Vec<f64> = sample.iter().map(|&z| p.eval_d(z).1.norm().ln()).collect();
    let var = logs.iter().map(|x| (x - v).powi(2)).sum::<f64>() / (logs.len().max(2) - 1) as f64;
    let params = EstimateParams {
        samples: Some(count),
        seed: Some(seed),
        ..Default::default()
    };
    Ok(ExponentEstimate::new(
        v,
        Exponent::ChiPlus,
        Method::Birkhoff1d,
        params,
        (var / logs.len() as f64).sqrt(),
        p.degree(),
    ))
}

/// Picks A near `a` (within ±2%) so that no tangency value sits within 1e-4
/// of A or dA.
pub fn nudge_annulus(f: &HenonMap, curve: &UnstableCurve, a: f64, rho: f64, opts: SearchOpts) -> Result<f64> {
    let d = f.degree() as f64;
    let ctx = CurveContext::new(f, curve, rho, Some(a * 0.97), opts)?;
    let wide = Region::Annulus {
        lo: a * 0.97,
        hi: a * d * 1.03,
    };
    let gs: Vec<f64> = ctx.tangencies(&wide)?.iter().map(|c| c.green_value).collect();
    for cand in [a, a * 0.98, a * 1.02, a * 0.99, a * 1.01] {
        if gs.iter().all(|&g| (g - cand).abs() > 1e-4 && (g - d * cand).abs() > 1e-4) {
            return Ok(cand);
        }
    }
    Err(LabError::Precondition(format!("no tangency-free annulus boundary near A = {a}")))
}

fn bs_sum(ctx: &CurveContext) -> Result<f64> {
    let region = ctx.fundamental();
    let crit = ctx.tangencies(&region)?;
    let n = ctx.slice_count(region.generic_point())?.count;
    if n == 0 {
        return Err(LabError::Precondition("empty fiber: increase rho".into()));
    }
    let s: f64 = crit.iter().map(|c| c.multiplicity as f64 * c.green_value).sum();
    Ok((ctx.degree() as f64).ln() + s / n as f64)
}

/// log d + (Σ multiplicity·G⁺ over tangencies in {A ≤ G⁺ < dA}) / slice count,
/// at ρ; the spread compares with the estimate at |λ_u|·ρ. Without `a` the
/// default annulus (1.1 × torus maximum, nudged) is used.
pub fn chi_bedford_smillie(
    f: &HenonMap,
    curve: &UnstableCurve,
    a: Option<f64>,
    rho: f64,
    opts: SearchOpts,
) -> Result<ExponentEstimate> {
    let a = match a {
        Some(a) => a,
        None => {
            let base = CurveContext::new(f, curve, rho, None, opts)?.a;
            nudge_annulus(f, curve, base, rho, opts)?
        }
    };
    let v = bs_sum(&CurveContext::new(f, curve, rho, Some(a), opts)?)?;
    let v2 = bs_sum(&CurveContext::new(f, curve, rho * curve.lambda().norm(), Some(a), opts)?)?;
    let params = EstimateParams {
        period: Some(curve.period()),
        annulus_a: Some(a),
        rho: Some(rho),
        ..Default::default()
    };
    let mut e = ExponentEstimate::new(v, Exponent::ChiPlus, Method::BedfordSmillie, params, (v - v2).abs(), f.degree());
    if e.spread > STABILIZATION_SPREAD {
        e.flags.push(Flag::NotStabilized);
    }
    Ok(e)
}

/// χ⁻ = log|Jac| − χ⁺.
pub fn chi_minus_from_jacobian(f: &HenonMap, chi_plus: &ExponentEstimate) -> Result<ExponentEstimate> {
    if f.is_degenerate() {
        return Err(LabError::InvalidInput("χ⁻ is −∞ for a degenerate map".into()));
    }
    if chi_plus.exponent != Exponent::ChiPlus {
        return Err(LabError::InvalidInput("expected a χ⁺ estimate".into()));
    }
    let mut e = ExponentEstimate::new(
        f.jacobian().norm().ln() - chi_plus.value,
        Exponent::ChiMinus,
        chi_plus.method,
        chi_plus.parameters,
        chi_plus.spread,
        f.degree(),
    );
    e.flags = chi_plus.flags.iter().copied().filter(|&g| g != Flag::BelowLowerBound).collect();
    e.flags.push(Flag::FromJacobian);
    Ok(e)
}

/// log d·(1/χ⁺ − 1/χ⁻), or log d/χ⁺ in one dimension.
pub fn young_dimension(chi_plus: f64, chi_minus: Option<f64>, d: usize) -> Result<f64> {
    if !(chi_plus > 0.0) {
        return Err(LabError::InvalidInput(format!("χ⁺ must be positive, got {chi_plus}")));
    }
    if d < 2 {
        return Err(LabError::InvalidInput(format!("degree must be at least 2, got {d}")));
    }
    let h = (d as f64).ln();
    match chi_minus {
        None => Ok(h / chi_plus),
        Some(m) if m < 0.0 => Ok(h * (1.0 / chi_plus - 1.0 / m)),
        Some(m) => Err(LabError::InvalidInput(format!("χ⁻ must be negative, got {m}"))),
    }
}

/// Largest singular value of a 2×2 complex matrix.
pub fn operator_norm(m: &Mat2) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|x| x.norm_sqr()).sum();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
    ((fro2 + disc.sqrt()) / 2.0).sqrt()
}

/// (1/n)·mean over the sample of log‖Dfⁿ‖, with the chain-rule product
/// renormalized along the way.
pub fn chi_finite_time(f: &HenonMap, n: usize, sample: &[Point]) -> Result<f64> {
    if sample.is_empty() || n == 0 {
        return Err(LabError::InvalidInput("need a nonempty sample and n ≥ 1".into()));
    }
    let mut total = 0.0;
    for &x0 in sample {
        let mut x = x0;
        let mut m = crate::henon::IDENTITY;
        let mut log_scale = 0.0;
        for _ in 0..n {
            m = mat_mul(&f.differential(x), &m);
            let s = operator_norm(&m);
            if !(s > 0.0) || !s.is_finite() {
                return Err(LabError::NonFinite);
            }
            log_scale += s.ln();
            for v in m.iter_mut().flatten() {
                *v /= s;
            }
            x = f.forward(x);
        }
        total += log_scale + operator_norm(&m).ln();
    }
    Ok(total / (sample.len() * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyOrbit {
    pub green_value: f64,
    pub multiplicity: usize,
    /// Degrees of the sublevel components meeting at the tangency.
    pub masses: Vec<usize>,
    /// Level below which the orbit's backward chain stops being liftable.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPlusMax {
    pub value: f64,
    pub orbits: Vec<TangencyOrbit>,
    /// Set when some chain could not be resolved; the value is then an upper bound.
    pub upper_bound_only: bool,
}

/// Heuristic G⁺max. Each tangency orbit meets the fundamental annulus once, at
/// level g. Going back k steps divides component degrees by d^{nk} while the
/// backward images stay unramified, so the orbit threshold is g/d^{nk*} for
/// the first k* at which d^{nk*} no longer divides the degrees of the
/// components meeting at the tangency.
pub fn estimate_g_plus_max(f: &HenonMap, curve: &UnstableCurve, rho: f64, opts: SearchOpts) -> Result<GPlusMax> {
    if f.is_degenerate() {
        if let Ok(ind) = f.induced_polynomial() {
            return Ok(GPlusMax {
                value: poly1d::g_max(&ind.q)?,
                orbits: Vec::new(),
                upper_bound_only: false,
            });
        }
    }
    let ctx = CurveContext::new(f, curve, rho, None, opts)?;
    let d = ctx.degree();
    let crit = ctx.tangencies(&ctx.fundamental())?;
    if crit.is_empty() {
        let more = ctx.tangencies(&Region::annuli(ctx.a, d, 3))?;
        if more.is_empty() {
            return Ok(GPlusMax {
                value: 0.0,
                orbits: Vec::new(),
                upper_bound_only: false,
            });
        }
    }
    let step = (d as u64).pow(curve.period() as u32);
    let mut orbits = Vec::new();
    let mut upper = false;
    for c in &crit {
        let (masses, threshold) = match ctx.child_masses(c, 1 << 16) {
            Ok(m) => {
                let g = m.iter().fold(0u64, |acc, &x| gcd(acc, x as u64));
                let mut k = 1;
                let mut pow = step;
                while g > 0 && g % pow == 0 && k < 64 {
                    k += 1;
                    pow = pow.saturating_mul(step);
                }
                (m, c.green_value / pow as f64)
            }
            Err(_) => {
                upper = true;
                (Vec::new(), c.green_value)
            }
        };
        orbits.push(TangencyOrbit {
            green_value: c.green_value,
            multiplicity: c.multiplicity,
            masses,
            threshold,
        });
    }
    Ok(GPlusMax {
        value: orbits.iter().map(|o| o.threshold).fold(0.0, f64::max),
        orbits,
        upper_bound_only: upper,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// log d + d·G⁺max + 0.05 − χ⁺.
    pub margin: f64,
}

/// χ⁺ ≤ log d + d·G⁺max, with 0.05 slack.
pub fn exponent_bound_check(f: &HenonMap, chi_plus: &ExponentEstimate, gmax: f64) -> BoundCheck {
    let d = f.degree() as f64;
    let margin = d.ln() + d * gmax + 0.05 - chi_plus.value;
    BoundCheck { holds: margin >= 0.0, margin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::C64;

    fn quad(a: f64, c: f64) -> HenonMap {
        HenonMap::single(C64::new(a, 0.0), Poly1D::from_real(&[c, 0.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn young_trivial_cases() {
        let l2 = 2f64.ln();
        assert!((young_dimension(l2, Some(-l2), 2).unwrap() - 2.0).abs() < 1e-15);
        assert!((young_dimension(3f64.ln(), None, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(young_dimension(-1.0, None, 2).is_err());
        assert!(young_dimension(1.0, Some(0.5), 2).is_err());
    }

    #[test]
    fn jacobian_complement() {
        let f = quad(0.3, -6.0);
        let e = ExponentEstimate::new(2f64.ln(), Exponent::ChiPlus, Method::Saddle, EstimateParams::default(), 0.0, 2);
        let m = chi_minus_from_jacobian(&f, &e).unwrap();
        assert!((m.value - (2.0 * 0.3f64.ln() - 2f64.ln())).abs() < 1e-14);
        assert!(m.flags.contains(&Flag::FromJacobian));
        assert!(chi_minus_from_jacobian(&quad(0.0, -6.0), &e).is_err());
    }

    #[test]
    fn operator_norm_diagonal_and_rank_one() {
        let o = C64::new(0.0, 0.0);
        let m = [[C64::new(3.0, 0.0), o], [o, C64::new(0.0, -5.0)]];
        assert!((operator_norm(&m) - 5.0).abs() < 1e-14);
        let r = [[C64::new(1.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(1.0, 0.0)]];
        assert!((operator_norm(&r) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bound_check_margins() {
        let f = quad(0.05, -1.0);
        let e = ExponentEstimate::new(2f64.ln(), Exponent::ChiPlus, Method::BedfordSmillie, EstimateParams::default(), 0.0, 2);
        let b = exponent_bound_check(&f, &e, 0.0);
        assert!(b.holds && (b.margin - 0.05).abs() < 1e-15);
        let low = ExponentEstimate::new(0.5, Exponent::ChiPlus, Method::Saddle, EstimateParams::default(), 0.0, 2);
        assert!(low.flags.contains(&Flag::BelowLowerBound));
    }

    #[test]
    fn degenerate_g_plus_max_is_one_dimensional() {
        let f = quad(0.0, -6.0);
        let orbit = crate::saddle::default_saddle(&f).unwrap();
        let curve = crate::saddle::unstable_curve(&f, &orbit).unwrap();
        let g = estimate_g_plus_max(&f, &curve, 1.0, SearchOpts::default()).unwrap();
        let p = Poly1D::from_real(&[-6.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.value, poly1d::g_max(&p).unwrap());
    }
}
