//! One-dimensional polynomial dynamics.

use crate::error::{LabError, Result};
use crate::poly::Poly1D;
use crate::precision::{BigC, GreenOpts, Precision};
use crate::scalar::C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Critical points with `G > ESCAPE_THRESHOLD` count as escaping.
pub const ESCAPE_THRESHOLD: f64 = 1e-10;

/// A closed disk in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: C64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: C64, radius: f64) -> Self {
        Disk { center, radius }
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.center).norm() < self.radius
    }

    /// Same center, radius reduced by `delta`.
    pub fn shrink(&self, delta: f64) -> Disk {
        Disk::new(self.center, (self.radius - delta).max(0.0))
    }

    pub fn boundary(&self, k: usize) -> impl Iterator<Item = C64> + '_ {
        (0..k).map(move |j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            self.center + C64::from_polar(self.radius, th)
        })
    }
}

/// An atom of the critical measure restricted to a fundamental annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalAtom1D {
    pub location: C64,
    pub weight: f64,
    pub green_value: f64,
    pub source_critical_point: C64,
    pub iterate_index: u32,
}

/// Atoms in `{A ≤ G < dA}` together with the `A` actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomWindow {
    pub a: f64,
    /// `a − requested A`; nonzero when a postcritical Green value sat on the window edge.
    pub shift: f64,
    pub atoms: Vec<CriticalAtom1D>,
}

impl AtomWindow {
    /// Σ weight · green_value.
    pub fn mass_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.green_value).sum()
    }
}

/// Forward orbit of `z` until it leaves the disk of radius `r`; returns the
/// escaping iterate and its index, or `None` if it stays for `max_iter` steps.
fn escape_orbit(p: &Poly1D, z: C64, r: f64, opts: &GreenOpts) -> Option<(C64, usize)> {
    match opts.precision {
        Precision::Double => {
            let mut x = z;
            for n in 0..=opts.max_iter {
                if x.norm() > r {
                    return Some((x, n));
                }
                if n == opts.max_iter {
                    break;
                }
                x = p.eval(x);
            }
            None
        }
        Precision::Extended { bits } => {
            let bits = bits.max(64);
            let coeffs: Vec<BigC> = p.coeffs().iter().map(|&c| BigC::from_c(c, bits)).collect();
            let mut x = BigC::from_c(z, bits);
            let r2 = r * r;
            for n in 0..=opts.max_iter {
                if x.norm_sqr_f64() > r2 {
                    return Some((x.to_c(), n));
                }
                if n == opts.max_iter {
                    break;
                }
                let mut acc = coeffs.last().unwrap().clone();
                for c in coeffs.iter().rev().skip(1) {
                    acc = acc.mul(&x).add(c);
                }
                x = acc;
            }
            None
        }
    }
}

/// Σ_{j≥0} d^{−(j+1)} Log r_j for the orbit of z, where r_j = p(z_j)/z_j^d.
/// Requires |z| > escape radius; computed in powers of 1/z so it never overflows.
fn log_ratio_tail(p: &Poly1D, z: C64, tol: f64) -> C64 {
    let d = p.degree();
    let c = p.coeffs();
    let mut u = 1.0 / z;
    let mut acc = C64::new(0.0, 0.0);
    let mut scale = 1.0 / d as f64;
    for _ in 0..200 {
        // r = 1 + Σ_{i<d} c_i u^{d−i}
        let mut s = C64::new(0.0, 0.0);
        for &ci in c[..d].iter() {
            s = (s + ci) * u;
        }
        let r = 1.0 + s;
        let term = r.ln() * scale;
        acc += term;
        if term.norm() < tol * 1e-3 || u == C64::new(0.0, 0.0) {
            break;
        }
        u = u.powu(d as u32) / r;
        scale /= d as f64;
    }
    acc
}

/// Dynamical Green function G_p(z).
pub fn green_1d(p: &Poly1D, z: C64, opts: &GreenOpts) -> Result<f64> {
    if !z.is_finite() {
        return Err(LabError::NonFinite);
    }
    if opts.max_iter == 0 {
        return Err(LabError::InvalidInput("max_iter must be at least 1".into()));
    }
    let r = p.escape_radius();
    let Some((x, n)) = escape_orbit(p, z, r, opts) else {
        return Ok(0.0);
    };
    let d = p.degree() as f64;
    let log_phi = x.norm().ln() + log_ratio_tail(p, x, opts.tol).re;
    Ok((log_phi * d.powi(-(n as i32))).max(0.0))
}

/// Böttcher coordinate φ_p(z) for |z| ≥ R(p).
pub fn bottcher_1d(p: &Poly1D, z: C64) -> Result<C64> {
    if !z.is_finite() {
        return Err(LabError::NonFinite);
    }
    let r = p.escape_radius();
    if z.norm() < r {
        return Err(LabError::OutsideEscapeRegion {
            modulus: z.norm(),
            radius: r,
        });
    }
    Ok(z * log_ratio_tail(p, z, 1e-16).exp())
}

/// Escaping critical points as (point, multiplicity, G_p).
pub fn escaping_critical_points(p: &Poly1D) -> Result<Vec<(C64, usize, f64)>> {
    let opts = GreenOpts::default();
    let mut out = Vec::new();
    for (c, m) in p.critical_points()? {
        let g = green_1d(p, c, &opts)?;
        if g > ESCAPE_THRESHOLD {
            out.push((c, m, g));
        }
    }
    Ok(out)
}

/// G_max(p): largest Green value of an escaping critical point, 0 if none.
pub fn g_max(p: &Poly1D) -> Result<f64> {
    Ok(escaping_critical_points(p)?
        .iter()
        .map(|x| x.2)
        .fold(0.0, f64::max))
}

/// Atoms of the critical measure with Green value in [A, dA).
pub fn critical_atoms_window(p: &Poly1D, a: f64) -> Result<AtomWindow> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(LabError::InvalidInput(format!("A must be positive, got {a}")));
    }
    let esc = escaping_critical_points(p)?;
    let gmax = esc.iter().map(|x| x.2).fold(0.0, f64::max);
    if a < gmax * (1.0 - 1e-12) {
        return Err(LabError::Precondition(format!(
            "A = {a} is below G_max = {gmax}"
        )));
    }
    let d = p.degree() as f64;
    // nudge downward when allowed so an atom sitting on the closed edge A stays in
    let factor = if a * (1.0 - 1e-2) >= gmax { 1.0 - 1e-3 } else { 1.0 + 1e-3 };
    let mut a_used = a;
    'attempt: for _ in 0..8 {
        let mut atoms = Vec::new();
        for &(c, m, g) in &esc {
            let mut k = 0u32;
            let mut gk = g;
            while gk < a_used {
                gk *= d;
                k += 1;
            }
            if (gk - a_used).abs() < 1e-9 * a_used || (gk - d * a_used).abs() < 1e-9 * a_used {
                a_used *= factor;
                continue 'attempt;
            }
            let mut loc = c;
            for _ in 0..k {
                loc = p.eval(loc);
            }
            atoms.push(CriticalAtom1D {
                location: loc,
                weight: m as f64 * d.powi(-(k as i32)),
                green_value: gk,
                source_critical_point: c,
                iterate_index: k,
            });
        }
        return Ok(AtomWindow {
            a: a_used,
            shift: a_used - a,
            atoms,
        });
    }
    Err(LabError::Precondition(
        "could not move A off the postcritical Green values".into(),
    ))
}

/// log d + Σ_c mult(c)·G_p(c).
pub fn chi_manning_przytycki(p: &Poly1D) -> Result<f64> {
    let d = p.degree() as f64;
    let s: f64 = escaping_critical_points(p)?
        .iter()
        .map(|&(_, m, g)| m as f64 * g)
        .sum();
    Ok(d.ln() + s)
}

/// Samples of the equilibrium measure by backward iteration.
///
/// Each sample is the endpoint of its own chain of `depth` preimage steps
/// from the escaping point R(p) + 1. Every step picks one of the d preimages
/// with uniform marginal probability. The last ⌊log_d count⌋ choices of
/// sample i are the base-d digits of i + s (s a random shift, each level
/// relabelled by a random permutation), so consecutive blocks of samples visit
/// every deep cylinder exactly once; earlier choices are independent uniform.
pub fn equilibrium_sample(p: &Poly1D, depth: usize, count: usize, seed: u64) -> Result<Vec<C64>> {
    if depth < 20 {
        return Err(LabError::InvalidInput(format!("depth must be ≥ 20, got {depth}")));
    }
    if count == 0 {
        return Err(LabError::InvalidInput("count must be ≥ 1".into()));
    }
    let d = p.degree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = 0usize;
    let mut block = 1usize;
    while levels < depth && block.saturating_mul(d) <= count {
        block *= d;
        levels += 1;
    }
    let shift: usize = rng.gen_range(0..block.max(1));
    let perms: Vec<Vec<usize>> = (0..levels)
        .map(|_| {
            let mut v: Vec<usize> = (0..d).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let start = C64::new(p.escape_radius() + 1.0, 0.0);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut z = start;
        let digits = i + shift;
        for s in 0..depth {
            let pre = p.preimages(z)?;
            if pre.len() != d || pre.iter().any(|x| !x.is_finite()) {
                return Err(LabError::NoConvergence {
                    what: "preimage solve".into(),
                    iterations: s,
                });
            }
            let level_from_end = depth - 1 - s;
            let branch = if level_from_end < levels {
                let digit = (digits / d.pow(level_from_end as u32)) % d;
                perms[level_from_end][digit]
            } else {
                rng.gen_range(0..d)
            };
            z = pre[branch];
        }
        out.push(z);
    }
    Ok(out)
}

/// Mean of log|p′| over a sample.
pub fn chi_birkhoff_1d(p: &Poly1D, sample: &[C64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(LabError::InvalidInput("empty sample".into()));
    }
    let mut s = 0.0;
    for &z in sample {
        let (_, dp) = p.eval_d(z);
        if dp.norm() == 0.0 {
            return Err(LabError::InvalidInput(format!("sample point {z} is critical")));
        }
        s += dp.norm().ln();
    }
    Ok(s / sample.len() as f64)
}

/// Σ_k mult(c_k)·d^{n−j_k} over critical points whose orbit enters Q at step
/// j_k ∈ [1, n]; equals the number of critical points of pⁿ on p^{−n}(Q).
pub fn count_ramification(p: &Poly1D, q: &Disk, n: usize) -> Result<u64> {
    if n == 0 {
        return Err(LabError::InvalidInput("n must be ≥ 1".into()));
    }
    let opts = GreenOpts::default();
    let gmin = q
        .boundary(64)
        .map(|z| green_1d(p, z, &opts))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(gmin > 0.0) {
        return Err(LabError::Precondition(
            "Q meets the filled Julia set (G vanishes on its boundary)".into(),
        ));
    }
    // heuristic orbit-once check on a polar grid of Q
    let mut grid = vec![q.center];
    for ring in 1..=4 {
        let r = q.radius * ring as f64 / 4.0 * (1.0 - 1e-9);
        let disk = Disk::new(q.center, r);
        grid.extend(disk.boundary(64));
    }
    for &x in &grid {
        let mut y = x;
        for j in 1..=n {
            y = p.eval(y);
            if !y.is_finite() {
                break;
            }
            if q.contains(y) {
                return Err(LabError::Precondition(format!(
                    "Q meets its own preimage under p^{j}"
                )));
            }
        }
    }
    let d = p.degree() as u64;
    let mut total = 0u64;
    for (c, m) in p.critical_points()? {
        let mut z = c;
        for j in 1..=n {
            z = p.eval(z);
            if !z.is_finite() {
                break;
            }
            if q.contains(z) {
                total += m as u64 * d.pow((n - j) as u32);
                break;
            }
        }
    }
    Ok(total)
}
