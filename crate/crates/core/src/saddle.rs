//! Periodic orbits, saddle multipliers and unstable-manifold parametrizations.

use crate::error::{LabError, Result};
use crate::henon::{mat_mul, HenonMap, Mat2, Point, IDENTITY};
use crate::scalar::{Scalar, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitType {
    Saddle,
    Attracting,
    Repelling,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub period: usize,
    pub points: Vec<Point>,
    /// Eigenvalues (λ_u, λ_s) of D fⁿ at `points[0]`, |λ_u| ≥ |λ_s|.
    pub multipliers: (C64, C64),
    #[serde(rename = "type")]
    pub kind: OrbitType,
}

impl PeriodicOrbit {
    pub fn is_saddle(&self) -> bool {
        self.kind == OrbitType::Saddle
    }
}

/// Square search box in the z-plane; seeds take w = a·z with a from the last factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub center: C64,
    pub half_width: f64,
}

impl SearchBox {
    /// Box containing the filtration bidisk of `f`.
    pub fn for_map(f: &HenonMap) -> Self {
        SearchBox {
            center: ZERO,
            half_width: f.filtration_radius(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub dedup_radius: f64,
    /// Largest admissible dⁿ.
    pub cap: usize,
    /// Also seed from itineraries of the roots of the factor polynomials.
    pub symbolic_seeds: bool,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts {
            tol: 1e-12,
            max_iter: 60,
            dedup_radius: 1e-6,
            cap: 4096,
            symbolic_seeds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSearch {
    /// Orbits of exact period n.
    pub orbits: Vec<PeriodicOrbit>,
    /// Distinct fixed points of fⁿ found (all periods dividing n).
    pub fixed_points_found: usize,
    /// fixed_points_found / dⁿ.
    pub saturation: f64,
    pub failed_seeds: usize,
    /// A few of the seeds that failed, for diagnostics.
    pub failed_examples: Vec<Point>,
}

impl OrbitSearch {
    pub fn saddles(&self) -> Vec<PeriodicOrbit> {
        self.orbits.iter().filter(|o| o.is_saddle()).cloned().collect()
    }
}

fn norm2(x: &Point) -> f64 {
    (x[0].norm_sqr() + x[1].norm_sqr()).sqrt()
}

fn dist(x: &Point, y: &Point) -> f64 {
    (x[0] - y[0]).norm().max((x[1] - y[1]).norm())
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Option<Vec<C64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())?;
        if a[piv][col].norm() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == ZERO {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[r][k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![ZERO; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in (r + 1)..n {
            s -= a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// The periodic-orbit equations as a cyclic scalar recursion
/// z_{s+1} = p_s(z_s) + a_s a_{s−1} z_{s−1} over L = n·m factor steps.
struct Cyclic<'a> {
    f: &'a HenonMap,
    len: usize,
}

impl<'a> Cyclic<'a> {
    fn factor(&self, s: usize) -> &crate::henon::HenonFactor {
        let m = self.f.factors().len();
        &self.f.factors()[s % m]
    }

    fn coupling(&self, s: usize) -> C64 {
        let l = self.len;
        self.factor(s).a * self.factor((s + l - 1) % l).a
    }

    fn residual(&self, z: &[C64]) -> Vec<C64> {
        let l = self.len;
        (0..l)
            .map(|s| {
                let fs = self.factor(s);
                z[(s + 1) % l] - fs.p.eval(z[s]) - self.coupling(s) * z[(s + l - 1) % l]
            })
            .collect()
    }

    fn newton(&self, mut z: Vec<C64>, opts: &NewtonOpts) -> Option<Vec<C64>> {
        let l = self.len;
        for _ in 0..opts.max_iter {
            let res = self.residual(&z);
            let mut jac = vec![vec![ZERO; l]; l];
            for s in 0..l {
                let (_, dp) = self.factor(s).p.eval_d(z[s]);
                jac[s][(s + 1) % l] += ONE;
                jac[s][s] -= dp;
                jac[s][(s + l - 1) % l] -= self.coupling(s);
            }
            let step = solve_dense(jac, res)?;
            let mut big = 0.0f64;
            for s in 0..l {
                z[s] -= step[s];
                big = big.max(step[s].norm() / (1.0 + z[s].norm()));
            }
            if !z.iter().all(|v| v.is_finite() && v.norm() < 1e8) {
                return None;
            }
            if big < opts.tol {
                return Some(z);
            }
        }
        None
    }

    /// Orbit points x_i = (z_{im}, a_{m−1} z_{im−1}).
    fn points(&self, z: &[C64]) -> Vec<Point> {
        let m = self.f.factors().len();
        let l = self.len;
        let a_last = self.f.factors()[m - 1].a;
        (0..l / m)
            .map(|i| [z[i * m], a_last * z[(i * m + l - 1) % l]])
            .collect()
    }

    fn from_point(&self, x: Point) -> Vec<C64> {
        let mut z = Vec::with_capacity(self.len);
        let (mut a, mut b) = (x[0], x[1]);
        for s in 0..self.len {
            z.push(a);
            (a, b) = self.factor(s).apply(a, b);
        }
        z
    }
}

/// Itinerary seeds: each z_s starts at a root of p_s, then inverse-branch
/// sweeps move the sequence toward the orbit with that itinerary.
fn symbolic_seeds(cy: &Cyclic) -> Result<Vec<Vec<C64>>> {
    let l = cy.len;
    // branches are coded by the roots of p, or by the preimages of a generic
    // point on the escape circle when the roots cluster (as for z^d)
    let roots: Vec<Vec<C64>> = (0..l)
        .map(|s| {
            let p = &cy.factor(s).p;
            let r = p.preimages(ZERO)?;
            let scale = 1.0 + r.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let sep = r
                .iter()
                .enumerate()
                .flat_map(|(i, a)| r[i + 1..].iter().map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            if sep > 1e-3 * scale {
                Ok(r)
            } else {
                p.preimages(C64::from_polar(p.escape_radius(), 0.37))
            }
        })
        .collect::<Result<_>>()?;
    let total: usize = roots.iter().map(|r| r.len()).product();
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let sigma: Vec<C64> = roots
            .iter()
            .map(|r| {
                let k = c % r.len();
                c /= r.len();
                r[k]
            })
            .collect();
        let mut z = sigma.clone();
        for _ in 0..30 {
            for s in (0..l).rev() {
                let y = z[(s + 1) % l] - cy.coupling(s) * z[(s + l - 1) % l];
                let pre = cy.factor(s).p.preimages(y)?;
                z[s] = *pre
                    .iter()
                    .min_by(|a, b| (*a - sigma[s]).norm().partial_cmp(&(*b - sigma[s]).norm()).unwrap())
                    .unwrap();
            }
        }
        out.push(z);
    }
    Ok(out)
}

fn newton_point(f: &HenonMap, x: Point, n: usize, opts: &NewtonOpts) -> Option<Point> {
    let mut y = x;
    for _ in 0..opts.max_iter {
        let fy = f.iterate(y, n);
        let g = [fy[0] - y[0], fy[1] - y[1]];
        let mut m = f.differential_n(y, n);
        m[0][0] -= ONE;
        m[1][1] -= ONE;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let dz = (m[1][1] * g[0] - m[0][1] * g[1]) / det;
        let dw = (m[0][0] * g[1] - m[1][0] * g[0]) / det;
        y = [y[0] - dz, y[1] - dw];
        if !y[0].is_finite() || !y[1].is_finite() || norm2(&y) > 1e8 {
            return None;
        }
        if dz.norm().max(dw.norm()) < opts.tol * (1.0 + norm2(&y)) {
            return Some(y);
        }
    }
    None
}

/// Multipliers of fⁿ along an orbit: (λ_u, λ_s) with λ_s = Jacⁿ/λ_u.
pub fn orbit_multipliers(f: &HenonMap, points: &[Point]) -> (C64, C64) {
    let mut m: Mat2 = IDENTITY;
    for x in points {
        m = mat_mul(&f.differential(*x), &m);
    }
    let tr = m[0][0] + m[1][1];
    let det = f.jacobian().powu(points.len() as u32);
    let disc = (tr * tr * 0.25 - det).sqrt();
    let l1 = tr * 0.5 + disc;
    let l2 = tr * 0.5 - disc;
    let lu = if l1.norm() >= l2.norm() { l1 } else { l2 };
    let ls = if lu.norm() > 0.0 { det / lu } else { ZERO };
    (lu, ls)
}

fn classify(lu: C64, ls: C64) -> OrbitType {
    let (u, s) = (lu.norm(), ls.norm());
    let eps = 1e-9;
    if s < 1.0 - eps && u > 1.0 + eps {
        OrbitType::Saddle
    } else if u < 1.0 - eps {
        OrbitType::Attracting
    } else if s > 1.0 + eps {
        OrbitType::Repelling
    } else {
        OrbitType::Neutral
    }
}

/// Locates periodic orbits of exact period n.
pub fn find_periodic_orbits(
    f: &HenonMap,
    n: usize,
    search: &SearchBox,
    grid: usize,
    opts: &NewtonOpts,
) -> Result<OrbitSearch> {
    if n == 0 {
        return Err(LabError::InvalidInput("period must be ≥ 1".into()));
    }
    let expected = (f.degree() as f64).powi(n as i32);
    if expected > opts.cap as f64 {
        return Err(LabError::Precondition(format!(
            "d^n = {expected} exceeds the cap {}",
            opts.cap
        )));
    }
    let m = f.factors().len();
    let cy = Cyclic { f, len: n * m };
    let mut seeds: Vec<Vec<C64>> = if opts.symbolic_seeds {
        symbolic_seeds(&cy)?
    } else {
        Vec::new()
    };
    let a_last = f.factors()[m - 1].a;
    let mut grid_seeds: Vec<Point> = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            let h = search.half_width;
            let step = if grid > 1 { 2.0 * h / (grid - 1) as f64 } else { 0.0 };
            let z = search.center + C64::new(-h + i as f64 * step, -h + j as f64 * step);
            grid_seeds.push([z, a_last * z]);
        }
    }
    // grid seeds converge with the 2×2 Newton on fⁿ(x) − x, then join the cyclic pool
    let grid_results: Vec<(Point, Option<Point>)> = grid_seeds
        .par_iter()
        .map(|&x| (x, newton_point(f, x, n, opts)))
        .collect();
    let mut failed_examples = Vec::new();
    let mut failed = 0usize;
    for (x, r) in &grid_results {
        match r {
            Some(y) => seeds.push(cy.from_point(*y)),
            None => {
                failed += 1;
                if failed_examples.len() < 16 {
                    failed_examples.push(*x);
                }
            }
        }
    }
    let sym_count = seeds.len() - grid_results.iter().filter(|r| r.1.is_some()).count();
    let solved: Vec<Option<Vec<C64>>> = seeds.into_par_iter().map(|z| cy.newton(z, opts)).collect();
    let mut points: Vec<Point> = Vec::new();
    for (k, s) in solved.iter().enumerate() {
        match s {
            Some(z) => points.extend(cy.points(z)),
            None => {
                if k < sym_count {
                    failed += 1;
                }
            }
        }
    }
    // deduplicate fixed points of fⁿ
    points.sort_by(|a, b| a[0].re.partial_cmp(&b[0].re).unwrap());
    let mut distinct: Vec<Point> = Vec::new();
    for x in points {
        let dup = distinct
            .iter()
            .rev()
            .take_while(|y| x[0].re - y[0].re < opts.dedup_radius)
            .any(|y| dist(&x, y) < opts.dedup_radius);
        if !dup {
            distinct.push(x);
        }
    }
    distinct.sort_by(|a, b| {
        a[0].re
            .partial_cmp(&b[0].re)
            .unwrap()
            .then(a[0].im.partial_cmp(&b[0].im).unwrap())
    });
    let find = |y: &Point| distinct.iter().position(|x| dist(x, y) < opts.dedup_radius * (1.0 + norm2(y)));
    let mut used = vec![false; distinct.len()];
    let mut orbits = Vec::new();
    for i in 0..distinct.len() {
        if used[i] {
            continue;
        }
        let mut pts = vec![distinct[i]];
        let mut idx = vec![i];
        let mut exact = None;
        for k in 1..=n {
            let next = f.forward(*pts.last().unwrap());
            if dist(&next, &distinct[i]) < opts.dedup_radius * (1.0 + norm2(&next)) {
                exact = Some(k);
                break;
            }
            match find(&next) {
                Some(j) => {
                    idx.push(j);
                    pts.push(distinct[j]);
                }
                None => pts.push(next),
            }
        }
        for &j in &idx {
            used[j] = true;
        }
        if exact != Some(n) {
            continue;
        }
        let (lu, ls) = orbit_multipliers(f, &pts);
        orbits.push(PeriodicOrbit {
            period: n,
            points: pts,
            multipliers: (lu, ls),
            kind: classify(lu, ls),
        });
    }
    let found = distinct.len();
    Ok(OrbitSearch {
        orbits,
        fixed_points_found: found,
        saturation: found as f64 / expected,
        failed_seeds: failed,
        failed_examples,
    })
}

/// Saddle-orbit exponent estimates with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleEstimate {
    pub chi_plus: f64,
    pub chi_minus: f64,
    pub spread_plus: f64,
    pub spread_minus: f64,
    pub period: usize,
    pub orbit_count: usize,
}

/// χ̂± as means of (1/n)·log|λ_{u,s}| over saddle orbits of one period.
pub fn chi_from_saddles(f: &HenonMap, orbits: &[PeriodicOrbit]) -> Result<SaddleEstimate> {
    let _ = f;
    let first = orbits
        .first()
        .ok_or_else(|| LabError::InvalidInput("no saddle orbits".into()))?;
    let n = first.period;
    if orbits.iter().any(|o| o.period != n) {
        return Err(LabError::InvalidInput("orbits of mixed periods".into()));
    }
    if orbits.iter().any(|o| !o.is_saddle()) {
        return Err(LabError::InvalidInput("non-saddle orbit in the sample".into()));
    }
    let k = orbits.len() as f64;
    let up: Vec<f64> = orbits.iter().map(|o| o.multipliers.0.norm().ln() / n as f64).collect();
    let sp: Vec<f64> = orbits.iter().map(|o| o.multipliers.1.norm().ln() / n as f64).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / k;
    let se = |v: &[f64], m: f64| {
        if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        }
    };
    let mp = mean(&up);
    let mm = mean(&sp);
    Ok(SaddleEstimate {
        chi_plus: mp,
        chi_minus: mm,
        spread_plus: se(&up, mp),
        spread_minus: se(&sp, mm),
        period: n,
        orbit_count: orbits.len(),
    })
}

/// The saddle fixed point with the largest unstable multiplier.
pub fn default_saddle(f: &HenonMap) -> Result<PeriodicOrbit> {
    let s = find_periodic_orbits(f, 1, &SearchBox::for_map(f), 24, &NewtonOpts::default())?;
    s.saddles()
        .into_iter()
        .max_by(|a, b| a.multipliers.0.norm().partial_cmp(&b.multipliers.0.norm()).unwrap())
        .ok_or_else(|| LabError::Precondition("no saddle fixed point found".into()))
}

// Truncated power series with pairs of coefficients.

fn ser_mul(a: &[C64], b: &[C64], k: usize) -> Vec<C64> {
    let mut out = vec![ZERO; k + 1];
    for (i, &x) in a.iter().enumerate().take(k + 1) {
        if x == ZERO {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(k + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn ser_apply_map(f: &HenonMap, z: &[C64], w: &[C64], k: usize) -> (Vec<C64>, Vec<C64>) {
    let mut z = z.to_vec();
    let mut w = w.to_vec();
    for fac in f.factors() {
        let c = fac.p.coeffs();
        let mut acc = vec![ZERO; k + 1];
        acc[0] = ONE;
        for &cj in c.iter().rev().skip(1) {
            acc = ser_mul(&acc, &z, k);
            acc[0] += cj;
        }
        let nz: Vec<C64> = (0..=k).map(|i| fac.a * w[i] + acc[i]).collect();
        let nw: Vec<C64> = (0..=k).map(|i| fac.a * z[i]).collect();
        z = nz;
        w = nw;
    }
    (z, w)
}

/// Parametrization ψ of the unstable manifold of a saddle with
/// fⁿ(ψ(t)) = ψ(Λ t), Λ the unstable multiplier of fⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableCurve {
    pub orbit: PeriodicOrbit,
    pub coeffs: Vec<Point>,
    pub truncation_order: usize,
    /// Radius r: the series is evaluated directly on |t| ≤ r/2 and stays
    /// accurate on |t| ≤ |Λ|·r/2 too.
    pub convergence_radius_estimate: f64,
}

impl UnstableCurve {
    pub fn lambda(&self) -> C64 {
        self.orbit.multipliers.0
    }

    pub fn period(&self) -> usize {
        self.orbit.period
    }

    pub fn saddle_point(&self) -> Point {
        self.coeffs[0]
    }

    pub fn series_s<S: Scalar>(&self, t: S) -> (S, S) {
        let mut z = S::from_c(self.coeffs.last().unwrap()[0]);
        let mut w = S::from_c(self.coeffs.last().unwrap()[1]);
        for c in self.coeffs.iter().rev().skip(1) {
            z = z * t + S::from_c(c[0]);
            w = w * t + S::from_c(c[1]);
        }
        (z, w)
    }

    /// Smallest m ≥ 0 with |t/Λ^m| ≤ r/2.
    pub fn pullback_depth(&self, t: C64) -> usize {
        let half = self.convergence_radius_estimate / 2.0;
        let l = self.lambda().norm();
        let mut m = 0;
        let mut s = t.norm();
        while s > half && m < 10_000 {
            s /= l;
            m += 1;
        }
        m
    }
}

fn residual_on_circle(f: &HenonMap, c: &UnstableCurve, radius: f64) -> f64 {
    let n = c.period();
    let lam = c.lambda();
    let mut worst = 0.0f64;
    for k in 0..50 {
        let t = C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / 50.0 + 0.1);
        let (z, w) = c.series_s(t);
        let y = f.iterate([z, w], n);
        let (z2, w2) = c.series_s(lam * t);
        worst = worst.max((y[0] - z2).norm().max((y[1] - w2).norm()));
    }
    worst
}

/// Series of order M for the unstable manifold of a saddle orbit.
pub fn unstable_series(f: &HenonMap, orbit: &PeriodicOrbit, order: usize) -> Result<UnstableCurve> {
    if !orbit.is_saddle() {
        return Err(LabError::InvalidInput("unstable series needs a saddle".into()));
    }
    if order == 0 {
        return Err(LabError::InvalidInput("order must be ≥ 1".into()));
    }
    let n = orbit.period;
    let p = orbit.points[0];
    let lam = orbit.multipliers.0;
    let a = f.differential_n(p, n);
    // unit eigenvector for λ_u, first nonzero coordinate real positive
    let v0 = [a[0][1], lam - a[0][0]];
    let v1 = [lam - a[1][1], a[1][0]];
    let v = if v0[0].norm() + v0[1].norm() >= v1[0].norm() + v1[1].norm() {
        v0
    } else {
        v1
    };
    let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if nv == 0.0 {
        return Err(LabError::Precondition("degenerate unstable eigenvector".into()));
    }
    let lead = if v[0].norm() > 1e-300 { v[0] } else { v[1] };
    let rot = lead.conj() / lead.norm();
    let e = [v[0] * rot / nv, v[1] * rot / nv];
    let mut zc = vec![p[0], e[0]];
    let mut wc = vec![p[1], e[1]];
    let mut lk = lam;
    for k in 2..=order {
        lk *= lam;
        zc.push(ZERO);
        wc.push(ZERO);
        let mut sz = zc.clone();
        let mut sw = wc.clone();
        for _ in 0..n {
            (sz, sw) = ser_apply_map(f, &sz, &sw, k);
        }
        let rhs = [sz[k], sw[k]];
        let m = [[lk - a[0][0], -a[0][1]], [-a[1][0], lk - a[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let cz = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
        let cw = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        if !cz.is_finite() || !cw.is_finite() || cz.norm() > 1e250 {
            return Err(LabError::Overflow(format!(
                "unstable series coefficient blow-up at order {k}"
            )));
        }
        zc[k] = cz;
        wc[k] = cw;
    }
    let coeffs: Vec<Point> = zc.iter().zip(wc.iter()).map(|(&z, &w)| [z, w]).collect();
    let scale = 1.0 + norm2(&p);
    // accuracy radius: tail coefficients times ρ^k stay below 1e-14·scale
    let lo = (order / 2).max(1);
    let mut r_acc = f64::INFINITY;
    let mut root_max = 0.0f64;
    for (k, c) in coeffs.iter().enumerate().skip(lo) {
        let m = norm2(c);
        if m > 0.0 {
            r_acc = r_acc.min((1e-14 * scale / m).powf(1.0 / k as f64));
            root_max = root_max.max(m.powf(1.0 / k as f64));
        }
    }
    if root_max > 0.0 {
        r_acc = r_acc.min(0.9 / root_max);
    }
    if !r_acc.is_finite() {
        // polynomial curve: any radius works, pick one on the scale of the filtration
        r_acc = f.filtration_radius();
    }
    let mut curve = UnstableCurve {
        orbit: orbit.clone(),
        coeffs,
        truncation_order: order,
        convergence_radius_estimate: 2.0 * r_acc / lam.norm().max(2.0),
    };
    for _ in 0..20 {
        let res = residual_on_circle(f, &curve, curve.convergence_radius_estimate / 2.0);
        if res < 1e-9 * scale {
            break;
        }
        curve.convergence_radius_estimate /= 2.0;
    }
    Ok(curve)
}

/// Adaptive construction: order 40, doubled until orders M and 2M agree on
/// |t| ≤ r/4 to 1e-9.
pub fn unstable_curve(f: &HenonMap, orbit: &PeriodicOrbit) -> Result<UnstableCurve> {
    let mut m = 40;
    loop {
        let c1 = unstable_series(f, orbit, m)?;
        let c2 = unstable_series(f, orbit, 2 * m)?;
        let r = c1.convergence_radius_estimate / 4.0;
        let mut worst = 0.0f64;
        for k in 0..32 {
            let t = C64::from_polar(r, k as f64 * 0.196);
            let a = c1.series_s(t);
            let b = c2.series_s(t);
            worst = worst.max((a.0 - b.0).norm().max((a.1 - b.1).norm()));
        }
        if worst < 1e-9 || m >= 160 {
            return Ok(c1);
        }
        m *= 2;
    }
}

/// ψ(t) for any t: pull back into the series disk, then push forward.
pub fn unstable_eval(f: &HenonMap, curve: &UnstableCurve, t: C64) -> Result<Point> {
    if !t.is_finite() {
        return Err(LabError::NonFinite);
    }
    let m = curve.pullback_depth(t);
    let s = t / curve.lambda().powi(m as i32);
    let (z, w) = curve.series_s(s);
    let y = f.iterate([z, w], m * curve.period());
    if !y[0].is_finite() || !y[1].is_finite() {
        return Err(LabError::Overflow(format!("unstable_eval at |t| = {}", t.norm())));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly1D;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn quad(a: f64, cst: f64) -> HenonMap {
        HenonMap::single(c(a, 0.0), Poly1D::from_real(&[cst, 0.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn fixed_points_closed_form() {
        let f = quad(0.3, 0.0);
        let s = find_periodic_orbits(&f, 1, &SearchBox::for_map(&f), 20, &NewtonOpts::default()).unwrap();
        assert_eq!(s.orbits.len(), 2);
        assert!((s.saturation - 1.0).abs() < 1e-12);
        // z² + (a² − 1) z = 0
        let zs: Vec<C64> = s.orbits.iter().map(|o| o.points[0][0]).collect();
        assert!(zs.iter().any(|z| z.norm() < 1e-12));
        let sad = s.saddles();
        assert_eq!(sad.len(), 1);
        let x = sad[0].points[0];
        assert!((x[0] - c(0.91, 0.0)).norm() < 1e-12);
        assert!((x[1] - c(0.273, 0.0)).norm() < 1e-12);
        // eigenvalues of [[1.82, 0.3], [0.3, 0]]
        let disc = (1.82f64 * 1.82 + 4.0 * 0.09).sqrt();
        let (lu, ls) = sad[0].multipliers;
        assert!((lu - c((1.82 + disc) / 2.0, 0.0)).norm() < 1e-12);
        assert!((ls - c((1.82 - disc) / 2.0, 0.0)).norm() < 1e-12);
        assert!((lu.re - 1.868).abs() < 1e-3 && (ls.re + 0.0482).abs() < 1e-4);
    }

    #[test]
    fn degenerate_map_has_one_dimensional_orbits() {
        // a = 0: fixed points (z, 0) with z² − z − 6 = 0, stable multiplier 0
        let f = quad(0.0, -6.0);
        let s = find_periodic_orbits(&f, 1, &SearchBox::for_map(&f), 4, &NewtonOpts::default()).unwrap();
        assert_eq!(s.orbits.len(), 2);
        for o in &s.orbits {
            let z = o.points[0][0];
            assert!((z * z - z - 6.0).norm() < 1e-12);
            assert_eq!(o.points[0][1], ZERO);
            assert!((o.multipliers.0 - 2.0 * z).norm() < 1e-12);
            assert_eq!(o.multipliers.1, ZERO);
        }
    }

    #[test]
    fn saddle_estimator_arithmetic() {
        let o = PeriodicOrbit {
            period: 2,
            points: vec![[ZERO, ZERO]; 2],
            multipliers: (c(4.0, 0.0), c(0.01, 0.0)),
            kind: OrbitType::Saddle,
        };
        let f = quad(0.1, 0.0);
        let e = chi_from_saddles(&f, &[o.clone()]).unwrap();
        assert!((e.chi_plus - 2f64.ln()).abs() < 1e-15);
        let mut o3 = o.clone();
        o3.period = 3;
        assert!(chi_from_saddles(&f, &[o, o3]).is_err());
        assert!(chi_from_saddles(&f, &[]).is_err());
    }

    #[test]
    fn first_order_series_is_eigenline() {
        let f = quad(0.3, 0.0);
        let o = default_saddle(&f).unwrap();
        let cv = unstable_series(&f, &o, 1).unwrap();
        let e = cv.coeffs[1];
        assert!(((e[0].norm_sqr() + e[1].norm_sqr()).sqrt() - 1.0).abs() < 1e-14);
        assert!(e[0].re > 0.0 && e[0].im.abs() < 1e-15);
        let t = c(1e-4, 0.0);
        let x = cv.series_s(t);
        let y = f.forward([x.0, x.1]);
        let z = cv.series_s(cv.lambda() * t);
        assert!((y[0] - z.0).norm() < 1e-6);
    }

    #[test]
    fn eval_at_zero_is_saddle() {
        let f = quad(0.2, -6.0);
        let o = default_saddle(&f).unwrap();
        let cv = unstable_curve(&f, &o).unwrap();
        assert_eq!(unstable_eval(&f, &cv, ZERO).unwrap(), o.points[0]);
    }

    #[test]
    fn horseshoe_period_two() {
        let f = quad(0.2, -6.0);
        let s = find_periodic_orbits(&f, 2, &SearchBox::for_map(&f), 16, &NewtonOpts::default()).unwrap();
        assert_eq!(s.fixed_points_found, 4);
        assert_eq!(s.saturation, 1.0);
        assert_eq!(s.orbits.len(), 1);
        let o = &s.orbits[0];
        let prod = o.multipliers.0 * o.multipliers.1;
        assert!((prod - c(0.04 * 0.04, 0.0)).norm() < 1e-12 * prod.norm());
        for i in 0..2 {
            let y = f.forward(o.points[i]);
            assert!(dist(&y, &o.points[(i + 1) % 2]) < 1e-10);
        }
    }

    #[test]
    fn horseshoe_period_six_saturates() {
        let f = quad(0.2, -6.0);
        let s = find_periodic_orbits(&f, 6, &SearchBox::for_map(&f), 0, &NewtonOpts::default()).unwrap();
        assert_eq!(s.fixed_points_found, 64);
        // 64 = 2 + 2·1 + 3·2 + 6·9
        assert_eq!(s.orbits.len(), 9);
        let e = chi_from_saddles(&f, &s.saddles()).unwrap();
        assert!((e.chi_plus + e.chi_minus - 0.04f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn series_orders_agree_and_residual_small() {
        for (a, cst) in [(0.3, 0.0), (0.2, -6.0)] {
            let f = quad(a, cst);
            let o = default_saddle(&f).unwrap();
            let c40 = unstable_series(&f, &o, 40).unwrap();
            let c20 = unstable_series(&f, &o, 20).unwrap();
            let r = c40.convergence_radius_estimate;
            for k in 0..16 {
                let t = C64::from_polar(r / 4.0, k as f64 * 0.39);
                let x = c40.series_s(t);
                let y = c20.series_s(t);
                assert!((x.0 - y.0).norm() < 1e-9 && (x.1 - y.1).norm() < 1e-9);
            }
            assert!(residual_on_circle(&f, &c40, r / 2.0) < 1e-8);
        }
    }

    #[test]
    fn serde_round_trip() {
        let f = quad(0.3, 0.0);
        let o = default_saddle(&f).unwrap();
        let s = serde_json::to_string(&o).unwrap();
        assert!(s.contains("\"type\":\"saddle\""));
        let back: PeriodicOrbit = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn orbits_close_up(a in 0.05f64..0.4, cst in -8.0f64..-5.0, n in 1usize..4) {
                let f = quad(a, cst);
                let s = find_periodic_orbits(&f, n, &SearchBox::for_map(&f), 0, &NewtonOpts::default()).unwrap();
                prop_assert!(s.saturation <= 1.0 + 1e-12);
                for o in &s.orbits {
                    prop_assert_eq!(o.points.len(), n);
                    for i in 0..n {
                        let y = f.forward(o.points[i]);
                        prop_assert!(dist(&y, &o.points[(i + 1) % n]) < 1e-10 * (1.0 + norm2(&y)));
                    }
                    let det = f.jacobian().powu(n as u32);
                    let prod = o.multipliers.0 * o.multipliers.1;
                    prop_assert!((prod - det).norm() <= 1e-10 * det.norm());
                }
            }

            #[test]
            fn unstable_eval_conjugates(a in 0.1f64..0.4, th in 0.0f64..6.28, frac in 0.1f64..3.0) {
                let f = quad(a, -6.0);
                let o = default_saddle(&f).unwrap();
                let cv = unstable_curve(&f, &o).unwrap();
                let t = C64::from_polar(frac * cv.convergence_radius_estimate, th);
                let x = unstable_eval(&f, &cv, t).unwrap();
                let y = unstable_eval(&f, &cv, cv.lambda() * t).unwrap();
                let fx = f.forward(x);
                prop_assert!(dist(&fx, &y) < 1e-8 * (1.0 + norm2(&y)));
            }
        }
    }
}
