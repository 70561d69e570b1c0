//! Unstable critical points: tangencies between an unstable curve and the
//! level sets of φ⁺, fiber counts over the φ⁺-plane, critical masses and
//! degree decompositions.
//!
//! Everything runs on L(t) = log φ⁺(ψ(t)), which is single valued up to 2πi
//! where ψ(t) lies in V_R⁺ and whose derivative is well defined wherever the
//! orbit of ψ(t) escapes. Zeros are isolated by box subdivision with
//! argument-principle counts.

use crate::error::{LabError, Result};
use crate::henon::{HenonMap, Point};
use crate::saddle::UnstableCurve;
use crate::scalar::{Jet, Scalar, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const TAU: f64 = 2.0 * PI;

fn wrap(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

/// A holomorphic log-coordinate t ↦ L(t) = log h(t) on part of the plane.
pub trait LogField: Sync {
    /// L with first and second derivatives, or None where it is unavailable.
    fn log_h(&self, t: C64) -> Option<Jet>;
    fn log_h_value(&self, t: C64) -> Option<C64>;
    /// Upper bound for Re L at points where `log_h` is None.
    fn invalid_bound(&self) -> f64;
}

/// Largest G⁺ on the torus |z| = |w| = R, which bounds G⁺ on the bidisk.
pub fn torus_green_max(f: &HenonMap) -> Result<f64> {
    let r = f.filtration_radius();
    let k = 48;
    let vals: Vec<f64> = (0..k * k)
        .into_par_iter()
        .map(|i| {
            let a = TAU * (i / k) as f64 / k as f64;
            let b = TAU * (i % k) as f64 / k as f64;
            f.green_plus([C64::from_polar(r, a), C64::from_polar(r, b)])
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max) * 1.02)
}

/// L along an unstable curve.
pub struct CurveField<'a> {
    f: &'a HenonMap,
    curve: &'a UnstableCurve,
    d: f64,
    extra: usize,
    bound: f64,
}

impl<'a> CurveField<'a> {
    pub fn new(f: &'a HenonMap, curve: &'a UnstableCurve, torus_max: f64, extra: usize) -> Self {
        let d = f.degree() as f64;
        CurveField {
            f,
            curve,
            d,
            extra,
            bound: torus_max / d.powi(extra as i32),
        }
    }

    fn eval<S: Scalar>(&self, t: C64, seed: impl Fn(C64, C64) -> S) -> Option<S> {
        let lam = self.curve.lambda();
        let m = self.curve.pullback_depth(t);
        let lm = lam.powi(m as i32);
        let (mut z, mut w) = self.curve.series_s(seed(t / lm, ONE / lm));
        let steps = m * self.curve.period();
        for i in 0..steps {
            if z.value().norm() > 1e30 {
                return self.finish(z, w, (steps - i) as i32);
            }
            (z, w) = self.f.forward_s(z, w);
        }
        for k in 0..=self.extra {
            let (zv, wv) = (z.value(), w.value());
            if !zv.is_finite() || !wv.is_finite() {
                return None;
            }
            if self.f.in_escape_region([zv, wv]) {
                return self.finish(z, w, -(k as i32));
            }
            (z, w) = self.f.forward_s(z, w);
        }
        None
    }

    fn finish<S: Scalar>(&self, z: S, w: S, pow: i32) -> Option<S> {
        if !self.f.in_escape_region([z.value(), w.value()]) {
            return None;
        }
        let l = self.f.log_bottcher_s(z, w).scale(C64::new(self.d.powi(pow), 0.0));
        l.value().is_finite().then_some(l)
    }

    pub fn point(&self, t: C64) -> Result<Point> {
        crate::saddle::unstable_eval(self.f, self.curve, t)
    }
}

impl LogField for CurveField<'_> {
    fn log_h(&self, t: C64) -> Option<Jet> {
        self.eval(t, |s, ds| Jet::new(s, ds, ZERO)).filter(|j| j.is_finite())
    }

    fn log_h_value(&self, t: C64) -> Option<C64> {
        self.eval(t, |s, _| s)
    }

    fn invalid_bound(&self) -> f64 {
        self.bound
    }
}

/// L along the image f^N of a horizontal line {w = w₀}:
/// t ↦ log φ⁺(f^N(t, w₀)) = d^N·log φ⁺(t, w₀).
pub struct LineField<'a> {
    f: &'a HenonMap,
    w0: C64,
    iterations: usize,
    d: f64,
    max_escape: usize,
    bound: f64,
}

impl<'a> LineField<'a> {
    pub fn new(f: &'a HenonMap, w0: C64, iterations: usize, torus_max: f64) -> Self {
        let d = f.degree() as f64;
        let max_escape = iterations + 40;
        LineField {
            f,
            w0,
            iterations,
            d,
            max_escape,
            bound: torus_max * d.powi(iterations as i32) / d.powi(max_escape as i32),
        }
    }

    fn eval<S: Scalar>(&self, z: S) -> Option<S> {
        let mut z = z;
        let mut w = S::from_c(self.w0);
        for k in 0..=self.max_escape {
            let (zv, wv) = (z.value(), w.value());
            if !zv.is_finite() || !wv.is_finite() {
                return None;
            }
            if self.f.in_escape_region([zv, wv]) {
                let pow = self.iterations as i32 - k as i32;
                let l = self.f.log_bottcher_s(z, w).scale(C64::new(self.d.powi(pow), 0.0));
                return l.value().is_finite().then_some(l);
            }
            (z, w) = self.f.forward_s(z, w);
        }
        None
    }
}

impl LogField for LineField<'_> {
    fn log_h(&self, t: C64) -> Option<Jet> {
        self.eval(Jet::variable(t)).filter(|j| j.is_finite())
    }

    fn log_h_value(&self, t: C64) -> Option<C64> {
        self.eval(t)
    }

    fn invalid_bound(&self) -> f64 {
        self.bound
    }
}

/// A region of the φ⁺-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// lo ≤ log|ζ| < hi.
    Annulus { lo: f64, hi: f64 },
    /// lo ≤ log|ζ| < hi and θ0 ≤ arg ζ < θ1 (angles taken mod 2π from θ0).
    Sector { lo: f64, hi: f64, theta0: f64, theta1: f64 },
    /// Axis-aligned square.
    Square { center: C64, side: f64 },
}

impl Region {
    /// {A ≤ G⁺ < dA}.
    pub fn fundamental(a: f64, d: usize) -> Self {
        Region::Annulus { lo: a, hi: a * d as f64 }
    }

    /// k consecutive fundamental annuli starting at A.
    pub fn annuli(a: f64, d: usize, k: u32) -> Self {
        Region::Annulus {
            lo: a,
            hi: a * (d as f64).powi(k as i32),
        }
    }

    /// Largest square of the fundamental annulus centred on the ray
    /// arg ζ = qπ/2, q ∈ {0, 1, 2, 3}, with its inner edge on |ζ| = e^A.
    pub fn quadrant(a: f64, d: usize, q: usize) -> Self {
        let r1 = a.exp();
        let r2 = (a * d as f64).exp();
        // outer corners on |ζ| = r2: (r1 + s)² + (s/2)² = r2²
        let side = (-2.0 * r1 + (4.0 * r1 * r1 - 5.0 * (r1 * r1 - r2 * r2)).sqrt()) / 2.5;
        let dir = C64::from_polar(1.0, q as f64 * PI / 2.0);
        Region::Square {
            center: dir * (r1 + side / 2.0),
            side,
        }
    }

    pub fn g_range(&self) -> (f64, f64) {
        match *self {
            Region::Annulus { lo, hi } | Region::Sector { lo, hi, .. } => (lo, hi),
            Region::Square { center, side } => {
                let h = side / 2.0;
                let cx = 0f64.clamp(center.re - h, center.re + h);
                let cy = 0f64.clamp(center.im - h, center.im + h);
                let min = C64::new(cx, cy).norm();
                let max = [(-h, -h), (h, -h), (h, h), (-h, h)]
                    .iter()
                    .map(|&(x, y)| (center + C64::new(x, y)).norm())
                    .fold(min, f64::max);
                (min.max(1e-300).ln(), max.ln())
            }
        }
    }

    pub fn contains(&self, zeta: C64) -> bool {
        match *self {
            Region::Annulus { lo, hi } => {
                let g = zeta.norm().ln();
                g >= lo && g < hi
            }
            Region::Sector { lo, hi, theta0, theta1 } => {
                let g = zeta.norm().ln();
                let th = (zeta.arg() - theta0).rem_euclid(TAU);
                g >= lo && g < hi && th < theta1 - theta0
            }
            Region::Square { center, side } => {
                let h = side / 2.0;
                (zeta.re - center.re).abs() <= h && (zeta.im - center.im).abs() <= h
            }
        }
    }

    /// The Q^δ shrink: δ is a fraction of the side (log side for sectors).
    pub fn shrink(&self, delta: f64) -> Region {
        match *self {
            Region::Annulus { lo, hi } => {
                let e = delta * (hi - lo);
                Region::Annulus { lo: lo + e, hi: hi - e }
            }
            Region::Sector { lo, hi, theta0, theta1 } => {
                let e = delta * (hi - lo);
                let a = delta * (theta1 - theta0);
                Region::Sector {
                    lo: lo + e,
                    hi: hi - e,
                    theta0: theta0 + a,
                    theta1: theta1 - a,
                }
            }
            Region::Square { center, side } => Region::Square {
                center,
                side: side * (1.0 - 2.0 * delta),
            },
        }
    }

    fn simply_connected(&self) -> bool {
        match *self {
            Region::Annulus { .. } => false,
            Region::Sector { theta0, theta1, .. } => theta1 - theta0 < TAU,
            Region::Square { center, side } => {
                let h = side / 2.0;
                !(center.re.abs() < h && center.im.abs() < h)
            }
        }
    }

    /// Log-coordinate u = log ζ at position s ∈ [0, 1] along the boundary loop,
    /// traversed counterclockwise.
    fn boundary_log(&self, s: f64) -> C64 {
        let s = s.rem_euclid(1.0);
        let side = (s * 4.0).floor() as usize;
        let r = s * 4.0 - side as f64;
        match *self {
            Region::Sector { lo, hi, theta0, theta1 } => {
                let corners = [
                    C64::new(lo, theta0),
                    C64::new(hi, theta0),
                    C64::new(hi, theta1),
                    C64::new(lo, theta1),
                ];
                let a = corners[side % 4];
                let b = corners[(side + 1) % 4];
                a + (b - a) * r
            }
            Region::Square { center, side: sd } => {
                let h = sd / 2.0;
                let corners = [
                    center + C64::new(-h, -h),
                    center + C64::new(h, -h),
                    center + C64::new(h, h),
                    center + C64::new(-h, h),
                ];
                let a = corners[side % 4];
                let b = corners[(side + 1) % 4];
                (a + (b - a) * r).ln()
            }
            Region::Annulus { lo, .. } => C64::new(lo, TAU * s),
        }
    }

    /// An interior point, used as a generic base fiber.
    pub fn generic_point(&self) -> C64 {
        match *self {
            Region::Annulus { lo, hi } => C64::from_polar((lo + 0.37 * (hi - lo)).exp(), 0.61),
            Region::Sector { lo, hi, theta0, theta1 } => {
                C64::from_polar((lo + 0.41 * (hi - lo)).exp(), theta0 + 0.53 * (theta1 - theta0))
            }
            Region::Square { center, side } => center + C64::new(0.13 * side, -0.07 * side),
        }
    }
}

/// A zero found by the box search: a tangency or a fiber point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub t: C64,
    pub multiplicity: usize,
    pub l: Jet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Job {
    Critical,
    Fiber(C64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOpts {
    /// Initial boxes per side.
    pub grid: usize,
    pub edge_points: usize,
    pub max_depth: usize,
    pub floor: f64,
    /// Nodes per side of the grid used to trace the truncation component.
    pub flood_grid: usize,
    /// Extra forward iterations allowed to reach V_R⁺ past ψ(t).
    pub extra_iterations: usize,
    /// Fraction of the escape level used for the truncation level.
    pub level_fraction: f64,
}

impl Default for SearchOpts {
    fn default() -> Self {
        SearchOpts {
            grid: 8,
            edge_points: 64,
            max_depth: 12,
            floor: 1e-10,
            flood_grid: 193,
            extra_iterations: 8,
            level_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Square {
    c: C64,
    h: f64,
}

impl Square {
    fn contains(&self, t: C64) -> bool {
        (t.re - self.c.re).abs() <= self.h && (t.im - self.c.im).abs() <= self.h
    }

    fn children(&self) -> [Square; 4] {
        let q = self.h / 2.0;
        [
            Square { c: self.c + C64::new(-q, -q), h: q },
            Square { c: self.c + C64::new(q, -q), h: q },
            Square { c: self.c + C64::new(-q, q), h: q },
            Square { c: self.c + C64::new(q, q), h: q },
        ]
    }

    fn boundary(&self, e: usize) -> Vec<C64> {
        let h = self.h;
        let corners = [
            self.c + C64::new(-h, -h),
            self.c + C64::new(h, -h),
            self.c + C64::new(h, h),
            self.c + C64::new(-h, h),
        ];
        let mut out = Vec::with_capacity(4 * e);
        for s in 0..4 {
            let a = corners[s];
            let b = corners[(s + 1) % 4];
            for k in 0..e {
                out.push(a + (b - a) * (k as f64 / e as f64));
            }
        }
        out
    }
}

/// Covers [−r, r]² with edges off the coordinate axes, where real maps put
/// their zeros.
fn root_square(r: f64) -> Square {
    Square {
        c: C64::new(0.0123, 0.0171) * r,
        h: 1.0312 * r,
    }
}

struct Searcher<'a, F: LogField> {
    field: &'a F,
    job: Job,
    g_lo: f64,
    g_hi: f64,
    opts: SearchOpts,
    keep: &'a (dyn Fn(&Square) -> bool + Sync),
}

enum Outcome {
    Prune,
    Split,
    Found(Zero),
}

impl<F: LogField> Searcher<'_, F> {
    fn run(&self, root: Square) -> Result<Vec<Zero>> {
        let n = self.opts.grid.max(1);
        let side = 2.0 * root.h / n as f64;
        let boxes: Vec<Square> = (0..n * n)
            .map(|i| Square {
                c: root.c + C64::new(-root.h + side * ((i % n) as f64 + 0.5), -root.h + side * ((i / n) as f64 + 0.5)),
                h: side / 2.0,
            })
            .collect();
        let parts: Vec<Vec<Zero>> = boxes
            .par_iter()
            .map(|b| {
                let mut out = Vec::new();
                self.visit(*b, 0, &mut out)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut all: Vec<Zero> = Vec::new();
        for z in parts.into_iter().flatten() {
            if !all.iter().any(|y| (y.t - z.t).norm() < 1e-9 * (1.0 + z.t.norm())) {
                all.push(z);
            }
        }
        all.sort_by(|a, b| a.t.re.total_cmp(&b.t.re).then(a.t.im.total_cmp(&b.t.im)));
        Ok(all)
    }

    fn visit(&self, b: Square, depth: usize, out: &mut Vec<Zero>) -> Result<()> {
        if !(self.keep)(&b) {
            return Ok(());
        }
        match self.classify(&b, depth)? {
            Outcome::Prune => Ok(()),
            Outcome::Found(z) => {
                out.push(z);
                Ok(())
            }
            Outcome::Split => {
                if depth >= self.opts.max_depth || 2.0 * b.h < self.opts.floor {
                    return Err(LabError::Subdivision {
                        re: b.c.re,
                        im: b.c.im,
                        side: 2.0 * b.h,
                    });
                }
                for c in b.children() {
                    self.visit(c, depth + 1, out)?;
                }
                Ok(())
            }
        }
    }

    fn classify(&self, b: &Square, depth: usize) -> Result<Outcome> {
        let pts = b.boundary(self.opts.edge_points);
        let vals: Vec<Option<Jet>> = pts.iter().map(|&t| self.field.log_h(t)).collect();
        let bound = self.field.invalid_bound();
        let gmax = vals
            .iter()
            .map(|v| v.map_or(bound, |j| j.v.re))
            .fold(f64::NEG_INFINITY, f64::max);
        if gmax < self.g_lo * (1.0 - 1e-9) {
            return Ok(Outcome::Prune);
        }
        if vals.iter().any(|v| v.is_none()) {
            return Ok(Outcome::Split);
        }
        let js: Vec<Jet> = vals.into_iter().map(|v| v.unwrap()).collect();
        let m = js.len();
        let dt: Vec<C64> = (0..m).map(|k| (pts[(k + 1) % m] - pts[(k + m - 1) % m]) * 0.5).collect();
        let i2pi = C64::new(0.0, TAU);
        // no K⁺ inside: the flux of G⁺ through the boundary vanishes
        let flux: C64 = js.iter().zip(&dt).map(|(j, &d)| j.d1 * d).sum::<C64>() / i2pi;
        if flux.norm() > 0.1 {
            return Ok(Outcome::Split);
        }
        let gmin = js.iter().map(|j| j.v.re).fold(f64::INFINITY, f64::min);
        if gmin > self.g_hi * (1.0 + 1e-9) {
            return Ok(Outcome::Prune);
        }
        let (fv, lg): (Vec<C64>, Vec<C64>) = match self.job {
            Job::Critical => js.iter().map(|j| (j.d1, j.d2 / j.d1)).unzip(),
            Job::Fiber(zeta) => js
                .iter()
                .map(|j| {
                    let e = zeta * (-j.v).exp();
                    let fval = ONE - e;
                    (fval, e * j.d1 / fval)
                })
                .unzip(),
        };
        if fv.iter().any(|v| !v.is_finite() || v.norm() == 0.0) || lg.iter().any(|v| !v.is_finite()) {
            return Ok(Outcome::Split);
        }
        let trap: C64 = lg.iter().zip(&dt).map(|(g, &d)| g * d).sum::<C64>() / i2pi;
        let argsum: f64 = (0..m).map(|k| wrap((fv[(k + 1) % m] / fv[k]).arg())).sum::<f64>() / TAU;
        let n = argsum.round();
        if (trap.re - n).abs() > 0.1 || trap.im.abs() > 0.1 || (argsum - n).abs() > 1e-6 {
            return Ok(Outcome::Split);
        }
        if n < 0.5 {
            return Ok(Outcome::Prune);
        }
        let n = n as usize;
        if let Some(t) = self.newton(b.c, n, b.h) {
            if b.contains(t) && n == 1 {
                let l = self.field.log_h(t).ok_or(LabError::NonFinite)?;
                return Ok(Outcome::Found(Zero { t, multiplicity: 1, l }));
            }
            let eps = (1e-4 * b.h).max(1e-8 * (1.0 + t.norm()));
            let tight = self.winding(t, eps) == Some(n as i64);
            if b.contains(t) && (tight || depth >= self.opts.max_depth) {
                let l = self.field.log_h(t).ok_or(LabError::NonFinite)?;
                return Ok(Outcome::Found(Zero { t, multiplicity: n, l }));
            }
        }
        Ok(Outcome::Split)
    }

    /// Zeros of the job's function inside the circle |t − c| = r, by argument sum.
    fn winding(&self, c: C64, r: f64) -> Option<i64> {
        let m = 256;
        let vals: Option<Vec<C64>> = (0..m)
            .map(|k| {
                let j = self.field.log_h(c + C64::from_polar(r, TAU * k as f64 / m as f64))?;
                Some(match self.job {
                    Job::Critical => j.d1,
                    Job::Fiber(zeta) => ONE - zeta * (-j.v).exp(),
                })
            })
            .collect();
        let vals = vals?;
        if vals.iter().any(|v| !(v.norm() > 0.0) || !v.is_finite()) {
            return None;
        }
        let s: f64 = (0..m).map(|k| wrap((vals[(k + 1) % m] / vals[k]).arg())).sum::<f64>() / TAU;
        ((s - s.round()).abs() < 1e-6).then_some(s.round() as i64)
    }

    /// Newton for the job's function, with the multiplicity-aware step.
    fn newton(&self, start: C64, mult: usize, h: f64) -> Option<C64> {
        let mut t = start;
        let tol = (1e-9 * h).max(1e-14 * (1.0 + t.norm()));
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            let j = self.field.log_h(t)?;
            let step = match self.job {
                Job::Critical => j.d1 / j.d2 * mult as f64,
                Job::Fiber(zeta) => {
                    let mut diff = j.v - zeta.ln();
                    diff.im = wrap(diff.im);
                    diff / j.d1 * mult as f64
                }
            };
            if step.norm() == 0.0 || (!step.is_finite() && j.d1.norm() == 0.0 && self.job == Job::Critical) {
                return Some(t);
            }
            if !step.is_finite() {
                return None;
            }
            t -= step;
            let sn = step.norm();
            // stop on tolerance or once roundoff makes the steps stall
            if sn < tol || (sn < 1e-6 * h && sn >= 0.5 * last) {
                return Some(t);
            }
            last = sn;
        }
        None
    }
}

/// Minimax-path levels from t = 0 over a grid on [−ρ, ρ]².
#[derive(Debug, Clone)]
struct Flood {
    n: usize,
    rho: f64,
    cost: Vec<f64>,
}

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl Flood {
    fn build<F: LogField>(field: &F, rho: f64, n: usize) -> Flood {
        let n = n | 1;
        let step = 2.0 * rho / (n - 1) as f64;
        let bound = field.invalid_bound();
        let g: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|i| {
                let t = C64::new(-rho + step * (i % n) as f64, -rho + step * (i / n) as f64);
                field.log_h_value(t).map_or(bound, |l| l.re.max(0.0))
            })
            .collect();
        let mut cost = vec![f64::INFINITY; n * n];
        let c = (n / 2) * n + n / 2;
        cost[c] = g[c];
        let mut heap = BinaryHeap::new();
        heap.push(Node(g[c], c));
        while let Some(Node(v, i)) = heap.pop() {
            if v > cost[i] {
                continue;
            }
            let (x, y) = (i % n, i / n);
            let nb = [
                (x > 0).then(|| i - 1),
                (x + 1 < n).then(|| i + 1),
                (y > 0).then(|| i - n),
                (y + 1 < n).then(|| i + n),
            ];
            for j in nb.into_iter().flatten() {
                let nv = v.max(g[j]);
                if nv < cost[j] {
                    cost[j] = nv;
                    heap.push(Node(nv, j));
                }
            }
        }
        Flood { n, rho, cost }
    }

    fn node_t(&self, i: usize) -> C64 {
        let step = 2.0 * self.rho / (self.n - 1) as f64;
        C64::new(-self.rho + step * (i % self.n) as f64, -self.rho + step * (i / self.n) as f64)
    }

    /// Lowest level at which the sublevel component of 0 reaches |t| = ρ.
    fn escape_level(&self) -> f64 {
        let band = self.rho * (1.0 - 1.5 / self.n as f64);
        (0..self.cost.len())
            .filter(|&i| self.node_t(i).norm() >= band)
            .map(|i| self.cost[i])
            .fold(f64::INFINITY, f64::min)
    }

    fn index_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let step = 2.0 * self.rho / (self.n - 1) as f64;
        let a = ((lo + self.rho) / step).floor().max(0.0) as usize;
        let b = (((hi + self.rho) / step).ceil().max(0.0) as usize).min(self.n - 1);
        (a.min(self.n - 1), b)
    }

    fn inside(&self, t: C64, level: f64) -> bool {
        let (x0, x1) = self.index_range(t.re, t.re);
        let (y0, y1) = self.index_range(t.im, t.im);
        (y0..=y1).any(|y| (x0..=x1).any(|x| self.cost[y * self.n + x] < level))
    }

    fn touches(&self, b: &Square, level: f64) -> bool {
        let (x0, x1) = self.index_range(b.c.re - b.h, b.c.re + b.h);
        let (y0, y1) = self.index_range(b.c.im - b.h, b.c.im + b.h);
        (y0..=y1).any(|y| (x0..=x1).any(|x| self.cost[y * self.n + x] < level))
    }
}

/// How the unstable curve is cut to a finite piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    /// The component of {G⁺∘ψ < level} containing t = 0; it lies inside |t| < ρ.
    Component { level: f64 },
    /// The disk |t| ≤ ρ, used when the component of 0 is unbounded at useful levels.
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalDatum {
    pub t: C64,
    pub location: Point,
    pub green_value: f64,
    pub multiplicity: usize,
    pub fiber_value: C64,
}

/// Shared state for tangency computations on one truncated curve.
pub struct CurveContext<'a> {
    pub f: &'a HenonMap,
    pub curve: &'a UnstableCurve,
    pub rho: f64,
    pub opts: SearchOpts,
    /// Fundamental annulus parameter A.
    pub a: f64,
    pub torus_max: f64,
    pub truncation: Truncation,
    /// Minimax level at which the sublevel component of t = 0 reaches |t| = ρ.
    pub escape_level: f64,
    field: CurveField<'a>,
    flood: Flood,
}

impl<'a> CurveContext<'a> {
    /// Builds the context; `a` defaults to 1.1·(max G⁺ on the filtration torus).
    pub fn new(f: &'a HenonMap, curve: &'a UnstableCurve, rho: f64, a: Option<f64>, opts: SearchOpts) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(LabError::InvalidInput(format!("rho must be positive, got {rho}")));
        }
        let torus_max = torus_green_max(f)?;
        let a = a.unwrap_or(1.1 * torus_max);
        let field = CurveField::new(f, curve, torus_max, opts.extra_iterations);
        let flood = Flood::build(&field, rho, opts.flood_grid);
        let d = f.degree() as f64;
        let escape_level = flood.escape_level();
        let top = opts.level_fraction * escape_level;
        let truncation = if top >= d * d * a {
            let k = (top / a).ln() / d.ln();
            Truncation::Component {
                level: a * d.powi(k.floor() as i32),
            }
        } else {
            Truncation::Disk
        };
        Ok(CurveContext {
            f,
            curve,
            rho,
            opts,
            a,
            torus_max,
            truncation,
            escape_level,
            field,
            flood,
        })
    }

    pub fn field(&self) -> &CurveField<'a> {
        &self.field
    }

    pub fn degree(&self) -> usize {
        self.f.degree()
    }

    pub fn fundamental(&self) -> Region {
        Region::fundamental(self.a, self.degree())
    }

    pub fn in_truncation(&self, t: C64) -> bool {
        match self.truncation {
            Truncation::Component { level } => self.flood.inside(t, level),
            Truncation::Disk => t.norm() <= self.rho,
        }
    }

    fn check_region(&self, region: &Region) -> Result<()> {
        let (lo, hi) = region.g_range();
        if let Truncation::Component { level } = self.truncation {
            if hi >= level {
                return Err(LabError::Precondition(format!(
                    "region reaches G = {hi:.4}, too close to the truncation level {level:.4}; increase rho"
                )));
            }
        }
        if !matches!(region, Region::Annulus { .. }) && lo < self.torus_max {
            return Err(LabError::Precondition(format!(
                "fiber values need G ≥ {:.4}, region starts at {lo:.4}",
                self.torus_max
            )));
        }
        Ok(())
    }

    fn search(&self, job: Job, g_lo: f64, g_hi: f64) -> Result<Vec<Zero>> {
        let keep = |b: &Square| match self.truncation {
            Truncation::Component { level } => self.flood.touches(b, level),
            Truncation::Disk => b.c.norm() <= self.rho + b.h * 2f64.sqrt(),
        };
        let s = Searcher {
            field: &self.field,
            job,
            g_lo,
            g_hi,
            opts: self.opts,
            keep: &keep,
        };
        let zs = s.run(root_square(self.rho))?;
        Ok(zs.into_iter().filter(|z| self.in_truncation(z.t)).collect())
    }

    fn datum(&self, z: &Zero) -> Result<CriticalDatum> {
        Ok(CriticalDatum {
            t: z.t,
            location: self.field.point(z.t)?,
            green_value: z.l.v.re,
            multiplicity: z.multiplicity,
            fiber_value: z.l.v.exp(),
        })
    }

    /// Tangencies of the truncated curve with φ⁺-fibers whose value lies in the region.
    pub fn tangencies(&self, region: &Region) -> Result<Vec<CriticalDatum>> {
        self.check_region(region)?;
        let (lo, hi) = region.g_range();
        let zs = self.search(Job::Critical, lo, hi)?;
        zs.iter()
            .filter(|z| region.contains(z.l.v.exp()))
            .map(|z| self.datum(z))
            .collect()
    }

    /// Points of the truncation with φ⁺(ψ(t)) = ζ.
    pub fn fiber_points(&self, zeta: C64) -> Result<Vec<Zero>> {
        let g = zeta.norm().ln();
        if g < self.torus_max {
            return Err(LabError::Precondition(format!(
                "fiber |ζ| = e^{g:.4} below the single-valued range e^{:.4}",
                self.torus_max
            )));
        }
        self.search(Job::Fiber(zeta), g, g)
    }

    /// Fiber count at ζ, resampling the argument when the fiber is not transverse.
    pub fn slice_count(&self, zeta: C64) -> Result<SliceCount> {
        let mut z = zeta;
        for attempt in 0..8 {
            let pts = self.fiber_points(z)?;
            let transverse = pts
                .iter()
                .all(|p| p.multiplicity == 1 && p.l.d1.norm() * (1.0 + p.t.norm()) > 1e-6);
            if transverse {
                return Ok(SliceCount {
                    count: pts.len() as u64,
                    zeta: z,
                    resampled: attempt,
                });
            }
            z *= C64::from_polar(1.0, 0.618_033_988 * (attempt + 1) as f64);
        }
        Err(LabError::NoConvergence {
            what: "transverse fiber for slice count".into(),
            iterations: 8,
        })
    }

    /// Continues t along L(t) = u(s) for s ∈ [0, 1]; returns the endpoint and
    /// whether the path left |t| ≤ ρ.
    fn lift(&self, t0: C64, u: &dyn Fn(f64) -> C64) -> Result<(C64, bool)> {
        let mut t = t0;
        let mut s = 0.0f64;
        let mut ds = 1.0f64 / 64.0;
        let mut left = t.norm() > self.rho;
        while s < 1.0 {
            let s1 = (s + ds).min(1.0);
            let target = u(s1);
            let j = self.field.log_h(t).ok_or(LabError::NonFinite)?;
            let mut du = target - j.v;
            du.im = wrap(du.im);
            let pred = t + du / j.d1;
            let mut y = pred;
            let mut ok = false;
            for _ in 0..12 {
                let Some(jy) = self.field.log_h(y) else { break };
                let mut r = jy.v - target;
                r.im = wrap(r.im);
                let step = r / jy.d1;
                if !step.is_finite() {
                    break;
                }
                y -= step;
                if step.norm() < 1e-13 * (1.0 + y.norm()) {
                    ok = true;
                    break;
                }
            }
            let moved = (pred - t).norm();
            if ok && (y - pred).norm() <= 0.25 * moved.max(1e-300) + 1e-12 * (1.0 + y.norm()) {
                t = y;
                s = s1;
                left |= t.norm() > self.rho;
                ds = (ds * 1.5).min(1.0 / 16.0);
            } else {
                ds /= 2.0;
                if ds < 1e-10 {
                    return Err(LabError::NoConvergence {
                        what: "fiber path lifting".into(),
                        iterations: 0,
                    });
                }
            }
        }
        Ok((t, left))
    }

    /// Degree decomposition of the truncated curve over a simply connected region.
    pub fn decompose(&self, q: &Region, delta: f64) -> Result<DecompositionReport> {
        if !q.simply_connected() {
            return Err(LabError::InvalidInput("decomposition needs a simply connected region".into()));
        }
        let mut region = q.shrink(delta);
        let mut shrink = delta;
        let mut tries = 0;
        let crit = loop {
            self.check_region(&region)?;
            let crit = self.tangencies(&region)?;
            let mut near = false;
            for c in &crit {
                let u = c.fiber_value.ln();
                for k in 0..512 {
                    let b = region.boundary_log(k as f64 / 512.0);
                    let mut dd = u - b;
                    dd.im = wrap(dd.im);
                    if dd.norm() < 1e-6 {
                        near = true;
                    }
                }
            }
            if !near || tries >= 4 {
                break crit;
            }
            tries += 1;
            shrink *= 2.0;
            region = q.shrink(shrink);
        };
        let base_s = 0.1;
        let base = region.boundary_log(base_s).exp();
        let fibers = self.fiber_points(base)?;
        let pts: Vec<C64> = fibers.iter().map(|z| z.t).collect();
        let total = pts.len();
        if total == 0 {
            return Err(LabError::Precondition("no fiber points over the base point".into()));
        }
        let loop_u = |s: f64| region.boundary_log(base_s + s);
        let find = |t: C64| pts.iter().position(|p| (p - t).norm() < 1e-6 * (1.0 + t.norm()));
        let mut seen = vec![false; total];
        let mut comps = Vec::new();
        let mut clipped = 0usize;
        for i in 0..total {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            let mut k = 1usize;
            let mut cur = pts[i];
            let mut cl = false;
            let mut guard = 0;
            loop {
                let (end, left) = self.lift(cur, &loop_u)?;
                cl |= left;
                guard += 1;
                if guard > 4 * total + 64 {
                    return Err(LabError::NoConvergence {
                        what: "boundary monodromy cycle".into(),
                        iterations: guard,
                    });
                }
                match find(end) {
                    Some(j) if j == i => break,
                    Some(j) => {
                        if seen[j] {
                            return Err(LabError::Anomaly("monodromy is not a permutation".into()));
                        }
                        seen[j] = true;
                        k += 1;
                        cur = pts[j];
                    }
                    None => {
                        cl = true;
                        cur = end;
                    }
                }
            }
            if cl {
                clipped += 1;
            } else {
                comps.push(k);
            }
        }
        comps.sort_unstable();
        let n = total as f64;
        let components: Vec<ComponentDegree> = comps
            .iter()
            .map(|&k| ComponentDegree {
                degree: k,
                slice_weight: k as f64 / n,
            })
            .collect();
        let slice_total = components.iter().map(|c| c.slice_weight).sum();
        let tangency_mass = comps.iter().map(|&k| (k - 1) as f64).sum::<f64>() / n;
        let direct: usize = crit.iter().map(|c| c.multiplicity).sum();
        Ok(DecompositionReport {
            square: region,
            components,
            tangency_mass,
            slice_total,
            slice_count: total as u64,
            clipped,
            rho: self.rho,
            tangency_count: direct,
        })
    }
}

impl CurveContext<'_> {
    /// Degrees of the components of {G⁺∘ψ < g} that meet at a tangency of
    /// level g, one per descent direction. The degree of a component is the
    /// number of turns of a level circle just below g lifted along its boundary.
    pub fn child_masses(&self, datum: &CriticalDatum, max_turns: usize) -> Result<Vec<usize>> {
        let j = self.field.log_h(datum.t).ok_or(LabError::NonFinite)?;
        let m = datum.multiplicity;
        // leading term of L − L(t*) is c·(t − t*)^(m+1); use the local model
        // to step a fixed relative depth below g
        let target = datum.green_value * 1e-3;
        let mut c = j.d2 / 2.0;
        if m > 1 || c.norm() < 1e-300 {
            // higher order: estimate c from a small circle
            let r = 1e-4 * (1.0 + datum.t.norm());
            let v = self.field.log_h_value(datum.t + r).ok_or(LabError::NonFinite)?;
            c = (v - j.v) / r.powi(m as i32 + 1);
        }
        let k = (m + 1) as f64;
        let radius = (target / c.norm()).powf(1.0 / k);
        let mut out = Vec::with_capacity(m + 1);
        for dir in 0..=m {
            // Re(c·e^{ikθ}) = −|c| along the descent rays
            let theta = (PI - c.arg() + TAU * dir as f64) / k;
            let mut t0 = datum.t + C64::from_polar(radius, theta);
            // settle onto the real level g(1 − 1e-3) along the gradient
            let level = datum.green_value - target;
            for _ in 0..20 {
                let jt = self.field.log_h(t0).ok_or(LabError::NonFinite)?;
                let err = jt.v.re - level;
                let step = err * jt.d1.conj() / jt.d1.norm_sqr();
                t0 -= step;
                if step.norm() < 1e-13 * (1.0 + t0.norm()) {
                    break;
                }
            }
            let u0 = self.field.log_h(t0).ok_or(LabError::NonFinite)?.v;
            let circle = |s: f64| u0 + C64::new(0.0, TAU * s);
            let mut cur = t0;
            let mut turns = 0;
            loop {
                let (end, _) = self.lift(cur, &circle)?;
                turns += 1;
                if (end - t0).norm() < 1e-6 * (radius + 1e-6 * (1.0 + t0.norm())) {
                    break;
                }
                if turns >= max_turns {
                    return Err(LabError::NoConvergence {
                        what: "sublevel component degree".into(),
                        iterations: turns,
                    });
                }
                cur = end;
            }
            out.push(turns);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCount {
    pub count: u64,
    /// The fiber actually used after any resampling.
    pub zeta: C64,
    pub resampled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentDegree {
    pub degree: usize,
    pub slice_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// The shrunken region Q^δ actually used.
    pub square: Region,
    /// Unclipped components.
    pub components: Vec<ComponentDegree>,
    pub tangency_mass: f64,
    /// Sum of slice weights of unclipped components.
    pub slice_total: f64,
    /// Fiber points over the base point, the normalizer of slice weights.
    pub slice_count: u64,
    pub clipped: usize,
    pub rho: f64,
    /// Tangencies over Q^δ counted directly, with multiplicity.
    pub tangency_count: usize,
}

impl DecompositionReport {
    /// Σ over components of degree k of their slice weights.
    pub fn slice_mass_of_degree(&self, k: usize) -> f64 {
        self.components.iter().filter(|c| c.degree == k).map(|c| c.slice_weight).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub region: Region,
    pub rho: f64,
    pub mass: f64,
    pub tangency_count: usize,
    pub slice_count: u64,
    /// The same estimate on the curve truncated at |λ_u|·ρ.
    pub mass_scaled: Option<f64>,
}

/// Tangencies of the truncated unstable curve with fiber value in `region`.
pub fn find_tangencies(
    f: &HenonMap,
    curve: &UnstableCurve,
    region: &Region,
    rho: f64,
    opts: SearchOpts,
) -> Result<Vec<CriticalDatum>> {
    let (lo, _) = region.g_range();
    let a = if lo >= 0.0 { Some(lo) } else { None };
    CurveContext::new(f, curve, rho, a, opts)?.tangencies(region)
}

/// Number of solutions of φ⁺(ψ(t)) = ζ on the truncated curve.
pub fn slice_count(f: &HenonMap, curve: &UnstableCurve, zeta: C64, rho: f64, opts: SearchOpts) -> Result<SliceCount> {
    CurveContext::new(f, curve, rho, None, opts)?.slice_count(zeta)
}

fn mass_in(ctx: &CurveContext, region: &Region) -> Result<(f64, usize, u64)> {
    let crit = ctx.tangencies(region)?;
    let count: usize = crit.iter().map(|c| c.multiplicity).sum();
    let sc = ctx.slice_count(region.generic_point())?;
    if sc.count == 0 {
        return Err(LabError::Precondition("empty slice: increase rho".into()));
    }
    Ok((count as f64 / sc.count as f64, count, sc.count))
}

/// Σ tangency multiplicities over `region` divided by the slice count, at ρ
/// and at |λ_u|·ρ.
pub fn critical_mass_estimate(
    f: &HenonMap,
    curve: &UnstableCurve,
    region: &Region,
    a: f64,
    rho: f64,
    opts: SearchOpts,
) -> Result<MassEstimate> {
    let ctx = CurveContext::new(f, curve, rho, Some(a), opts)?;
    let (mass, tangency_count, slice_count) = mass_in(&ctx, region)?;
    let rho2 = rho * curve.lambda().norm();
    let mass_scaled = CurveContext::new(f, curve, rho2, Some(a), opts)
        .and_then(|c| mass_in(&c, region))
        .ok()
        .map(|m| m.0);
    Ok(MassEstimate {
        region: *region,
        rho,
        mass,
        tangency_count,
        slice_count,
        mass_scaled,
    })
}

/// Degree decomposition over a square or annular sector Q (shrunk by δ).
pub fn degree_decomposition(
    f: &HenonMap,
    curve: &UnstableCurve,
    q: &Region,
    a: f64,
    rho: f64,
    opts: SearchOpts,
) -> Result<DecompositionReport> {
    CurveContext::new(f, curve, rho, Some(a), opts)?.decompose(q, 0.02)
}

/// |Σ_k (k−1)/k·sm_k − direct mass|.
pub fn mass_formula_check(report: &DecompositionReport, direct: &MassEstimate) -> Result<f64> {
    if (report.rho - direct.rho).abs() > 1e-12 * report.rho {
        return Err(LabError::InvalidInput("decomposition and mass use different rho".into()));
    }
    if direct.slice_count != report.slice_count {
        return Err(LabError::InvalidInput(format!(
            "slice counts differ: {} vs {}",
            report.slice_count, direct.slice_count
        )));
    }
    let formula: f64 = report
        .components
        .iter()
        .map(|c| (c.degree - 1) as f64 / c.degree as f64 * c.slice_weight)
        .sum();
    Ok((formula - direct.mass).abs())
}

/// A sub-disk of the t-plane certifying a compact piece of W^u ∩ K⁺.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub center: C64,
    pub radius: f64,
    /// Minimum of G⁺∘ψ over the boundary circle after local refinement.
    pub boundary_min: f64,
    /// A point of the disk where G⁺∘ψ vanishes.
    pub interior_zero: C64,
}

const CERT_ZERO: f64 = 1e-5;

fn curve_green(f: &HenonMap, curve: &UnstableCurve, t: C64) -> f64 {
    crate::saddle::unstable_eval(f, curve, t)
        .and_then(|x| f.green_plus(x))
        .unwrap_or(f64::INFINITY)
}

/// Searches circles around the saddle parameter t = 0 on which G⁺∘ψ stays
/// positive under refinement; ψ(0) lies in K⁺, so such a circle bounds a disk
/// holding a compact piece of W^u ∩ K⁺.
pub fn disconnectivity_certificate(f: &HenonMap, curve: &UnstableCurve, rho: f64) -> Result<Option<Certificate>> {
    // G⁺ of a point of K⁺ comes out at roundoff-escape size, not zero
    if curve_green(f, curve, ZERO) > CERT_ZERO {
        return Ok(None);
    }
    let r0 = curve.convergence_radius_estimate * 0.05;
    let steps = 96;
    let ratio = (rho * 0.999 / r0).powf(1.0 / steps as f64);
    for k in 0..=steps {
        let r = r0 * ratio.powi(k);
        let vals: Vec<f64> = (0..256)
            .into_par_iter()
            .map(|i| curve_green(f, curve, C64::from_polar(r, TAU * i as f64 / 256.0)))
            .collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 10.0 * CERT_ZERO) || !min.is_finite() {
            continue;
        }
        // refine around the smallest samples: a crossing of K⁺ shows up as a
        // local minimum that keeps dropping
        let mut order: Vec<usize> = (0..256).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut refined = min;
        for &i in order.iter().take(8) {
            let mut lo = TAU * (i as f64 - 1.0) / 256.0;
            let mut hi = TAU * (i as f64 + 1.0) / 256.0;
            for _ in 0..40 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let g1 = curve_green(f, curve, C64::from_polar(r, m1));
                let g2 = curve_green(f, curve, C64::from_polar(r, m2));
                if g1 < g2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            refined = refined.min(curve_green(f, curve, C64::from_polar(r, (lo + hi) / 2.0)));
        }
        if refined >= 0.5 * min && refined > 10.0 * CERT_ZERO {
            return Ok(Some(Certificate {
                center: ZERO,
                radius: r,
                boundary_min: refined,
                interior_zero: ZERO,
            }));
        }
    }
    Ok(None)
}

/// Smallest ρ = r·|λ_u|^k at which the sublevel component of t = 0 reaches
/// G⁺ = `level` before touching |t| = ρ. Returns None past `max_steps`.
pub fn suggest_rho(f: &HenonMap, curve: &UnstableCurve, level: f64, max_steps: usize, opts: SearchOpts) -> Result<Option<f64>> {
    let torus = torus_green_max(f)?;
    let field = CurveField::new(f, curve, torus, opts.extra_iterations);
    let mut rho = curve.convergence_radius_estimate;
    for _ in 0..max_steps {
        let fl = Flood::build(&field, rho, opts.flood_grid);
        if opts.level_fraction * fl.escape_level() >= level {
            return Ok(Some(rho));
        }
        rho *= curve.lambda().norm();
    }
    Ok(None)
}

/// Tangencies of f^N({w = w₀}) with φ⁺-fibers over `region`, found as zeros of
/// the derivative of t ↦ log φ⁺(f^N(t, w₀)) on |t| ≤ R.
pub fn line_tangencies(f: &HenonMap, w0: C64, iterations: usize, region: &Region, opts: SearchOpts) -> Result<Vec<CriticalDatum>> {
    let torus = torus_green_max(f)?;
    let (lo, hi) = region.g_range();
    if !matches!(region, Region::Annulus { .. }) && lo < torus {
        return Err(LabError::Precondition("region must lie in the single-valued range".into()));
    }
    let field = LineField::new(f, w0, iterations, torus);
    let keep = |_: &Square| true;
    let s = Searcher {
        field: &field,
        job: Job::Critical,
        g_lo: lo,
        g_hi: hi,
        opts,
        keep: &keep,
    };
    let r = f.filtration_radius();
    let zs = s.run(root_square(r))?;
    Ok(zs
        .into_iter()
        .filter(|z| z.t.norm() <= r && region.contains(z.l.v.exp()))
        .map(|z| CriticalDatum {
            t: z.t,
            location: f.iterate([z.t, w0], iterations),
            green_value: z.l.v.re,
            multiplicity: z.multiplicity,
            fiber_value: z.l.v.exp(),
        })
        .collect())
}

/// Default truncation radius R_acc·|λ_u|^k: the smallest k ≤ 8 giving a
/// sublevel-component truncation with room for two fundamental annuli, or
/// k = 2 (disk truncation) when the component of t = 0 stays unbounded.
pub fn default_rho(f: &HenonMap, curve: &UnstableCurve, opts: SearchOpts) -> Result<f64> {
    let d = f.degree() as f64;
    let a = 1.1 * torus_green_max(f)?;
    match suggest_rho(f, curve, d * d * a, 8, opts)? {
        Some(r) => Ok(r),
        None => Ok(curve.convergence_radius_estimate * curve.lambda().norm().powi(2)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly1D;
    use crate::saddle::{default_saddle, unstable_curve};

    struct Synthetic<F: Fn(C64) -> Jet + Sync>(F);

    impl<F: Fn(C64) -> Jet + Sync> LogField for Synthetic<F> {
        fn log_h(&self, t: C64) -> Option<Jet> {
            Some((self.0)(t))
        }
        fn log_h_value(&self, t: C64) -> Option<C64> {
            Some((self.0)(t).v)
        }
        fn invalid_bound(&self) -> f64 {
            0.0
        }
    }

    fn search<F: LogField>(field: &F, job: Job, lo: f64, hi: f64, r: f64) -> Vec<Zero> {
        let keep = |_: &Square| true;
        let s = Searcher {
            field,
            job,
            g_lo: lo,
            g_hi: hi,
            opts: SearchOpts::default(),
            keep: &keep,
        };
        s.run(root_square(r)).unwrap()
    }

    fn quad(a: f64, c: f64) -> HenonMap {
        HenonMap::single(C64::new(a, 0.0), Poly1D::from_real(&[c, 0.0, 1.0]).unwrap()).unwrap()
    }

    #[test]
    fn synthetic_critical_points_and_multiplicity() {
        // L = 3 + t², one simple critical point at the origin
        let f = Synthetic(|t: C64| Jet::new(3.0 + t * t, 2.0 * t, C64::new(2.0, 0.0)));
        let z = search(&f, Job::Critical, 2.0, 4.0, 1.0);
        assert_eq!(z.len(), 1);
        assert!(z[0].t.norm() < 1e-12 && z[0].multiplicity == 1);
        // L = 3 + (t − 0.2)³, a double critical point
        let c = C64::new(0.2, 0.1);
        let g = Synthetic(move |t: C64| {
            let u = t - c;
            Jet::new(3.0 + u * u * u, 3.0 * u * u, 6.0 * u)
        });
        let z = search(&g, Job::Critical, 2.0, 4.0, 1.0);
        assert_eq!(z.iter().map(|z| z.multiplicity).sum::<usize>(), 2);
        assert!(z.iter().all(|z| (z.t - c).norm() < 1e-4));
    }

    #[test]
    fn synthetic_fiber_points_are_roots() {
        // L = 4 + t³: e^L = ζ has three solutions per branch of log ζ in the disk
        let f = Synthetic(|t: C64| Jet::new(4.0 + t * t * t, 3.0 * t * t, 6.0 * t));
        let zeta = C64::from_polar(4.5f64.exp(), 0.3);
        let z = search(&f, Job::Fiber(zeta), 4.5, 4.5, 1.5);
        // t³ = 0.5 + i(0.3 + 2πk), |t| ≤ 1.5 keeps k = 0 only
        assert_eq!(z.len(), 3);
        for p in &z {
            let v = (4.0 + p.t * p.t * p.t).exp();
            assert!((v - zeta).norm() < 1e-9 * zeta.norm());
        }
    }

    #[test]
    fn quadrant_squares_fit_the_annulus() {
        for q in 0..4 {
            let r = Region::quadrant(1.5, 2, q);
            let (lo, hi) = r.g_range();
            assert!((lo - 1.5).abs() < 1e-12);
            assert!((hi - 3.0).abs() < 1e-12);
            let Region::Square { center, .. } = r else { panic!() };
            assert!(wrap(center.arg() - q as f64 * PI / 2.0).abs() < 1e-12);
            assert!(r.contains(center) && !r.shrink(0.02).contains(center + C64::new(1e9, 0.0)));
        }
        let s = Region::Sector { lo: 1.0, hi: 2.0, theta0: 3.0, theta1: 4.0 };
        assert!(s.contains(C64::from_polar(4.0, 3.5)));
        assert!(!s.contains(C64::from_polar(4.0, 2.5)));
        assert!(!Region::fundamental(1.0, 2).simply_connected());
    }

    #[test]
    fn degenerate_tangencies_sit_at_one_dimensional_atoms() {
        let f = quad(0.0, -6.0);
        let curve = unstable_curve(&f, &default_saddle(&f).unwrap()).unwrap();
        let rho = default_rho(&f, &curve, SearchOpts::default()).unwrap();
        let ctx = CurveContext::new(&f, &curve, rho, None, SearchOpts::default()).unwrap();
        assert!(matches!(ctx.truncation, Truncation::Component { .. }));
        let crit = ctx.tangencies(&ctx.fundamental()).unwrap();
        let p = Poly1D::from_real(&[-6.0, 0.0, 1.0]).unwrap();
        let win = crate::poly1d::critical_atoms_window(&p, ctx.a).unwrap();
        assert!(!crit.is_empty());
        for c in &crit {
            assert!(win.atoms.iter().any(|a| (a.green_value - c.green_value).abs() < 1e-8));
            assert!((c.fiber_value.norm().ln() - c.green_value).abs() < 1e-8);
            // the curve point lies on {w = 0} over the postcritical point
            assert!(c.location[1].norm() < 1e-8);
        }
        let n = ctx.slice_count(ctx.fundamental().generic_point()).unwrap().count;
        let mass: f64 = crit.len() as f64 / n as f64;
        let expect: f64 = win.atoms.iter().map(|a| a.weight).sum();
        assert!((mass - expect).abs() < 1e-12);
    }

    #[test]
    fn tangencies_are_equivariant() {
        let f = quad(0.2, -6.0);
        let curve = unstable_curve(&f, &default_saddle(&f).unwrap()).unwrap();
        let opts = SearchOpts::default();
        let rho = default_rho(&f, &curve, opts).unwrap() * curve.lambda().norm();
        let ctx = CurveContext::new(&f, &curve, rho, None, opts).unwrap();
        let a = ctx.a;
        let first = ctx.tangencies(&Region::fundamental(a, 2)).unwrap();
        let second = ctx.tangencies(&Region::Annulus { lo: 2.0 * a, hi: 4.0 * a }).unwrap();
        assert!(!first.is_empty());
        for c in &first {
            let image = c.t * curve.lambda();
            if !ctx.in_truncation(image) {
                continue;
            }
            let hit = second.iter().find(|x| (x.t - image).norm() < 1e-6 * (1.0 + image.norm()));
            let hit = hit.expect("image tangency found");
            assert!((hit.green_value - 2.0 * c.green_value).abs() < 1e-8 * hit.green_value);
        }
    }

    #[test]
    fn connected_regime_has_no_tangencies() {
        let f = quad(0.05, -1.0);
        let curve = unstable_curve(&f, &default_saddle(&f).unwrap()).unwrap();
        let opts = SearchOpts::default();
        let rho = default_rho(&f, &curve, opts).unwrap();
        let ctx = CurveContext::new(&f, &curve, rho, None, opts).unwrap();
        assert_eq!(ctx.truncation, Truncation::Disk);
        assert!(ctx.tangencies(&Region::annuli(ctx.a, 2, 3)).unwrap().is_empty());
        let rep = ctx.decompose(&Region::quadrant(ctx.a, 2, 1), 0.02).unwrap();
        assert!(rep.components.iter().all(|c| c.degree == 1));
        assert_eq!(rep.tangency_mass, 0.0);
        assert_eq!(disconnectivity_certificate(&f, &curve, rho).unwrap(), None);
    }

    #[test]
    fn horseshoe_certificate_and_quadrant_decomposition() {
        let f = quad(0.2, -6.0);
        let curve = unstable_curve(&f, &default_saddle(&f).unwrap()).unwrap();
        let opts = SearchOpts::default();
        let rho = default_rho(&f, &curve, opts).unwrap();
        let cert = disconnectivity_certificate(&f, &curve, rho).unwrap().expect("certificate");
        assert!(cert.boundary_min > 0.0 && cert.radius < rho);
        let ctx = CurveContext::new(&f, &curve, rho, None, opts).unwrap();
        let mut total = 0.0;
        for q in 0..4 {
            let rep = ctx.decompose(&Region::quadrant(ctx.a, 2, q), 0.02).unwrap();
            let s: f64 = rep.components.iter().map(|c| c.slice_weight).sum();
            assert!((s - rep.slice_total).abs() < 1e-8);
            assert_eq!(rep.clipped, 0);
            assert!((rep.slice_total - 1.0).abs() < 1e-12);
            let ram: usize = rep.components.iter().map(|c| c.degree - 1).sum();
            assert_eq!(ram, rep.tangency_count);
            total += rep.tangency_mass;
        }
        assert!(total > 0.0);
    }

    #[test]
    fn mass_formula_arithmetic() {
        let rep = DecompositionReport {
            square: Region::quadrant(1.0, 2, 0),
            components: vec![
                ComponentDegree { degree: 2, slice_weight: 0.5 },
                ComponentDegree { degree: 1, slice_weight: 0.25 },
                ComponentDegree { degree: 1, slice_weight: 0.25 },
            ],
            tangency_mass: 0.25,
            slice_total: 1.0,
            slice_count: 4,
            clipped: 0,
            rho: 10.0,
            tangency_count: 1,
        };
        let direct = MassEstimate {
            region: rep.square,
            rho: 10.0,
            mass: 0.25,
            tangency_count: 1,
            slice_count: 4,
            mass_scaled: None,
        };
        assert_eq!(mass_formula_check(&rep, &direct).unwrap(), 0.0);
        let other = MassEstimate { rho: 11.0, ..direct };
        assert!(mass_formula_check(&rep, &other).is_err());
    }
}
