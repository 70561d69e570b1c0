use henon_lab::critical::{
    critical_mass_estimate, default_rho, disconnectivity_certificate, line_tangencies, mass_formula_check,
    torus_green_max, Certificate, CriticalDatum, CurveContext, DecompositionReport, MassEstimate, Region, SearchOpts,
    SliceCount, Truncation,
};
use henon_lab::exponents::{
    chi_bedford_smillie, chi_birkhoff_1d_estimate, chi_manning_przytycki_estimate, chi_saddle, estimate_g_plus_max,
    exponent_bound_check, young_dimension, BoundCheck, ExponentEstimate, Flag, GPlusMax,
};
use henon_lab::henon::HenonMap;
use henon_lab::poly1d::{bottcher_1d, escaping_critical_points};
use henon_lab::saddle::{default_saddle, unstable_curve, UnstableCurve};
use henon_lab::{Poly1D, C64};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, MethodSettings};
use crate::output::{Cell, Table};
use crate::RunError;

pub const OK: &str = "ok";

/// Everything `run` needs to write and summarize one experiment.
pub struct Report {
    pub kind: ExperimentKind,
    pub table: Table,
    pub summary: Value,
    pub failures: usize,
    pub headline: String,
}

fn status_of(flags: &[&ExponentEstimate]) -> String {
    let mut s: Vec<&str> = Vec::new();
    for e in flags {
        for f in &e.flags {
            let name = match f {
                Flag::BelowLowerBound => "below_lower_bound",
                Flag::NotStabilized => "not_stabilized",
                Flag::FromJacobian => continue,
            };
            if !s.contains(&name) {
                s.push(name);
            }
        }
    }
    if s.is_empty() {
        OK.into()
    } else {
        s.join(";")
    }
}

fn err_status(e: impl std::fmt::Display) -> String {
    format!("error: {e}")
}

fn opt_f(x: Option<f64>) -> Cell {
    x.map(Cell::F).unwrap_or(Cell::Empty)
}

fn max_step(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<Option<f64>> = vals.collect();
    v.windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        })
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

/// Unstable curve of the default saddle and the truncation radius to use.
pub fn curve_and_rho(f: &HenonMap, m: &MethodSettings) -> henon_lab::Result<(UnstableCurve, f64)> {
    let curve = unstable_curve(f, &default_saddle(f)?)?;
    let rho = match m.rho {
        Some(r) => r,
        None => default_rho(f, &curve, m.search())?,
    };
    Ok((curve, rho))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub index: usize,
    pub param: C64,
    pub chi_plus_saddle: Option<ExponentEstimate>,
    pub chi_minus: Option<ExponentEstimate>,
    pub chi_plus_bs: Option<ExponentEstimate>,
    pub dim: Option<f64>,
    pub status: String,
}

impl ScanRow {
    pub fn ok(&self) -> bool {
        self.status == OK
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::U(self.index as u64),
            Cell::F(self.param.re),
            Cell::F(self.param.im),
            opt_f(self.chi_plus_saddle.as_ref().map(|e| e.value)),
            opt_f(self.chi_plus_bs.as_ref().map(|e| e.value)),
            opt_f(self.chi_minus.as_ref().map(|e| e.value)),
            opt_f(self.dim),
            opt_f(self.chi_plus_saddle.as_ref().map(|e| e.spread)),
            opt_f(self.chi_plus_bs.as_ref().map(|e| e.spread)),
            Cell::S(self.status.clone()),
        ]
    }
}

pub const SCAN_HEADER: [&str; 10] = [
    "index",
    "param_re",
    "param_im",
    "chi_plus_saddle",
    "chi_plus_bs",
    "chi_minus",
    "dim",
    "spread_saddle",
    "spread_bs",
    "status",
];

/// Saddle and (optionally) Bedford–Smillie estimates for one map. Failures
/// land in the status; partial values are kept.
pub fn scan_point(index: usize, param: C64, f: henon_lab::Result<HenonMap>, m: &MethodSettings) -> ScanRow {
    let mut row = ScanRow {
        index,
        param,
        chi_plus_saddle: None,
        chi_minus: None,
        chi_plus_bs: None,
        dim: None,
        status: OK.into(),
    };
    let f = match f {
        Ok(f) if f.is_degenerate() => {
            row.status = err_status("degenerate map");
            return row;
        }
        Ok(f) => f,
        Err(e) => {
            row.status = err_status(e);
            return row;
        }
    };
    let mut errors = Vec::new();
    match chi_saddle(&f, m.period(), m.grid()) {
        Ok((p, n)) => {
            row.dim = young_dimension(p.value, Some(n.value), f.degree()).ok();
            row.chi_plus_saddle = Some(p);
            row.chi_minus = Some(n);
        }
        Err(e) => errors.push(format!("saddle: {e}")),
    }
    if m.bedford_smillie.unwrap_or(true) {
        match curve_and_rho(&f, m).and_then(|(c, rho)| chi_bedford_smillie(&f, &c, m.annulus_a, rho, m.search())) {
            Ok(e) => row.chi_plus_bs = Some(e),
            Err(e) => errors.push(format!("bs: {e}")),
        }
    }
    row.status = if errors.is_empty() {
        let ests: Vec<&ExponentEstimate> = row.chi_plus_saddle.iter().chain(row.chi_plus_bs.iter()).collect();
        status_of(&ests)
    } else {
        err_status(errors.join("; "))
    };
    row
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanFamilyResult {
    pub rows: Vec<ScanRow>,
    /// Max |χ̂⁺(λ_{i+1}) − χ̂⁺(λ_i)| over consecutive grid points.
    pub delta_saddle: Option<f64>,
    pub delta_bs: Option<f64>,
}

pub fn scan_family(cfg: &ExperimentConfig) -> Result<ScanFamilyResult, RunError> {
    let family = cfg.family()?;
    let grid = cfg.grid_values()?;
    let m = &cfg.methods;
    let rows: Vec<ScanRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &l)| scan_point(i, l, family.at(l), m))
        .collect();
    let delta_saddle = max_step(rows.iter().map(|r| r.chi_plus_saddle.as_ref().map(|e| e.value)));
    let delta_bs = max_step(rows.iter().map(|r| r.chi_plus_bs.as_ref().map(|e| e.value)));
    Ok(ScanFamilyResult {
        rows,
        delta_saddle,
        delta_bs,
    })
}

impl ScanFamilyResult {
    pub fn report(&self) -> Report {
        let failures = self.rows.iter().filter(|r| !r.ok()).count();
        Report {
            kind: ExperimentKind::ScanFamily,
            table: Table {
                header: SCAN_HEADER.iter().map(|s| s.to_string()).collect(),
                rows: self.rows.iter().map(|r| r.cells()).collect(),
            },
            summary: json!({
                "delta_saddle": self.delta_saddle,
                "delta_bs": self.delta_bs,
                "rows": self.rows,
            }),
            failures,
            headline: format!(
                "{} points, {} failed, max step saddle {} bs {}",
                self.rows.len(),
                failures,
                fmt_opt(self.delta_saddle),
                fmt_opt(self.delta_bs)
            ),
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "n/a".into())
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerationRow {
    pub index: usize,
    pub b: C64,
    pub estimate: Option<ExponentEstimate>,
    pub chi_plus_bs: Option<ExponentEstimate>,
    pub discrepancy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerationResult {
    /// χ⁺(p) from the critical orbit formula.
    pub target: f64,
    pub rows: Vec<DegenerationRow>,
    /// Discrepancy at the smallest nonzero |b|.
    pub final_discrepancy: Option<f64>,
    /// Consecutive row pairs, including the step to the b = 0 row.
    pub steps: usize,
    pub non_increasing_steps: usize,
}

/// Rows ordered by decreasing |b|, closed by the b = 0 row computed in one
/// dimension.
pub fn scan_degeneration(cfg: &ExperimentConfig) -> Result<DegenerationResult, RunError> {
    let fam = cfg.family()?.degenerating()?;
    let mut grid = cfg.grid_values()?;
    grid.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    if grid.last().map_or(true, |b| b.norm() > 0.0) {
        grid.push(C64::new(0.0, 0.0));
    }
    let target_est = chi_manning_przytycki_estimate(&fam.base_poly)
        .map_err(|e| RunError::Config(format!("family.poly: {e}")))?;
    let target = target_est.value;
    let m = &cfg.methods;
    let rows: Vec<DegenerationRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &b)| {
            if b.norm() == 0.0 {
                return DegenerationRow {
                    index: i,
                    b,
                    estimate: Some(target_est.clone()),
                    chi_plus_bs: None,
                    discrepancy: Some(0.0),
                    status: OK.into(),
                };
            }
            let s = scan_point(i, b, fam.at(b), m);
            let estimate = s.chi_plus_saddle;
            DegenerationRow {
                index: i,
                b,
                discrepancy: estimate.as_ref().map(|e| (e.value - target).abs()),
                estimate,
                chi_plus_bs: s.chi_plus_bs,
                status: s.status,
            }
        })
        .collect();
    let disc: Vec<Option<f64>> = rows.iter().map(|r| r.discrepancy).collect();
    let steps = disc.len().saturating_sub(1);
    let non_increasing_steps = disc
        .windows(2)
        .filter(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b <= a))
        .count();
    let final_discrepancy = rows.iter().rev().find(|r| r.b.norm() > 0.0).and_then(|r| r.discrepancy);
    Ok(DegenerationResult {
        target,
        rows,
        final_discrepancy,
        steps,
        non_increasing_steps,
    })
}

impl DegenerationResult {
    pub fn report(&self) -> Report {
        let failures = self.rows.iter().filter(|r| r.status != OK).count();
        let header = [
            "index",
            "param_re",
            "param_im",
            "chi_plus",
            "method",
            "spread",
            "chi_plus_bs",
            "target",
            "discrepancy",
            "status",
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::U(r.index as u64),
                    Cell::F(r.b.re),
                    Cell::F(r.b.im),
                    opt_f(r.estimate.as_ref().map(|e| e.value)),
                    r.estimate
                        .as_ref()
                        .map(|e| Cell::S(method_name(e)))
                        .unwrap_or(Cell::Empty),
                    opt_f(r.estimate.as_ref().map(|e| e.spread)),
                    opt_f(r.chi_plus_bs.as_ref().map(|e| e.value)),
                    Cell::F(self.target),
                    opt_f(r.discrepancy),
                    Cell::S(r.status.clone()),
                ]
            })
            .collect();
        Report {
            kind: ExperimentKind::ScanDegeneration,
            table: Table {
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            summary: json!({
                "target": self.target,
                "final_discrepancy": self.final_discrepancy,
                "steps": self.steps,
                "non_increasing_steps": self.non_increasing_steps,
                "rows": self.rows,
            }),
            failures,
            headline: format!(
                "target {:.6}, final discrepancy {}, non-increasing in {} of {} steps",
                self.target,
                fmt_opt(self.final_discrepancy),
                self.non_increasing_steps,
                self.steps
            ),
        }
    }
}

fn method_name(e: &ExponentEstimate) -> String {
    serde_json::to_value(e.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

/// The one-dimensional map a degenerate map induces: the induced polynomial
/// when exactly one factor is degenerate, the composition of the factor
/// polynomials when all are.
pub fn degenerate_reduction(f: &HenonMap) -> henon_lab::Result<(Poly1D, Option<usize>, usize)> {
    let zero = f.factors().iter().filter(|h| h.jacobian().norm() == 0.0).count();
    if zero == f.factors().len() {
        let mut q = f.factors()[0].p.clone();
        for h in &f.factors()[1..] {
            q = h.p.compose(&q);
        }
        return Ok((q, None, 1));
    }
    let ind = f.induced_polynomial()?;
    Ok((ind.q, Some(ind.degenerate_index), ind.curve_degree))
}

#[derive(Debug, Clone, Serialize)]
pub struct LocusRow {
    pub index: usize,
    pub param: C64,
    pub degenerate_index: Option<usize>,
    pub curve_degree: Option<usize>,
    pub induced: Option<Poly1D>,
    pub estimate: Option<ExponentEstimate>,
    pub discrepancy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocusResult {
    /// The one-dimensional map at parameter 0, where all factors degenerate.
    pub limit_poly: Option<Poly1D>,
    pub limit: Option<f64>,
    pub rows: Vec<LocusRow>,
    /// Discrepancies ordered by decreasing |parameter|.
    pub trend: Vec<f64>,
    pub non_increasing_steps: usize,
}

pub fn degenerate_locus(cfg: &ExperimentConfig) -> Result<LocusResult, RunError> {
    let family = cfg.family()?;
    let grid = cfg.grid_values()?;
    let limit_poly = family
        .at(C64::new(0.0, 0.0))
        .ok()
        .filter(|f| f.is_degenerate())
        .and_then(|f| degenerate_reduction(&f).ok())
        .map(|r| r.0);
    let limit = limit_poly
        .as_ref()
        .and_then(|p| chi_manning_przytycki_estimate(p).ok())
        .map(|e| e.value);
    let rows: Vec<LocusRow> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &param)| {
            let mut row = LocusRow {
                index,
                param,
                degenerate_index: None,
                curve_degree: None,
                induced: None,
                estimate: None,
                discrepancy: None,
                status: OK.into(),
            };
            let res = family.at(param).and_then(|f| {
                if !f.is_degenerate() {
                    return Err(henon_lab::LabError::InvalidInput("map is not degenerate".into()));
                }
                degenerate_reduction(&f)
            });
            match res.and_then(|(q, idx, cd)| Ok((chi_manning_przytycki_estimate(&q)?, q, idx, cd))) {
                Ok((e, q, idx, cd)) => {
                    row.degenerate_index = idx;
                    row.curve_degree = Some(cd);
                    row.induced = Some(q);
                    row.discrepancy = limit.map(|l| (e.value - l).abs());
                    row.status = status_of(&[&e]);
                    row.estimate = Some(e);
                }
                Err(e) => row.status = err_status(e),
            }
            row
        })
        .collect();
    let mut order: Vec<&LocusRow> = rows.iter().collect();
    order.sort_by(|a, b| b.param.norm().total_cmp(&a.param.norm()));
    let trend: Vec<f64> = order.iter().filter_map(|r| r.discrepancy).collect();
    let non_increasing_steps = trend.windows(2).filter(|w| w[1] <= w[0]).count();
    Ok(LocusResult {
        limit_poly,
        limit,
        rows,
        trend,
        non_increasing_steps,
    })
}

impl LocusResult {
    pub fn report(&self) -> Report {
        let failures = self.rows.iter().filter(|r| r.status != OK).count();
        let header = [
            "index",
            "param_re",
            "param_im",
            "degenerate_factor",
            "curve_degree",
            "induced_degree",
            "chi_plus",
            "limit",
            "discrepancy",
            "status",
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::U(r.index as u64),
                    Cell::F(r.param.re),
                    Cell::F(r.param.im),
                    r.degenerate_index.map(|i| Cell::U(i as u64)).unwrap_or(Cell::S("all".into())),
                    r.curve_degree.map(|i| Cell::U(i as u64)).unwrap_or(Cell::Empty),
                    r.induced.as_ref().map(|q| Cell::U(q.degree() as u64)).unwrap_or(Cell::Empty),
                    opt_f(r.estimate.as_ref().map(|e| e.value)),
                    opt_f(self.limit),
                    opt_f(r.discrepancy),
                    Cell::S(r.status.clone()),
                ]
            })
            .collect();
        Report {
            kind: ExperimentKind::DegenerateLocus,
            table: Table {
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            summary: json!({
                "limit_poly": self.limit_poly,
                "limit": self.limit,
                "trend": self.trend,
                "non_increasing_steps": self.non_increasing_steps,
                "rows": self.rows,
            }),
            failures,
            headline: format!(
                "{} points, {} failed, limit {}",
                self.rows.len(),
                failures,
                fmt_opt(self.limit)
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadrantCheck {
    pub quadrant: usize,
    pub decomposition: Option<DecompositionReport>,
    pub direct: Option<MassEstimate>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    pub index: usize,
    pub param: C64,
    pub period: usize,
    pub lambda: C64,
    pub rho: f64,
    pub annulus_a: f64,
    pub torus_max: f64,
    pub truncation: Truncation,
    pub escape_level: f64,
    pub tangencies: Vec<CriticalDatum>,
    pub slice: SliceCount,
    pub mass: MassEstimate,
    pub chi_plus_bs: Option<ExponentEstimate>,
    pub g_plus_max: Option<GPlusMax>,
    pub bound: Option<BoundCheck>,
    pub certificate: Option<Certificate>,
    pub quadrants: Vec<QuadrantCheck>,
}

pub fn tangency_point(index: usize, param: C64, f: &HenonMap, m: &MethodSettings) -> henon_lab::Result<TangencyReport> {
    let opts: SearchOpts = m.search();
    let (curve, rho) = curve_and_rho(f, m)?;
    let ctx = CurveContext::new(f, &curve, rho, m.annulus_a, opts)?;
    let fund = ctx.fundamental();
    let tangencies = ctx.tangencies(&fund)?;
    let slice = ctx.slice_count(fund.generic_point())?;
    let mass = critical_mass_estimate(f, &curve, &fund, ctx.a, rho, opts)?;
    let chi = chi_bedford_smillie(f, &curve, Some(ctx.a), rho, opts).ok();
    let gmax = estimate_g_plus_max(f, &curve, rho, opts).ok();
    let bound = match (&chi, &gmax) {
        (Some(c), Some(g)) => Some(exponent_bound_check(f, c, g.value)),
        _ => None,
    };
    let certificate = disconnectivity_certificate(f, &curve, rho)?;
    let d = ctx.degree();
    let quadrants = (0..4)
        .map(|q| {
            let res = ctx.decompose(&Region::quadrant(ctx.a, d, q), 0.02).and_then(|rep| {
                let direct = critical_mass_estimate(f, &curve, &rep.square, ctx.a, rho, opts)?;
                let residual = mass_formula_check(&rep, &direct)?;
                Ok((rep, direct, residual))
            });
            match res {
                Ok((rep, direct, residual)) => QuadrantCheck {
                    quadrant: q,
                    decomposition: Some(rep),
                    direct: Some(direct),
                    residual: Some(residual),
                    error: None,
                },
                Err(e) => QuadrantCheck {
                    quadrant: q,
                    decomposition: None,
                    direct: None,
                    residual: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(TangencyReport {
        index,
        param,
        period: curve.period(),
        lambda: curve.lambda(),
        rho,
        annulus_a: ctx.a,
        torus_max: ctx.torus_max,
        truncation: ctx.truncation,
        escape_level: ctx.escape_level,
        tangencies,
        slice,
        mass,
        chi_plus_bs: chi,
        g_plus_max: gmax,
        bound,
        certificate,
        quadrants,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyResult {
    pub points: Vec<Result<TangencyReport, String>>,
}

pub fn tangency_report(cfg: &ExperimentConfig) -> Result<TangencyResult, RunError> {
    let family = cfg.family()?;
    let grid = cfg.grid_values()?;
    // each point already parallelizes internally
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            family
                .at(l)
                .and_then(|f| tangency_point(i, l, &f, &cfg.methods))
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(TangencyResult { points })
}

impl TangencyResult {
    pub fn report(&self, grid: &[C64]) -> Report {
        let header = [
            "index",
            "param_re",
            "param_im",
            "t_re",
            "t_im",
            "green_value",
            "multiplicity",
            "fiber_re",
            "fiber_im",
            "status",
        ];
        let mut rows = Vec::new();
        let mut failures = 0;
        for (i, p) in self.points.iter().enumerate() {
            let l = grid[i];
            match p {
                Ok(r) => {
                    for c in &r.tangencies {
                        rows.push(vec![
                            Cell::U(i as u64),
                            Cell::F(l.re),
                            Cell::F(l.im),
                            Cell::F(c.t.re),
                            Cell::F(c.t.im),
                            Cell::F(c.green_value),
                            Cell::U(c.multiplicity as u64),
                            Cell::F(c.fiber_value.re),
                            Cell::F(c.fiber_value.im),
                            Cell::S(OK.into()),
                        ]);
                    }
                }
                Err(e) => {
                    failures += 1;
                    let mut row = vec![Cell::U(i as u64), Cell::F(l.re), Cell::F(l.im)];
                    row.extend(std::iter::repeat(Cell::Empty).take(6));
                    row.push(Cell::S(err_status(e)));
                    rows.push(row);
                }
            }
        }
        let found: usize = self.points.iter().flatten().map(|r| r.tangencies.len()).sum();
        Report {
            kind: ExperimentKind::TangencyReport,
            table: Table {
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            summary: json!({ "points": self.points }),
            failures,
            headline: format!("{} points, {} failed, {} tangencies", self.points.len(), failures, found),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionRow {
    pub index: usize,
    /// "map" for grid points, "poly" for the one-dimensional rows.
    pub kind: &'static str,
    pub param: Option<C64>,
    pub poly: Option<Poly1D>,
    pub chi_plus: Option<ExponentEstimate>,
    pub chi_minus: Option<ExponentEstimate>,
    pub dim: Option<f64>,
    /// Second estimator: Bedford–Smillie for maps, Birkhoff averaging for polynomials.
    pub check: Option<ExponentEstimate>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionResult {
    pub rows: Vec<DimensionRow>,
}

pub fn dimension_table(cfg: &ExperimentConfig) -> Result<DimensionResult, RunError> {
    let m = &cfg.methods;
    let mut rows: Vec<DimensionRow> = Vec::new();
    if let Some(family) = &cfg.family {
        let grid = cfg.grid_values()?;
        rows = grid
            .par_iter()
            .enumerate()
            .map(|(i, &l)| {
                let s = scan_point(i, l, family.at(l), m);
                DimensionRow {
                    index: i,
                    kind: "map",
                    param: Some(l),
                    poly: None,
                    chi_plus: s.chi_plus_saddle,
                    chi_minus: s.chi_minus,
                    dim: s.dim,
                    check: s.chi_plus_bs,
                    status: s.status,
                }
            })
            .collect();
    }
    let base = rows.len();
    let depth = m.birkhoff_depth.unwrap_or(30);
    let samples = m.birkhoff_samples.unwrap_or(10_000);
    let polys: Vec<DimensionRow> = cfg
        .polys
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let mut row = DimensionRow {
                index: base + j,
                kind: "poly",
                param: None,
                poly: Some(p.clone()),
                chi_plus: None,
                chi_minus: None,
                dim: None,
                check: None,
                status: OK.into(),
            };
            let seed = cfg.seed.wrapping_add(j as u64);
            match (
                chi_manning_przytycki_estimate(p),
                chi_birkhoff_1d_estimate(p, depth, samples, seed),
            ) {
                (Ok(e), Ok(b)) => {
                    row.dim = young_dimension(e.value, None, p.degree()).ok();
                    row.status = status_of(&[&e]);
                    row.chi_plus = Some(e);
                    row.check = Some(b);
                }
                (Err(e), _) | (_, Err(e)) => row.status = err_status(e),
            }
            row
        })
        .collect();
    rows.extend(polys);
    Ok(DimensionResult { rows })
}

impl DimensionResult {
    pub fn report(&self) -> Report {
        let failures = self.rows.iter().filter(|r| r.status != OK).count();
        let header = [
            "index",
            "kind",
            "param_re",
            "param_im",
            "chi_plus",
            "chi_minus",
            "dim",
            "method",
            "spread",
            "chi_plus_check",
            "check_method",
            "status",
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::U(r.index as u64),
                    Cell::S(r.kind.into()),
                    opt_f(r.param.map(|p| p.re)),
                    opt_f(r.param.map(|p| p.im)),
                    opt_f(r.chi_plus.as_ref().map(|e| e.value)),
                    opt_f(r.chi_minus.as_ref().map(|e| e.value)),
                    opt_f(r.dim),
                    r.chi_plus.as_ref().map(|e| Cell::S(method_name(e))).unwrap_or(Cell::Empty),
                    opt_f(r.chi_plus.as_ref().map(|e| e.spread)),
                    opt_f(r.check.as_ref().map(|e| e.value)),
                    r.check.as_ref().map(|e| Cell::S(method_name(e))).unwrap_or(Cell::Empty),
                    Cell::S(r.status.clone()),
                ]
            })
            .collect();
        Report {
            kind: ExperimentKind::DimensionTable,
            table: Table {
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            summary: json!({ "rows": self.rows }),
            failures,
            headline: format!("{} rows, {} failed", self.rows.len(), failures),
        }
    }
}

/// The two conditions fixing the number of iterates for line counts:
/// A/d^{N−1} below every escaping critical Green value of p, and d^{N−1}
/// times the least G⁺ on the closed escape wedge above A.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationChoice {
    pub annulus_a: f64,
    pub min_escaping_critical_green: Option<f64>,
    pub min_green_on_wedge: f64,
    pub filtration_radius: f64,
    pub iterations: usize,
    pub configured: bool,
}

/// Least G⁺ over a sample of the closed wedge {|z| ≥ R, |w| ≤ |z|}: the face
/// |z| = R and the diagonal |w| = |z| out to 4R.
pub fn min_green_on_wedge(f: &HenonMap) -> henon_lab::Result<f64> {
    let r = f.filtration_radius();
    let mut pts = Vec::new();
    for i in 0..64 {
        let z = C64::from_polar(r, std::f64::consts::TAU * i as f64 / 64.0);
        pts.push([z, C64::new(0.0, 0.0)]);
        for s in [0.25, 0.5, 0.75, 1.0] {
            for j in 0..16 {
                pts.push([z, C64::from_polar(s * r, std::f64::consts::TAU * (j as f64 + 0.5) / 16.0)]);
            }
        }
        for k in [1.5, 2.0, 4.0] {
            for j in 0..16 {
                pts.push([z * k, C64::from_polar(k * r, std::f64::consts::TAU * j as f64 / 16.0)]);
            }
        }
    }
    let vals: Vec<henon_lab::Result<f64>> = pts.par_iter().map(|&x| f.green_plus(x)).collect();
    let mut min = f64::INFINITY;
    for v in vals {
        min = min.min(v?);
    }
    Ok(min)
}

pub fn choose_iterations(f: &HenonMap, p: &Poly1D, a: f64) -> henon_lab::Result<IterationChoice> {
    let d = f.degree() as f64;
    let crit = escaping_critical_points(p)?
        .into_iter()
        .map(|c| c.2)
        .filter(|g| *g > 0.0)
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))));
    let wedge = min_green_on_wedge(f)?;
    let mut n = 1;
    loop {
        let k = d.powi(n as i32 - 1);
        let first = crit.map_or(true, |g| a / k < g);
        let second = k * wedge > a;
        if first && second {
            break;
        }
        n += 1;
        if n > 40 {
            return Err(henon_lab::LabError::Precondition("no admissible number of iterates".into()));
        }
    }
    Ok(IterationChoice {
        annulus_a: a,
        min_escaping_critical_green: crit,
        min_green_on_wedge: wedge,
        filtration_radius: f.filtration_radius(),
        iterations: n,
        configured: false,
    })
}

/// d^N·μ_{c,0}(Q): each escaping critical point c of multiplicity m puts
/// weight m·d^{N−j} at φ_p(p^j(c)).
pub fn expected_line_count(p: &Poly1D, q: &Region, n: usize) -> henon_lab::Result<f64> {
    let d = p.degree() as f64;
    let (lo, hi) = q.g_range();
    let mut total = 0.0;
    for (c, mult, g) in escaping_critical_points(p)? {
        if !(g > 0.0) {
            continue;
        }
        let mut z = c;
        let mut gj = g;
        for j in 1.. {
            z = p.eval(z);
            gj *= d;
            if gj > hi {
                break;
            }
            if gj >= lo && q.contains(bottcher_1d(p, z)?) {
                total += mult as f64 * d.powi(n as i32 - j);
            }
        }
    }
    Ok(total)
}

/// Default Q: the square centred on the Böttcher coordinate of the heaviest
/// postcritical point with Green value in [A, dA), kept inside the annulus
/// and away from the other postcritical points there.
pub fn default_square(p: &Poly1D, a: f64) -> henon_lab::Result<Region> {
    let win = henon_lab::poly1d::critical_atoms_window(p, a)?;
    let d = p.degree() as f64;
    let best = win
        .atoms
        .iter()
        .max_by(|x, y| x.weight.total_cmp(&y.weight).then(y.green_value.total_cmp(&x.green_value)))
        .ok_or_else(|| henon_lab::LabError::Precondition("no postcritical point in the annulus".into()))?;
    let center = bottcher_1d(p, best.location)?;
    let r = center.norm();
    let edge = (r - win.a.exp()).min((d * win.a).exp() - r) * std::f64::consts::SQRT_2 * 0.9;
    let mut side = edge.min(0.5 * r);
    for o in &win.atoms {
        if o.location != best.location {
            side = side.min(0.5 * (bottcher_1d(p, o.location)? - center).norm());
        }
    }
    Ok(Region::Square { center, side })
}

#[derive(Debug, Clone, Serialize)]
pub struct LineRow {
    pub index: usize,
    pub param: C64,
    pub w0: C64,
    pub iterations: usize,
    pub count: Option<usize>,
    pub expected: Option<f64>,
    /// Tangencies with |t| ≥ 0.9R, whose preimage components may leave the disk.
    pub clipped: usize,
    pub tangencies: Vec<CriticalDatum>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineBlock {
    pub param: C64,
    pub choice: Option<IterationChoice>,
    pub square: Option<Region>,
    pub expected: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineResult {
    /// The polynomial at parameter 0 supplying μ_{c,0}.
    pub base_poly: Poly1D,
    pub blocks: Vec<LineBlock>,
    pub rows: Vec<LineRow>,
}

pub fn line_tangency_count(cfg: &ExperimentConfig) -> Result<LineResult, RunError> {
    let family = cfg.family()?;
    let grid = cfg.grid_values()?;
    let line = cfg.line.clone().ok_or_else(|| RunError::Config("missing field `line`".into()))?;
    let f0 = family
        .at(C64::new(0.0, 0.0))
        .map_err(|e| RunError::Config(format!("family at 0: {e}")))?;
    if !f0.is_degenerate() {
        return Err(RunError::Config("family: the map at parameter 0 must be degenerate".into()));
    }
    let base_poly = degenerate_reduction(&f0)
        .map_err(|e| RunError::Config(format!("family at 0: {e}")))?
        .0;
    let opts = cfg.methods.search();
    let delta = line.delta.unwrap_or(0.02);
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for &l in &grid {
        let setup = family.at(l).and_then(|f| {
            let a = match line.annulus_a {
                Some(a) => a,
                None => 1.1 * torus_green_max(&f)?,
            };
            let mut choice = choose_iterations(&f, &base_poly, a)?;
            if let Some(n) = line.iterations {
                choice.iterations = n;
                choice.configured = true;
            }
            let q = match line.square {
                Some(s) => Region::Square {
                    center: s.center,
                    side: s.side,
                },
                None => default_square(&base_poly, a)?,
            }
            .shrink(delta);
            let expected = expected_line_count(&base_poly, &q, choice.iterations)?;
            Ok((f, choice, q, expected))
        });
        let (f, choice, q, expected) = match setup {
            Ok(s) => s,
            Err(e) => {
                blocks.push(LineBlock {
                    param: l,
                    choice: None,
                    square: None,
                    expected: None,
                    error: Some(e.to_string()),
                });
                for &w0 in &line.w0 {
                    rows.push(LineRow {
                        index: rows.len(),
                        param: l,
                        w0,
                        iterations: 0,
                        count: None,
                        expected: None,
                        clipped: 0,
                        tangencies: Vec::new(),
                        status: err_status(&e),
                    });
                }
                continue;
            }
        };
        blocks.push(LineBlock {
            param: l,
            choice: Some(choice),
            square: Some(q),
            expected: Some(expected),
            error: None,
        });
        let r = f.filtration_radius();
        let n = choice.iterations;
        for &w0 in &line.w0 {
            let mut row = LineRow {
                index: rows.len(),
                param: l,
                w0,
                iterations: n,
                count: None,
                expected: Some(expected),
                clipped: 0,
                tangencies: Vec::new(),
                status: OK.into(),
            };
            if w0.norm() > r {
                row.status = err_status(format!("|w0| exceeds R = {r}"));
            } else {
                match line_tangencies(&f, w0, n, &q, opts) {
                    Ok(t) => {
                        row.count = Some(t.iter().map(|c| c.multiplicity).sum());
                        row.clipped = t.iter().filter(|c| c.t.norm() >= 0.9 * r).count();
                        if row.clipped > 0 {
                            row.status = "clipped".into();
                        }
                        row.tangencies = t;
                    }
                    Err(e) => row.status = err_status(e),
                }
            }
            rows.push(row);
        }
    }
    Ok(LineResult {
        base_poly,
        blocks,
        rows,
    })
}

impl LineResult {
    pub fn report(&self) -> Report {
        let failures = self.rows.iter().filter(|r| r.status != OK).count();
        let header = [
            "index",
            "param_re",
            "param_im",
            "w0_re",
            "w0_im",
            "iterations",
            "count",
            "expected",
            "clipped",
            "status",
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    Cell::U(r.index as u64),
                    Cell::F(r.param.re),
                    Cell::F(r.param.im),
                    Cell::F(r.w0.re),
                    Cell::F(r.w0.im),
                    Cell::U(r.iterations as u64),
                    r.count.map(|c| Cell::U(c as u64)).unwrap_or(Cell::Empty),
                    opt_f(r.expected),
                    Cell::U(r.clipped as u64),
                    Cell::S(r.status.clone()),
                ]
            })
            .collect();
        let exact = self
            .rows
            .iter()
            .filter(|r| matches!((r.count, r.expected), (Some(c), Some(e)) if c as f64 == e))
            .count();
        Report {
            kind: ExperimentKind::LineTangencyCount,
            table: Table {
                header: header.iter().map(|s| s.to_string()).collect(),
                rows,
            },
            summary: json!({
                "base_poly": self.base_poly,
                "blocks": self.blocks,
                "rows": self.rows,
            }),
            failures,
            headline: format!(
                "{} lines, {} match d^N mu_c0(Q), {} failed",
                self.rows.len(),
                exact,
                failures
            ),
        }
    }
}
