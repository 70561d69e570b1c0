use henon_lab::poly1d::{bottcher_1d, count_ramification, Disk};
use henon_lab::{Poly1D, C64};
use henon_lab_cli::config::{ExperimentConfig, ExperimentKind, FamilyConfig, LineConfig, SquareConfig};
use henon_lab_cli::experiments::{
    degenerate_locus, expected_line_count, line_tangency_count, scan_family, LocusResult,
};
use henon_lab::critical::Region;
use henon_lab::henon::FactorFamily;
use henon_lab::CPoly;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn quad(cst: f64) -> Poly1D {
    Poly1D::from_real(&[cst, 0.0, 1.0]).unwrap()
}

fn validated(kind: ExperimentKind, family: FamilyConfig, grid: Vec<C64>) -> ExperimentConfig {
    ExperimentConfig::new(kind, family, grid).validate().unwrap()
}

#[test]
fn constant_family_has_zero_step() {
    let cfg = validated(
        ExperimentKind::ScanFamily,
        FamilyConfig::Constant { a: c(0.2, 0.0) },
        vec![c(-6.0, 0.0); 3],
    );
    let r = scan_family(&cfg).unwrap();
    assert_eq!(r.delta_saddle, Some(0.0));
    assert_eq!(r.delta_bs, Some(0.0));
    assert!(r.rows.iter().all(|x| x.ok()));
}

#[test]
fn connected_path_stays_at_log_two() {
    let grid: Vec<C64> = (0..3).map(|i| c(0.04 + 0.01 * i as f64, 0.0)).collect();
    let cfg = validated(ExperimentKind::ScanFamily, FamilyConfig::Jacobian { poly: quad(-1.0) }, grid);
    let r = scan_family(&cfg).unwrap();
    for row in &r.rows {
        for e in [&row.chi_plus_saddle, &row.chi_plus_bs] {
            assert!((e.as_ref().unwrap().value - 2f64.ln()).abs() <= 0.02);
        }
    }
    assert!(r.delta_saddle.unwrap() <= 0.02 && r.delta_bs.unwrap() <= 0.02);
}

#[test]
fn horseshoe_path_refines_consistently() {
    let coarse: Vec<C64> = (0..3).map(|i| c(0.15 + 0.05 * i as f64, 0.0)).collect();
    let fine: Vec<C64> = (0..5).map(|i| c(0.15 + 0.025 * i as f64, 0.0)).collect();
    let run = |g| {
        let mut cfg = ExperimentConfig::new(ExperimentKind::ScanFamily, FamilyConfig::Jacobian { poly: quad(-6.0) }, g);
        cfg.methods.bedford_smillie = Some(false);
        scan_family(&cfg.validate().unwrap()).unwrap()
    };
    let (a, b) = (run(coarse), run(fine));
    let (da, db) = (a.delta_saddle.unwrap(), b.delta_saddle.unwrap());
    assert!(da > 0.0 && da <= 3.0 * db, "{da} {db}");
}

fn locus_family() -> FamilyConfig {
    // (a·w + q(z), a·z) ∘ (r(z), 0) with q = r = z²
    let z2 = vec![CPoly::constant(c(0.0, 0.0)), CPoly::constant(c(0.0, 0.0)), CPoly::constant(c(1.0, 0.0))];
    FamilyConfig::Custom {
        parameter: Some("a".into()),
        factors: vec![
            FactorFamily {
                a: CPoly::constant(c(0.0, 0.0)),
                p: z2.clone(),
            },
            FactorFamily {
                a: CPoly::identity(),
                p: z2,
            },
        ],
        base_poly: None,
    }
}

#[test]
fn degenerate_locus_reduces_to_degree_four() {
    let grid = vec![c(0.3, 0.0), c(0.1, 0.0), c(0.01, 0.0), c(0.0, 0.0)];
    let cfg = validated(ExperimentKind::DegenerateLocus, locus_family(), grid);
    let r: LocusResult = degenerate_locus(&cfg).unwrap();
    let l4 = 4f64.ln();
    assert_eq!(r.limit_poly.as_ref().unwrap().degree(), 4);
    assert!((r.limit.unwrap() - l4).abs() < 1e-12);
    for row in &r.rows[..3] {
        assert_eq!(row.induced.as_ref().unwrap().degree(), 4);
        assert_eq!(row.curve_degree, Some(2));
        assert_eq!(row.degenerate_index, Some(0));
    }
    // a = 0: both factors degenerate, the row is q∘r itself
    let last = &r.rows[3];
    assert_eq!(last.degenerate_index, None);
    assert_eq!(last.induced.as_ref().unwrap(), &Poly1D::from_real(&[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
    for row in &r.rows {
        assert!(row.estimate.as_ref().unwrap().value >= l4 - 0.02);
    }
    assert_eq!(r.trend.len(), 4);
    assert_eq!(r.non_increasing_steps, 3);
}

#[test]
fn non_degenerate_grid_point_is_a_row_failure() {
    let cfg = validated(
        ExperimentKind::DegenerateLocus,
        FamilyConfig::Jacobian { poly: quad(-6.0) },
        vec![c(0.0, 0.0), c(0.1, 0.0)],
    );
    let r = degenerate_locus(&cfg).unwrap();
    assert_eq!(r.rows[0].status, "ok");
    assert!(r.rows[1].status.starts_with("error"));
    assert_eq!(r.report().failures, 1);
}

fn line_cfg(a: f64, square: SquareConfig, n: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::LineTangencyCount,
        FamilyConfig::Jacobian { poly: quad(-6.0) },
        vec![c(a, 0.0)],
    );
    cfg.line = Some(LineConfig {
        w0: vec![c(0.0, 0.0), c(3.0, 0.0), c(0.0, -5.0)],
        iterations: n,
        square: Some(square),
        ..Default::default()
    });
    cfg.validate().unwrap()
}

#[test]
fn line_count_at_degenerate_parameter_matches_ramification() {
    let p = quad(-6.0);
    let center = bottcher_1d(&p, c(30.0, 0.0)).unwrap();
    for n in [3, 4] {
        let r = line_tangency_count(&line_cfg(0.0, SquareConfig { center, side: 8.0 }, Some(n))).unwrap();
        // on the line w = w₀ the degenerate map is z ↦ p^N(z); Q in the
        // Böttcher plane pulls back to a topological disk around 30
        let q = Region::Square { center, side: 8.0 }.shrink(0.02);
        let expected = expected_line_count(&p, &q, n).unwrap();
        let ram = count_ramification(&p, &Disk::new(c(30.0, 0.0), 3.0), n).unwrap();
        assert_eq!(expected, ram as f64);
        for row in &r.rows {
            assert_eq!(row.count.map(|k| k as f64), Some(expected), "{row:?}");
        }
    }
}

#[test]
fn line_count_small_jacobian_matches_degenerate() {
    let p = quad(-6.0);
    let center = bottcher_1d(&p, c(30.0, 0.0)).unwrap();
    let sq = SquareConfig { center, side: 8.0 };
    let r0 = line_tangency_count(&line_cfg(0.0, sq, None)).unwrap();
    let r1 = line_tangency_count(&line_cfg(0.01, sq, None)).unwrap();
    for (x, y) in r0.rows.iter().zip(&r1.rows) {
        assert_eq!(x.count, y.count);
        assert_eq!(y.status, "ok");
    }
}

#[test]
fn square_off_the_postcritical_set_has_no_tangencies() {
    let p = quad(-6.0);
    let center = bottcher_1d(&p, c(30.0, 0.0)).unwrap() * C64::from_polar(1.0, 2.0);
    let r = line_tangency_count(&line_cfg(0.01, SquareConfig { center, side: 6.0 }, None)).unwrap();
    for row in &r.rows {
        assert_eq!(row.count, Some(0));
        assert_eq!(row.expected, Some(0.0));
    }
}
