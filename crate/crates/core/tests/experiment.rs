use dgschwarz::experiment::{
    complexity_report, measure_complexity, parse_csv, report, run_experiment, ComplexityRecord,
    ExperimentConfig, ManufacturedProblem, MeshKind, ReportFormat, CSV_COLUMNS, CSV_EXTRA,
};
use dgschwarz::smoothers::SmootherKind;
use proptest::prelude::*;

fn small_config(smoother: SmootherKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dim = 2;
    cfg.degree = 3;
    cfg.levels = (2, 4);
    cfg.smoother = smoother;
    cfg.count_flops = true;
    cfg
}

#[test]
fn dg_solution_converges_at_order_k_plus_one() {
    let records = run_experiment(&small_config(SmootherKind::Mcs)).unwrap();
    assert_eq!(records.len(), 3);
    for w in records.windows(2) {
        let ratio = w[0].l2_error / w[1].l2_error;
        // 2^{k+1} = 16 for k = 3
        assert!(
            (10.0..=22.0).contains(&ratio),
            "L={} ratio {ratio}",
            w[1].level
        );
    }
    assert!(records.iter().all(|r| r.converged));
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = small_config(SmootherKind::Acs);
    cfg.levels = (3, 3);
    cfg.mesh = MeshKind::Distorted {
        factor: 0.25,
        seed: 4,
    };
    cfg.coarse = Some(4);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a[0].nu_frac.to_bits(), b[0].nu_frac.to_bits());
    assert_eq!(a[0].l2_error.to_bits(), b[0].l2_error.to_bits());
    assert_eq!(a[0].flops, b[0].flops);
}

#[test]
fn csv_round_trips_the_records() {
    let records = run_experiment(&small_config(SmootherKind::Acs)).unwrap();
    let text = report(&records, ReportFormat::Csv).unwrap();
    let rows = parse_csv(&text).unwrap();
    assert_eq!(rows.len(), records.len());
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), CSV_COLUMNS.len() + CSV_EXTRA.len());
    assert_eq!(&header[..CSV_COLUMNS.len()], &CSV_COLUMNS[..]);
    for (row, r) in rows.iter().zip(&records) {
        let f = |k: &str| row[k].parse::<f64>().unwrap();
        let u = |k: &str| row[k].parse::<u64>().unwrap();
        assert_eq!(u("level") as usize, r.level);
        assert_eq!(u("dofs") as usize, r.dofs);
        assert_eq!(row["smoother"], r.smoother);
        assert_eq!(f("omega"), r.omega);
        assert_eq!(u("nu") as usize, r.iterations);
        assert_eq!(f("nu_frac"), r.nu_frac);
        assert_eq!(f("l2_error"), r.l2_error);
        assert_eq!(f("c_cmplx"), r.c_cmplx());
        assert_eq!(u("flops_total"), r.flops_total());
        let parts: u64 = [
            "flops_local_solvers",
            "flops_residual",
            "flops_operator",
            "flops_transfer",
            "flops_coarse",
            "flops_krylov",
            "flops_smoother_setup",
        ]
        .iter()
        .map(|k| u(k))
        .sum();
        assert_eq!(parts, r.flops_total());
        assert!(r.flops_total() > 0);
    }
}

#[test]
fn markdown_has_one_row_per_level() {
    let records = run_experiment(&small_config(SmootherKind::Acs)).unwrap();
    let text = report(&records, ReportFormat::Markdown).unwrap();
    let rows = text
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| Level"))
        .count();
    assert_eq!(rows, records.len());
    assert!(report(&[], ReportFormat::Markdown).is_err());
    assert!(report(&[], ReportFormat::Csv).is_err());
    assert!(parse_csv("").is_err());
    assert!(parse_csv("a,b\n1\n").is_err());
}

#[test]
fn complexity_report_requires_counting() {
    let mut cfg = small_config(SmootherKind::Mcs);
    cfg.levels = (1, 1);
    cfg.dim = 3;
    cfg.degree = 2;
    let rec = measure_complexity(&cfg).unwrap();
    assert!(rec.local_solvers > 0 && rec.operator > 0 && rec.setup > 0);
    let table = complexity_report(&[rec.clone()]).unwrap();
    assert!(table.contains("local solvers") && table.contains("| 2 |"));
    // counting is always on for the measurement itself
    cfg.count_flops = false;
    let again = measure_complexity(&cfg).unwrap();
    assert_eq!(again, rec);
    let zero = ComplexityRecord { operator: 0, ..rec };
    assert!(complexity_report(&[zero]).is_err());
    assert!(complexity_report(&[]).is_err());
}

#[test]
fn config_rejects_invalid_values() {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("dim", "4"),
        ("degree", "x"),
        ("smoother", "jacobi"),
        ("levels", "5..2"),
        ("omega", "1.5"),
        ("bogus", "1"),
    ] {
        let mut c = cfg.clone();
        assert!(c.set(k, v).and_then(|_| c.validate()).is_err(), "{k}={v}");
    }
    cfg.set("levels", "3..5").unwrap();
    assert_eq!(cfg.levels, (3, 5));
    assert!(ExperimentConfig::parse("dim = 3\n# comment\nsmoother = mvs\n").is_ok());
    assert!(ExperimentConfig::parse("dim 3\n").is_err());
}

/// Central difference of `g` along direction `t`.
fn central(g: impl Fn([f64; 3]) -> f64, x: [f64; 3], t: usize, h: f64) -> f64 {
    let (mut p, mut m) = (x, x);
    p[t] += h;
    m[t] -= h;
    (g(p) - g(m)) / (2.0 * h)
}

proptest! {
    #[test]
    fn manufactured_derivatives_match_finite_differences(
        dim in 2usize..=3,
        literal in any::<bool>(),
        x in proptest::array::uniform3(0.02f64..0.98),
    ) {
        let p = if literal { ManufacturedProblem::literal(dim) } else { ManufacturedProblem::new(dim) }.unwrap();
        let mut x = x;
        if dim == 2 {
            x[2] = 0.0;
        }
        // the unsquared variant has a kink at its centers
        let far = dgschwarz::experiment::CENTERS.iter().all(|c| {
            (0..dim).map(|t| (x[t] - c[t]).powi(2)).sum::<f64>().sqrt() > 0.1
        });
        prop_assume!(!literal || far);
        let h = 2e-5;
        let g = p.grad(x);
        let mut lap = 0.0;
        for t in 0..dim {
            let fd = central(|y| p.u(y), x, t, h);
            prop_assert!((fd - g[t]).abs() <= 1e-6 * (1.0 + g[t].abs()), "grad t={t}: {fd} {}", g[t]);
            lap += central(|y| p.grad(y)[t], x, t, h);
        }
        let f = p.f(x);
        prop_assert!((f + lap).abs() <= 1e-5 * (1.0 + f.abs()), "f {f} vs {}", -lap);
    }
}
