use std::sync::Arc;

use dgschwarz::dense::DenseMatrix;
use dgschwarz::dgop::LaplaceOperator;
use dgschwarz::flops::FlopCounter;
use dgschwarz::mesh::{ColorPartition, MeshHierarchy};
use dgschwarz::smoothers::{ColoringChoice, SchwarzSmoother, SmootherConfig, SmootherKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn operator(
    dim: usize,
    coarse: usize,
    level: usize,
    k: usize,
    distortion: f64,
) -> Arc<LaplaceOperator> {
    let mut h = MeshHierarchy::new(dim, coarse, level).unwrap();
    let gamma = if distortion > 0.0 {
        h = h.distort(distortion, 5).unwrap();
        4.0
    } else {
        1.0
    };
    Arc::new(
        LaplaceOperator::new(
            h.level(level).clone(),
            k,
            gamma,
            Arc::new(FlopCounter::new(false)),
        )
        .unwrap(),
    )
}

fn smoother(op: &Arc<LaplaceOperator>, kind: SmootherKind, omega: f64) -> SchwarzSmoother {
    SchwarzSmoother::new(op.clone(), SmootherConfig::new(kind, omega)).unwrap()
}

/// Reference step: subdomains visited one after the other with dense local
/// inverses, each correction from the current residual (multiplicative) or
/// all from the initial one (additive).
fn dense_reference_step(a: &DenseMatrix, s: &SchwarzSmoother, x: &[f64], b: &[f64]) -> Vec<f64> {
    let omega = s.config().omega;
    let additive = s.config().kind.is_additive();
    let residual =
        |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let r0 = residual(x);
    let mut y = x.to_vec();
    for color in s.colors().colors() {
        for &j in color {
            let r = if additive { r0.clone() } else { residual(&y) };
            let dofs = s.map().indices(j);
            let aj = a.submatrix(&dofs);
            let rj: Vec<f64> = dofs.iter().map(|&g| r[g]).collect();
            let e = aj.solve_spd(&rj).unwrap();
            for (l, &g) in dofs.iter().enumerate() {
                y[g] += omega * e[l];
            }
        }
    }
    y
}

#[test]
fn steps_match_dense_subdomain_sweeps() {
    for dim in [2, 3] {
        let (coarse, level) = if dim == 2 { (2, 2) } else { (2, 1) };
        let op = operator(dim, coarse, level, 2, 0.0);
        let a = op.assemble_dense().unwrap();
        let n = op.n_dofs();
        for (kind, omega) in [
            (SmootherKind::Acs, 0.7),
            (SmootherKind::Mcs, 1.0),
            (SmootherKind::Avs, 0.9 / (1 << dim) as f64),
            (SmootherKind::Mvs, 1.0),
        ] {
            let s = smoother(&op, kind, omega);
            let x = random_vec(n, 1);
            let b = random_vec(n, 2);
            let expect = dense_reference_step(&a, &s, &x, &b);
            let mut y = x.clone();
            s.step(&mut y, &b, false, false).unwrap();
            let e = max_diff(&y, &expect) / max_abs(&expect);
            assert!(e < 1e-11, "dim={dim} {kind:?}: {e:e}");
        }
    }
}

#[test]
fn distorted_cell_smoother_uses_surrogate_solvers() {
    let op = operator(2, 3, 1, 2, 0.2);
    let a = op.assemble_dense().unwrap();
    let s = smoother(&op, SmootherKind::Mcs, 0.75);
    let x = random_vec(op.n_dofs(), 3);
    let b = random_vec(op.n_dofs(), 4);
    let exact = dense_reference_step(&a, &s, &x, &b);
    let mut y = x.clone();
    s.step(&mut y, &b, false, false).unwrap();
    // inexact local solves: close to but not equal to the exact sweep
    let e = max_diff(&y, &exact) / max_abs(&exact);
    assert!(e > 1e-8 && e < 1.0, "{e:e}");
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn same_color_subdomains_are_a_orthogonal() {
    for dim in [2, 3] {
        let (coarse, level) = if dim == 2 { (2, 2) } else { (2, 1) };
        let op = operator(dim, coarse, level, 1, 0.0);
        let a = op.assemble_dense().unwrap();
        for (kind, coloring) in [
            (SmootherKind::Mcs, ColoringChoice::Structured),
            (SmootherKind::Mcs, ColoringChoice::Graph),
            (SmootherKind::Mvs, ColoringChoice::Structured),
            (SmootherKind::Mvs, ColoringChoice::Graph),
        ] {
            let mut cfg = SmootherConfig::new(kind, 1.0);
            cfg.coloring = coloring;
            let s = SchwarzSmoother::new(op.clone(), cfg).unwrap();
            assert!(s.colors().is_partition_of(s.n_subdomains()));
            for color in s.colors().colors() {
                for (p, &i) in color.iter().enumerate() {
                    let di = s.map().indices(i);
                    for &j in &color[p + 1..] {
                        let dj = s.map().indices(j);
                        for &r in &di {
                            for &c in &dj {
                                assert_eq!(a[(r, c)], 0.0, "dim={dim} {kind:?} {coloring:?}");
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn coloring_counts() {
    let op = operator(2, 2, 3, 1, 0.0);
    assert_eq!(smoother(&op, SmootherKind::Mcs, 1.0).colors().n_colors(), 2);
    assert_eq!(smoother(&op, SmootherKind::Mvs, 1.0).colors().n_colors(), 8);
    assert_eq!(smoother(&op, SmootherKind::Acs, 0.7).colors().n_colors(), 1);
}

#[test]
fn colored_additive_equals_uncolored() {
    for kind in [SmootherKind::Acs, SmootherKind::Avs] {
        let op = operator(2, 2, 3, 3, 0.0);
        let plain = smoother(&op, kind, 0.5);
        let mut cfg = SmootherConfig::new(kind, 0.5);
        cfg.color_additive = true;
        let colored = SchwarzSmoother::new(op.clone(), cfg).unwrap();
        assert!(colored.colors().n_colors() > 1);
        let b = random_vec(op.n_dofs(), 7);
        let mut x = random_vec(op.n_dofs(), 8);
        let mut y = x.clone();
        plain.step(&mut x, &b, false, false).unwrap();
        colored.step(&mut y, &b, false, false).unwrap();
        let e = max_diff(&x, &y) / max_abs(&x);
        assert!(e <= 1e-13, "{kind:?}: {e:e}");
    }
}

#[test]
fn additive_preconditioner_is_symmetric_and_positive() {
    for kind in [SmootherKind::Acs, SmootherKind::Avs] {
        let op = operator(3, 2, 1, 2, 0.0);
        let s = smoother(&op, kind, 1.0);
        let n = op.n_dofs();
        let (u, v) = (random_vec(n, 1), random_vec(n, 2));
        let (mut pu, mut pv) = (vec![0.0; n], vec![0.0; n]);
        s.apply_additive_preconditioner(&u, &mut pu).unwrap();
        s.apply_additive_preconditioner(&v, &mut pv).unwrap();
        let (a, b) = (dot(&pu, &v), dot(&u, &pv));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{kind:?}");
        assert!(dot(&pu, &u) > 0.0);
    }
}

#[test]
fn single_cell_and_single_patch_steps_solve_exactly() {
    for dim in 1..=3 {
        // one cell: the cell solver inverts the whole matrix
        let op = operator(dim, 1, 0, 3, 0.0);
        let a = op.assemble_dense().unwrap();
        let b = random_vec(op.n_dofs(), 11);
        let x_exact = a.solve_spd(&b).unwrap();
        let mut x = vec![0.0; op.n_dofs()];
        smoother(&op, SmootherKind::Mcs, 1.0)
            .step(&mut x, &b, true, false)
            .unwrap();
        assert!(
            max_diff(&x, &x_exact) <= 1e-10 * max_abs(&x_exact),
            "cell dim={dim}"
        );
        // one vertex patch covering the 2^d mesh
        let op = operator(dim, 2, 0, 3, 0.0);
        let a = op.assemble_dense().unwrap();
        let b = random_vec(op.n_dofs(), 12);
        let x_exact = a.solve_spd(&b).unwrap();
        let mut x = vec![0.0; op.n_dofs()];
        smoother(&op, SmootherKind::Mvs, 1.0)
            .step(&mut x, &b, true, false)
            .unwrap();
        assert!(
            max_diff(&x, &x_exact) <= 1e-10 * max_abs(&x_exact),
            "patch dim={dim}"
        );
    }
}

#[test]
fn zero_guess_shortcut_matches_explicit_zero() {
    let op = operator(2, 2, 2, 2, 0.0);
    let s = smoother(&op, SmootherKind::Acs, 0.7);
    let b = random_vec(op.n_dofs(), 3);
    let mut x = vec![0.0; op.n_dofs()];
    let mut y = vec![0.0; op.n_dofs()];
    s.step(&mut x, &b, true, false).unwrap();
    s.step(&mut y, &b, false, false).unwrap();
    assert!(max_diff(&x, &y) <= 1e-14 * max_abs(&x));
}

#[test]
fn invalid_inputs_are_rejected() {
    let op = operator(2, 2, 1, 1, 0.0);
    assert!(SchwarzSmoother::new(op.clone(), SmootherConfig::new(SmootherKind::Acs, 0.0)).is_err());
    assert!(SchwarzSmoother::new(op.clone(), SmootherConfig::new(SmootherKind::Acs, 1.5)).is_err());
    let s = smoother(&op, SmootherKind::Mcs, 1.0);
    let mut x = vec![0.0; 3];
    assert!(s.step(&mut x, &[0.0; 3], false, false).is_err());
    assert!(smoother(&op, SmootherKind::Mcs, 1.0)
        .with_colors(ColorPartition::new(vec![vec![0, 1]]))
        .is_err());
    // patch smoothers need axis-aligned cells
    let d = operator(2, 3, 0, 1, 0.2);
    assert!(SchwarzSmoother::new(d, SmootherConfig::new(SmootherKind::Mvs, 1.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn additive_step_is_affine(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        // S(x, b) = x + ωP(b − Ax) is affine: S(αx, αb) = αS(x, b)
        let op = operator(2, 2, 2, 2, 0.0);
        let s = smoother(&op, SmootherKind::Acs, 0.7);
        let n = op.n_dofs();
        let (mut x, b) = (random_vec(n, seed), random_vec(n, seed + 1));
        let mut y: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let ab: Vec<f64> = b.iter().map(|v| alpha * v).collect();
        s.step(&mut x, &b, false, false).unwrap();
        s.step(&mut y, &ab, false, false).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        prop_assert!(max_diff(&y, &scaled) <= 1e-12 * max_abs(&scaled).max(1e-300));
    }

    #[test]
    fn multiplicative_order_within_a_color_is_irrelevant(seed in 0u64..1000) {
        let op = operator(2, 2, 2, 1, 0.0);
        let s = smoother(&op, SmootherKind::Mvs, 1.0);
        let shuffled = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let colors = s.colors().colors().iter().map(|c| {
                let mut c = c.clone();
                for i in (1..c.len()).rev() {
                    c.swap(i, rng.random_range(0..=i));
                }
                c
            }).collect();
            smoother(&op, SmootherKind::Mvs, 1.0).with_colors(ColorPartition::new(colors)).unwrap()
        };
        let b = random_vec(op.n_dofs(), seed);
        let mut x = random_vec(op.n_dofs(), seed + 7);
        let mut y = x.clone();
        s.step(&mut x, &b, false, false).unwrap();
        shuffled.step(&mut y, &b, false, false).unwrap();
        prop_assert!(max_diff(&x, &y) <= 1e-12 * max_abs(&x));
    }
}
