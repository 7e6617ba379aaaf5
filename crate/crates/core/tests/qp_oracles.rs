mod common;

use common::*;
use dfr_core::hierarchy::{enumerate_domains, Hierarchy};
use dfr_core::qp::{solve, SolverSettings};
use dfr_core::recon::{build_movement_pattern, mean_brier, train_dfr};

fn tight() -> SolverSettings {
    SolverSettings {
        tol: 1e-9,
        max_iter: 200_000,
        ..Default::default()
    }
}

#[test]
fn ten_dim_matches_active_set_enumeration() {
    for seed in 0..3 {
        let n = 10;
        let (p, c, eq) = random_qp(n, seed);
        let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
        let (best, x_star) = active_set_oracle(&p, &c, &eq, &lo, &hi);
        assert!(best.is_finite());
        let sol = solve(&to_problem(&p, &c, &eq, &lo, &hi), &tight()).unwrap();
        assert!(sol.report.converged);
        assert!((sol.report.objective - best).abs() < 1e-6, "seed {seed}: {} vs {best}", sol.report.objective);
        let dist = sol.x.iter().zip(&x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dist < 1e-4, "seed {seed}: {dist}");
    }
}

#[test]
fn box_only_matches_enumeration() {
    let n = 6;
    let (p, c, _) = random_qp(n, 11);
    let lo: Vec<f64> = (0..n).map(|i| -(i as f64) * 0.2).collect();
    let hi: Vec<f64> = (0..n).map(|i| 0.3 + i as f64 * 0.1).collect();
    let (best, _) = active_set_oracle(&p, &c, &[], &lo, &hi);
    let sol = solve(&to_problem(&p, &c, &[], &lo, &hi), &tight()).unwrap();
    assert!((sol.report.objective - best).abs() < 1e-6);
}

#[test]
fn returned_point_is_feasible_and_scale_invariant() {
    let n = 8;
    let (p, c, eq) = random_qp(n, 4);
    let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
    let settings = SolverSettings::default();
    let prob = to_problem(&p, &c, &eq, &lo, &hi);
    let sol = solve(&prob, &settings).unwrap();
    assert!(prob.infeasibility(&sol.x) <= settings.tol);
    let scaled = to_problem(
        &p.iter().map(|r| r.iter().map(|v| v * 7.0).collect()).collect::<Vec<_>>(),
        &c.iter().map(|v| v * 7.0).collect::<Vec<_>>(),
        &eq,
        &lo,
        &hi,
    );
    let sol2 = solve(&scaled, &settings).unwrap();
    let diff = sol.x.iter().zip(&sol2.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 10.0 * settings.tol.max(1e-5), "{diff}");
}

#[test]
fn dfr_matches_projected_gradient_oracle() {
    let tbl = enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap();
    let pattern = build_movement_pattern(&tbl);
    for seed in [1, 2] {
        let pairs = synthetic_pairs(&tbl, 5, seed);
        let trained = train_dfr(&pairs, &tbl, 1, &tight()).unwrap();
        let ours = mean_brier(&trained.matrix, &pairs);
        let oracle = projected_gradient(&pairs, &pattern, 1_000_000, 1e-3);
        assert!(ours <= oracle + 1e-6, "seed {seed}: {ours} vs {oracle}");
        assert!((ours - oracle).abs() < 1e-6, "seed {seed}: {ours} vs {oracle}");
        let report = trained.report.unwrap();
        assert!((report.objective - ours).abs() < 1e-8);
    }
}
