//! Oracles shared by the integration and acceptance tests. Nothing here calls
//! into the library's solver.
#![allow(dead_code)]

use dfr_core::hierarchy::{DomainKind, DomainTables, IndexedPmf};
use dfr_core::qp::QpProblem;
use dfr_core::recon::{ForecastPair, MovementPattern};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dirichlet(1) base pmfs over the complete domain with uniform realisations.
pub fn synthetic_pairs(tbl: &DomainTables, n: usize, seed: u64) -> Vec<ForecastPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut p: Vec<f64> = (0..tbl.q()).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            let k = rng.gen_range(0..tbl.r());
            ForecastPair::new(IndexedPmf::new(DomainKind::Complete, p).unwrap(), k, tbl.r()).unwrap()
        })
        .collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

/// Dense `r × q` matrix with every pattern entry filled by `share(column, target position)`.
pub fn pattern_matrix(pattern: &MovementPattern, share: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; pattern.q]; pattern.r];
    for &(j, k) in &pattern.fixed_cols {
        a[k][j] = 1.0;
    }
    for c in &pattern.free_cols {
        for (pos, &k) in c.targets.iter().enumerate() {
            a[k][c.j] = share(c.j, pos);
        }
    }
    a
}

/// `(1/T) Σ ‖A π̂ − z‖²` evaluated densely.
pub fn dense_objective(a: &[Vec<f64>], pairs: &[ForecastPair]) -> f64 {
    let mut total = 0.0;
    for p in pairs {
        for (k, row) in a.iter().enumerate() {
            let v: f64 = row.iter().zip(&p.base.probs).map(|(x, y)| x * y).sum();
            let z = if k == p.realized { 1.0 } else { 0.0 };
            total += (v - z) * (v - z);
        }
    }
    total / pairs.len() as f64
}

/// Projected gradient on the dense matrix, each free column projected onto
/// the simplex over its nearest targets. Returns the final objective.
pub fn projected_gradient(pairs: &[ForecastPair], pattern: &MovementPattern, iters: usize, step: f64) -> f64 {
    let mut a = pattern_matrix(pattern, |j, _| {
        1.0 / pattern.free_cols.iter().find(|c| c.j == j).unwrap().targets.len() as f64
    });
    let t = pairs.len() as f64;
    let r = pattern.r;
    let mut resid = vec![0.0; r];
    let mut col = Vec::new();
    for _ in 0..iters {
        let mut grad: Vec<Vec<f64>> = pattern.free_cols.iter().map(|c| vec![0.0; c.targets.len()]).collect();
        for p in pairs {
            for (k, row) in a.iter().enumerate() {
                let v: f64 = row.iter().zip(&p.base.probs).map(|(x, y)| x * y).sum();
                resid[k] = v - if k == p.realized { 1.0 } else { 0.0 };
            }
            for (g, c) in grad.iter_mut().zip(&pattern.free_cols) {
                let pj = p.base.probs[c.j];
                for (gv, &k) in g.iter_mut().zip(&c.targets) {
                    *gv += 2.0 / t * resid[k] * pj;
                }
            }
        }
        for (g, c) in grad.iter().zip(&pattern.free_cols) {
            col.clear();
            col.extend(c.targets.iter().zip(g).map(|(&k, gv)| a[k][c.j] - step * gv));
            project_simplex(&mut col);
            for (&k, &v) in c.targets.iter().zip(&col) {
                a[k][c.j] = v;
            }
        }
    }
    dense_objective(&a, pairs)
}

/// Exact minimum of a strictly convex QP with box bounds and equality rows by
/// enumerating which bound, if any, each variable sits at.
pub fn active_set_oracle(p: &[Vec<f64>], c: &[f64], eq: &[(Vec<f64>, f64)], lower: &[f64], upper: &[f64]) -> (f64, Vec<f64>) {
    let n = c.len();
    let m = eq.len();
    let mut best = (f64::INFINITY, Vec::new());
    let total = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..total {
        let mut x = code;
        for s in state.iter_mut() {
            *s = (x % 3) as u8;
            x /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut xv = vec![0.0; n];
        for i in 0..n {
            match state[i] {
                1 => xv[i] = lower[i],
                2 => xv[i] = upper[i],
                _ => {}
            }
        }
        let nf = free.len();
        let dim = nf + m;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = p[i][j];
            }
            let fixed: f64 = (0..n).filter(|&j| state[j] != 0).map(|j| p[i][j] * xv[j]).sum();
            rhs[a] = -c[i] - fixed;
            for (e, (row, _)) in eq.iter().enumerate() {
                kkt[(a, nf + e)] = row[i];
                kkt[(nf + e, a)] = row[i];
            }
        }
        for (e, (row, d)) in eq.iter().enumerate() {
            rhs[nf + e] = d - (0..n).filter(|&j| state[j] != 0).map(|j| row[j] * xv[j]).sum::<f64>();
        }
        let sol = if dim == 0 {
            Some(DVector::zeros(0))
        } else {
            kkt.clone().lu().solve(&rhs)
        };
        let Some(sol) = sol else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        for (a, &i) in free.iter().enumerate() {
            xv[i] = sol[a];
        }
        if (0..n).any(|i| xv[i] < lower[i] - 1e-10 || xv[i] > upper[i] + 1e-10) {
            continue;
        }
        if eq
            .iter()
            .any(|(row, d)| (row.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>() - d).abs() > 1e-9)
        {
            continue;
        }
        let f: f64 = 0.5 * (0..n).map(|i| (0..n).map(|j| xv[i] * p[i][j] * xv[j]).sum::<f64>()).sum::<f64>()
            + c.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>();
        if f < best.0 {
            best = (f, xv.clone());
        }
    }
    best
}

/// Random strictly convex QP: `P = MᵀM + εI`, bounds `[0, 1]`, one equality on the sum.
pub fn random_qp(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<(Vec<f64>, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let pm = m.transpose() * &m + DMatrix::identity(n, n) * 1e-2;
    let p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| pm[(i, j)]).collect()).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let eq = vec![(vec![1.0; n], n as f64 / 3.0)];
    (p, c, eq)
}

pub fn to_problem(p: &[Vec<f64>], c: &[f64], eq: &[(Vec<f64>, f64)], lower: &[f64], upper: &[f64]) -> QpProblem {
    use dfr_core::qp::{EqualityRows, SymMatrix};
    QpProblem {
        p: SymMatrix::from_dense(p),
        c: c.to_vec(),
        eq: EqualityRows {
            rows: eq
                .iter()
                .map(|(row, _)| row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect())
                .collect(),
            rhs: eq.iter().map(|e| e.1).collect(),
        },
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        constant: 0.0,
    }
}
