//! Convex QP solver:
//!
//! ```text
//! minimize    ½ xᵀ P x + cᵀ x
//! subject to  lower ≤ x ≤ upper,   E x = d
//! ```
//!
//! Operator splitting (ADMM) on the stacked constraint matrix `[I; E]`, with
//! over-relaxation and adaptive step size. The x-update system
//! `P + (σ + ρ) I + ρ_eq EᵀE` is solved directly: `P + (σ + ρ) I` is factored
//! per connected component of the sparsity graph of `P`, and the equality
//! rows enter through a dense Schur complement (Woodbury identity). When the
//! number of equality rows is large the update falls back to conjugate
//! gradients preconditioned by the block factorisation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric sparse matrix stored row-wise with both triangles present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    /// From `(i, j, v)` entries of the upper triangle (`i <= j`); duplicates add up.
    pub fn from_upper_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            *row = merged;
        }
        Self { n, rows }
    }

    pub fn from_dense(m: &[Vec<f64>]) -> Self {
        let n = m.len();
        Self {
            n,
            rows: m
                .iter()
                .map(|r| r.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(x)
            .map(|(row, xi)| xi * row.iter().map(|&(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (j, v * s)).collect())
                .collect(),
        }
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Sparse linear equality rows `E x = d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EqualityRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl EqualityRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    /// `out += Eᵀ y`
    fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j] += v * yi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub p: SymMatrix,
    pub c: Vec<f64>,
    pub eq: EqualityRows,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Constant added to reported objective values.
    pub constant: f64,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.p.dim() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Shape(format!(
                "P is {pd}x{pd}, c has {n}, bounds have {}/{} entries",
                self.lower.len(),
                self.upper.len(),
                pd = self.p.dim()
            )));
        }
        if self.eq.rows.len() != self.eq.rhs.len() {
            return Err(Error::Shape("equality rows and right-hand side differ in length".into()));
        }
        let finite = self.c.iter().chain(&self.eq.rhs).all(|v| v.is_finite())
            && self.p.rows.iter().flatten().all(|e| e.1.is_finite())
            && self.eq.rows.iter().flatten().all(|e| e.1.is_finite() && e.0 < n)
            && self.constant.is_finite();
        if !finite {
            return Err(Error::Validation("QP data contains NaN, infinite values or bad indices".into()));
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan()) {
            return Err(Error::Validation("NaN in bounds".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(Error::Validation(format!(
                "lower bound {} exceeds upper bound {} for variable {i}",
                self.lower[i], self.upper[i]
            )));
        }
        let asym = self.p.max_asymmetry();
        if asym > 1e-12 {
            return Err(Error::Validation(format!("P is not symmetric (deviation {asym:e})")));
        }
        Ok(())
    }

    /// `½ xᵀPx + cᵀx + constant`
    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.p.quad_form(x) + self.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant
    }

    /// Largest violation of the box and equality constraints.
    pub fn infeasibility(&self, x: &[f64]) -> f64 {
        let box_v = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        let mut ex = vec![0.0; self.eq.len()];
        self.eq.mul(x, &mut ex);
        let eq_v = ex
            .iter()
            .zip(&self.eq.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        box_v.max(eq_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    /// Step-size multiplier applied to equality rows.
    pub eq_rho_scale: f64,
    pub adaptive_rho: bool,
    pub adapt_interval: usize,
    /// Above this many equality rows the x-update uses conjugate gradients.
    pub dense_schur_limit: usize,
    /// Log every n-th iterate at debug level (0 disables).
    pub trace_every: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eq_rho_scale: 1e3,
            adaptive_rho: true,
            adapt_interval: 25,
            dense_schur_limit: 4000,
            trace_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// `P` is singular, so the minimiser may not be unique.
    pub rank_deficient: bool,
    pub final_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers for the box rows followed by the equality rows.
    pub y: Vec<f64>,
    pub report: SolveReport,
}

/// Iterates to start from, e.g. the solution for a neighbouring horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    solve_warm(problem, settings, None)
}

/// Solves after rescaling the cost so that the largest entry of `P` or `c` is
/// one; the returned multipliers and report refer to the original problem.
pub fn solve_warm(
    problem: &QpProblem,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution> {
    problem.validate()?;
    let magnitude = problem
        .p
        .rows
        .iter()
        .flatten()
        .map(|e| e.1.abs())
        .chain(problem.c.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    if magnitude == 0.0 || magnitude == 1.0 {
        return solve_unscaled(problem, settings, warm);
    }
    let scale = 1.0 / magnitude;
    let scaled = QpProblem {
        p: problem.p.scaled(scale),
        c: problem.c.iter().map(|v| v * scale).collect(),
        eq: problem.eq.clone(),
        lower: problem.lower.clone(),
        upper: problem.upper.clone(),
        constant: problem.constant * scale,
    };
    let warm_scaled = warm.map(|w| WarmStart {
        x: w.x.clone(),
        y: w.y.iter().map(|v| v * scale).collect(),
    });
    let mut sol = solve_unscaled(&scaled, settings, warm_scaled.as_ref())?;
    for v in sol.y.iter_mut() {
        *v /= scale;
    }
    sol.report.objective = problem.objective(&sol.x);
    sol.report.dual_residual /= scale;
    Ok(sol)
}

fn solve_unscaled(
    problem: &QpProblem,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<QpSolution> {
    let n = problem.dim();
    let n_eq = problem.eq.len();
    let m = n + n_eq;
    let components = components(&problem.p);
    let rank_deficient = detect_rank_deficiency(&problem.p, &components);

    let x_start = starting_point(problem);
    let start_feasible = problem.infeasibility(&x_start) <= settings.tol;
    let start_obj = problem.objective(&x_start);

    if n == 0 {
        return Ok(QpSolution {
            x: Vec::new(),
            y: Vec::new(),
            report: SolveReport {
                objective: problem.constant,
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                converged: true,
                rank_deficient: false,
                final_rho: settings.rho,
            },
        });
    }

    let mut x = x_start.clone();
    let mut y = vec![0.0; m];
    if let Some(w) = warm {
        if w.x.len() == n {
            x.clone_from(&w.x);
        }
        if w.y.len() == m {
            y.clone_from(&w.y);
        }
    }
    let mut z = vec![0.0; m];
    stacked_mul(problem, &x, &mut z);
    project(problem, &mut z);

    let mut rho = settings.rho;
    let mut kkt = KktSolver::new(problem, &components, settings, rho)?;

    let (sigma, alpha) = (settings.sigma, settings.alpha);
    let mut x_tilde = vec![0.0; n];
    let mut z_tilde = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut px = vec![0.0; n];
    let mut aty = vec![0.0; n];
    let mut x_prev = x.clone();

    let mut best: Option<(f64, Vec<f64>, Vec<f64>, f64, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);

    for iter in 1..=settings.max_iter {
        iterations = iter;
        x_prev.copy_from_slice(&x);
        let rho_eq = rho * settings.eq_rho_scale;
        // rhs = σx − c + Aᵀ(R z − y)
        for i in 0..n {
            rhs[i] = sigma * x[i] - problem.c[i] + rho * z[i] - y[i];
        }
        for i in 0..n_eq {
            tmp_m[i] = rho_eq * z[n + i] - y[n + i];
        }
        problem.eq.mul_t_add(&tmp_m[..n_eq], &mut rhs);
        kkt.solve(&rhs, &mut x_tilde);
        stacked_mul(problem, &x_tilde, &mut z_tilde);

        for i in 0..n {
            x[i] = alpha * x_tilde[i] + (1.0 - alpha) * x[i];
        }
        for i in 0..m {
            let r = if i < n { rho } else { rho_eq };
            let relaxed = alpha * z_tilde[i] + (1.0 - alpha) * z[i];
            let z_new = clamp_row(problem, i, relaxed + y[i] / r);
            y[i] += r * (relaxed - z_new);
            z[i] = z_new;
        }

        // residuals
        stacked_mul(problem, &x, &mut tmp_m);
        r_prim = tmp_m.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        problem.p.mul_vec(&x, &mut px);
        aty.copy_from_slice(&y[..n]);
        problem.eq.mul_t_add(&y[n..], &mut aty);
        r_dual = (0..n)
            .map(|i| (px[i] + problem.c[i] + aty[i]).abs())
            .fold(0.0, f64::max);

        if settings.trace_every > 0 && iter % settings.trace_every == 0 {
            log::debug!("qp iter {iter}: prim {r_prim:.3e} dual {r_dual:.3e} rho {rho:.3e}");
        }
        if !r_prim.is_finite() || !r_dual.is_finite() {
            return Err(Error::Numerical(format!("QP iterates diverged at iteration {iter}")));
        }
        let score = r_prim.max(r_dual);
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, x.clone(), y.clone(), r_prim, r_dual));
        }
        if r_prim <= settings.tol && r_dual <= settings.tol {
            converged = true;
            break;
        }

        if iter % 50 == 0 {
            check_curvature(&problem.p, &x, &x_prev)?;
        }

        if settings.adaptive_rho && iter % settings.adapt_interval == 0 {
            let ax_norm = tmp_m.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let z_norm = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let px_norm = px.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let aty_norm = aty.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let c_norm = problem.c.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let prim_rel = r_prim / ax_norm.max(z_norm).max(1e-12);
            let dual_rel = r_dual / px_norm.max(aty_norm).max(c_norm).max(1e-12);
            let ratio = (prim_rel / dual_rel.max(1e-30)).sqrt();
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                if new_rho != rho {
                    rho = new_rho;
                    kkt = KktSolver::new(problem, &components, settings, rho)?;
                }
            }
        }
    }

    let (mut x, y, r_prim, r_dual) = if converged {
        (x, y, r_prim, r_dual)
    } else {
        log::warn!("QP solver hit max_iter = {} without converging", settings.max_iter);
        let (_, bx, by, bp, bd) = best.expect("at least one iteration");
        (bx, by, bp, bd)
    };
    for i in 0..n {
        x[i] = x[i].clamp(problem.lower[i], problem.upper[i]);
    }
    let mut objective = problem.objective(&x);
    if start_feasible && objective > start_obj && warm.is_none() {
        x = x_start;
        objective = start_obj;
    }
    Ok(QpSolution {
        x,
        y,
        report: SolveReport {
            objective,
            iterations,
            primal_residual: r_prim,
            dual_residual: r_dual,
            converged,
            rank_deficient,
            final_rho: rho,
        },
    })
}

/// `out = [x; E x]`
fn stacked_mul(problem: &QpProblem, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    out[..n].copy_from_slice(x);
    problem.eq.mul(x, &mut out[n..]);
}

fn clamp_row(problem: &QpProblem, i: usize, v: f64) -> f64 {
    let n = problem.dim();
    if i < n {
        v.clamp(problem.lower[i], problem.upper[i])
    } else {
        problem.eq.rhs[i - n]
    }
}

fn project(problem: &QpProblem, z: &mut [f64]) {
    for i in 0..z.len() {
        z[i] = clamp_row(problem, i, z[i]);
    }
}

fn check_curvature(p: &SymMatrix, x: &[f64], x_prev: &[f64]) -> Result<()> {
    let d: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let norm2: f64 = d.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Ok(());
    }
    let curv = p.quad_form(&d) / norm2;
    if curv < -1e-8 {
        return Err(Error::Validation(format!(
            "P is not positive semidefinite (curvature {curv:e} along an iterate direction)"
        )));
    }
    Ok(())
}

/// Midpoint of the (finite parts of the) bounds, then alternating projections
/// onto the equality set and the box.
fn starting_point(problem: &QpProblem) -> Vec<f64> {
    let n = problem.dim();
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let (l, u) = (problem.lower[i], problem.upper[i]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l.max(0.0),
                (false, true) => u.min(0.0),
                (false, false) => 0.0,
            }
        })
        .collect();
    if problem.eq.is_empty() {
        return x;
    }
    for _ in 0..100 {
        project_onto_equalities(&problem.eq, &mut x);
        if problem.infeasibility(&x) <= 1e-12 {
            break;
        }
        for i in 0..n {
            x[i] = x[i].clamp(problem.lower[i], problem.upper[i]);
        }
        if problem.infeasibility(&x) <= 1e-12 {
            break;
        }
    }
    x
}

/// `x ← x − Eᵀ (E Eᵀ)⁺ (E x − d)` via conjugate gradients on `E Eᵀ`.
fn project_onto_equalities(eq: &EqualityRows, x: &mut [f64]) {
    let k = eq.len();
    let mut ex = vec![0.0; k];
    eq.mul(x, &mut ex);
    let b: Vec<f64> = ex.iter().zip(&eq.rhs).map(|(a, d)| a - d).collect();
    let n = x.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut tmp = vec![0.0; n];
        eq.mul_t_add(v, &mut tmp);
        eq.mul(&tmp, out);
    };
    let mut lam = vec![0.0; k];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let stop = 1e-28 * b.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let mut ap = vec![0.0; k];
    for _ in 0..(4 * k).max(50) {
        if rs <= stop {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rs / pap;
        for i in 0..k {
            lam[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        for i in 0..k {
            p[i] = r[i] + rs_new / rs * p[i];
        }
        rs = rs_new;
    }
    let mut corr = vec![0.0; n];
    eq.mul_t_add(&lam, &mut corr);
    for (xi, ci) in x.iter_mut().zip(corr) {
        *xi -= ci;
    }
}

/// Connected components of the sparsity graph of `P`.
fn components(p: &SymMatrix) -> Vec<Vec<usize>> {
    let n = p.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for &(j, _) in p.row(i) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

fn dense_block(p: &SymMatrix, idx: &[usize], shift: f64) -> DMatrix<f64> {
    let mut local = std::collections::HashMap::with_capacity(idx.len());
    for (a, &i) in idx.iter().enumerate() {
        local.insert(i, a);
    }
    let b = idx.len();
    let mut m = DMatrix::zeros(b, b);
    for (a, &i) in idx.iter().enumerate() {
        for &(j, v) in p.row(i) {
            if let Some(&c) = local.get(&j) {
                m[(a, c)] = v;
            }
        }
        m[(a, a)] += shift;
    }
    m
}

fn detect_rank_deficiency(p: &SymMatrix, comps: &[Vec<usize>]) -> bool {
    for idx in comps {
        let block = dense_block(p, idx, 0.0);
        let scale = block.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if scale == 0.0 {
            return true;
        }
        let jitter = 1e-13 * scale;
        let Some(ch) = Cholesky::new(dense_block(p, idx, jitter)) else {
            return true;
        };
        let l = ch.l_dirty();
        let min_pivot = (0..idx.len()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-9 * scale {
            return true;
        }
    }
    false
}

/// Factorisations for the x-update system.
struct KktSolver<'a> {
    problem: &'a QpProblem,
    blocks: Vec<(Vec<usize>, Cholesky<f64, Dyn>)>,
    schur: Option<Cholesky<f64, Dyn>>,
    rho_eq: f64,
    shift: f64,
}

impl<'a> KktSolver<'a> {
    fn new(problem: &'a QpProblem, comps: &[Vec<usize>], settings: &SolverSettings, rho: f64) -> Result<Self> {
        let shift = settings.sigma + rho;
        let mut blocks = Vec::with_capacity(comps.len());
        for idx in comps {
            let ch = Cholesky::new(dense_block(&problem.p, idx, shift)).ok_or_else(|| {
                Error::Validation("P is not positive semidefinite (block factorisation failed)".into())
            })?;
            blocks.push((idx.clone(), ch));
        }
        let rho_eq = rho * settings.eq_rho_scale;
        let mut solver = Self {
            problem,
            blocks,
            schur: None,
            rho_eq,
            shift,
        };
        let n_eq = problem.eq.len();
        if n_eq > 0 && n_eq <= settings.dense_schur_limit {
            solver.schur = Some(solver.build_schur()?);
        }
        Ok(solver)
    }

    /// `S = ρ_eq⁻¹ I + E K⁻¹ Eᵀ`
    fn build_schur(&self) -> Result<Cholesky<f64, Dyn>> {
        let n = self.problem.dim();
        let eq = &self.problem.eq;
        let n_eq = eq.len();
        let mut block_of = vec![(0usize, 0usize); n];
        for (b, (idx, _)) in self.blocks.iter().enumerate() {
            for (a, &i) in idx.iter().enumerate() {
                block_of[i] = (b, a);
            }
        }
        // rows touching each block
        let mut touching: Vec<Vec<usize>> = vec![Vec::new(); self.blocks.len()];
        for (r, row) in eq.rows.iter().enumerate() {
            for &(j, _) in row {
                let b = block_of[j].0;
                if touching[b].last() != Some(&r) {
                    touching[b].push(r);
                }
            }
        }
        let mut s = DMatrix::from_diagonal_element(n_eq, n_eq, 1.0 / self.rho_eq);
        for (b, (idx, ch)) in self.blocks.iter().enumerate() {
            let rows = &touching[b];
            if rows.is_empty() {
                continue;
            }
            let mut eb = DMatrix::zeros(idx.len(), rows.len());
            for (c, &r) in rows.iter().enumerate() {
                for &(j, v) in &eq.rows[r] {
                    let (bj, a) = block_of[j];
                    if bj == b {
                        eb[(a, c)] += v;
                    }
                }
            }
            let solved = ch.solve(&eb);
            let contrib = eb.transpose() * solved;
            for (c1, &r1) in rows.iter().enumerate() {
                for (c2, &r2) in rows.iter().enumerate() {
                    s[(r1, r2)] += contrib[(c1, c2)];
                }
            }
        }
        Cholesky::new(s).ok_or_else(|| Error::Numerical("equality Schur complement is not positive definite".into()))
    }

    fn solve_k(&self, rhs: &[f64], out: &mut [f64]) {
        for (idx, ch) in &self.blocks {
            let v = DVector::from_iterator(idx.len(), idx.iter().map(|&i| rhs[i]));
            let sol = ch.solve(&v);
            for (a, &i) in idx.iter().enumerate() {
                out[i] = sol[a];
            }
        }
    }

    fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let eq = &self.problem.eq;
        if eq.is_empty() {
            self.solve_k(rhs, out);
            return;
        }
        match &self.schur {
            Some(schur) => {
                // x = K⁻¹b − K⁻¹Eᵀ S⁻¹ E K⁻¹ b
                let n = rhs.len();
                let mut kb = vec![0.0; n];
                self.solve_k(rhs, &mut kb);
                let mut ekb = vec![0.0; eq.len()];
                eq.mul(&kb, &mut ekb);
                let w = schur.solve(&DVector::from_vec(ekb));
                let mut etw = vec![0.0; n];
                eq.mul_t_add(w.as_slice(), &mut etw);
                let mut corr = vec![0.0; n];
                self.solve_k(&etw, &mut corr);
                for i in 0..n {
                    out[i] = kb[i] - corr[i];
                }
            }
            None => self.solve_pcg(rhs, out),
        }
    }

    fn apply_full(&self, v: &[f64], out: &mut [f64]) {
        let eq = &self.problem.eq;
        self.problem.p.mul_vec(v, out);
        for i in 0..v.len() {
            out[i] += self.shift * v[i];
        }
        let mut ev = vec![0.0; eq.len()];
        eq.mul(v, &mut ev);
        for e in ev.iter_mut() {
            *e *= self.rho_eq;
        }
        eq.mul_t_add(&ev, out);
    }

    /// Conjugate gradients on the full system, preconditioned by `K⁻¹`.
    fn solve_pcg(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        // warm start from the previous x-update held in `out`
        let mut ax = vec![0.0; n];
        self.apply_full(out, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut zv = vec![0.0; n];
        self.solve_k(&r, &mut zv);
        let mut p = zv.clone();
        let mut rz: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..500 {
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= 1e-12 * bnorm {
                break;
            }
            self.apply_full(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                out[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            self.solve_k(&r, &mut zv);
            let rz_new: f64 = r.iter().zip(&zv).map(|(a, b)| a * b).sum();
            for i in 0..n {
                p[i] = zv[i] + rz_new / rz * p[i];
            }
            rz = rz_new;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(p: Vec<Vec<f64>>, c: Vec<f64>, eq: EqualityRows) -> QpProblem {
        let n = c.len();
        QpProblem {
            p: SymMatrix::from_dense(&p),
            c,
            eq,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            constant: 0.0,
        }
    }

    #[test]
    fn symmetric_projection() {
        let prob = simple(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            EqualityRows {
                rows: vec![vec![(0, 1.0), (1, 1.0)]],
                rhs: vec![1.0],
            },
        );
        let sol = solve(&prob, &SolverSettings::default()).unwrap();
        assert!(sol.report.converged);
        assert!((sol.x[0] - 0.5).abs() < 1e-6 && (sol.x[1] - 0.5).abs() < 1e-6);
        assert!((sol.report.objective - 0.25).abs() < 1e-6);
        assert!(!sol.report.rank_deficient);
    }

    #[test]
    fn linear_program_corner() {
        let prob = simple(vec![vec![0.0; 2]; 2], vec![1.0, -1.0], EqualityRows::default());
        let sol = solve(&prob, &SolverSettings::default()).unwrap();
        assert!(sol.x[0].abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6, "{:?}", sol);
        assert!(sol.report.rank_deficient);
    }

    #[test]
    fn rejects_bad_problems() {
        let mut prob = simple(vec![vec![1.0, 0.5], vec![0.4, 1.0]], vec![0.0; 2], EqualityRows::default());
        assert!(matches!(solve(&prob, &SolverSettings::default()), Err(Error::Validation(_))));
        prob.p = SymMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        prob.c[0] = f64::NAN;
        assert!(matches!(solve(&prob, &SolverSettings::default()), Err(Error::Validation(_))));
        let neg = simple(vec![vec![-1.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2], EqualityRows::default());
        assert!(matches!(solve(&neg, &SolverSettings::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn pcg_path_matches_direct_path() {
        let prob = simple(
            vec![vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.0], vec![0.0, 0.0, 0.5]],
            vec![-1.0, 0.3, -0.2],
            EqualityRows {
                rows: vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)]],
                rhs: vec![1.0],
            },
        );
        let direct = solve(&prob, &SolverSettings::default()).unwrap();
        let pcg = solve(
            &prob,
            &SolverSettings {
                dense_schur_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(direct.report.converged && pcg.report.converged);
        for (a, b) in direct.x.iter().zip(&pcg.x) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn not_converged_returns_flagged_best_iterate() {
        let prob = simple(
            vec![vec![1.0, 0.9], vec![0.9, 1.0]],
            vec![-1.0, 0.2],
            EqualityRows::default(),
        );
        let sol = solve(
            &prob,
            &SolverSettings {
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 2);
        assert!(prob.infeasibility(&sol.x) <= 1e-12);
    }
}
