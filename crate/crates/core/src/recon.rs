//! Linear reconciliation `π̃ = A π̂` with a trained reassignment matrix.
//!
//! Columns of `A` are indexed by complete-domain points and rows by coherent
//! points. Mass at a coherent point stays there; mass at an incoherent point
//! may only move to its nearest coherent points in L1 distance, in shares
//! chosen to minimise the average Brier score over training pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierarchy::{DomainKind, DomainTables, IndexedPmf};
use crate::qp::{self, EqualityRows, QpProblem, SolveReport, SolverSettings, SymMatrix, WarmStart};

/// Which coherent points an incoherent column may send mass to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementRule {
    /// All coherent points at minimum L1 distance.
    #[default]
    Nearest,
    /// Every coherent point.
    Unrestricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeColumn {
    pub j: usize,
    pub targets: Vec<usize>,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementPattern {
    pub r: usize,
    pub q: usize,
    pub rule: MovementRule,
    /// `(j, k)`: coherent complete-domain column `j` maps to coherent index `k`.
    pub fixed_cols: Vec<(usize, usize)>,
    /// Incoherent columns with their admissible targets, ascending in `j`.
    pub free_cols: Vec<FreeColumn>,
    /// Minimum L1 cost per complete-domain column (0 for coherent columns).
    pub costs_min: Vec<u32>,
    pub hierarchy_fingerprint: String,
}

impl MovementPattern {
    /// Number of `(k, j)` entries attached to incoherent columns.
    pub fn n_free_entries(&self) -> usize {
        self.free_cols.iter().map(|c| c.targets.len()).sum()
    }

    /// Entries that enter the optimisation (columns with at least two targets).
    pub fn n_decision_vars(&self) -> usize {
        self.free_cols
            .iter()
            .filter(|c| c.targets.len() > 1)
            .map(|c| c.targets.len())
            .sum()
    }

    /// Fixed plus free entries.
    pub fn n_parameters(&self) -> usize {
        self.fixed_cols.len() + self.n_free_entries()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}:{:?}:{}x{};", self.hierarchy_fingerprint, self.rule, self.r, self.q));
        for c in &self.free_cols {
            h.update(format!("{}:{:?};", c.j, c.targets));
        }
        hex::encode(h.finalize())
    }
}

fn l1(a: &[u32], b: &[u32]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).sum()
}

pub fn build_movement_pattern(tbl: &DomainTables) -> MovementPattern {
    build_movement_pattern_with(tbl, MovementRule::Nearest)
}

pub fn build_movement_pattern_with(tbl: &DomainTables, rule: MovementRule) -> MovementPattern {
    let q = tbl.q();
    let r = tbl.r();
    let mut fixed_cols = Vec::with_capacity(r);
    let mut free_cols = Vec::with_capacity(q - r);
    let mut costs_min = vec![0u32; q];
    for j in 0..q {
        if let Some(k) = tbl.coherent_index_of(j) {
            fixed_cols.push((j, k));
            continue;
        }
        let pj = tbl.complete_point(j);
        let costs: Vec<u32> = (0..r).map(|k| l1(pj, tbl.coherent_point(k))).collect();
        let min = *costs.iter().min().expect("coherent domain is nonempty");
        costs_min[j] = min;
        let targets = match rule {
            MovementRule::Nearest => (0..r).filter(|&k| costs[k] == min).collect(),
            MovementRule::Unrestricted => (0..r).collect(),
        };
        free_cols.push(FreeColumn { j, targets, cost: min });
    }
    MovementPattern {
        r,
        q,
        rule,
        fixed_cols,
        free_cols,
        costs_min,
        hierarchy_fingerprint: tbl.hierarchy().fingerprint(),
    }
}

/// A base forecast and the coherent index that was realised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPair {
    pub base: IndexedPmf,
    pub realized: usize,
}

impl ForecastPair {
    pub fn new(base: IndexedPmf, realized: usize, r: usize) -> Result<Self> {
        if base.kind != DomainKind::Complete {
            return Err(Error::Validation("base forecast must be on the complete domain".into()));
        }
        if realized >= r {
            return Err(Error::Shape(format!("realised index {realized} outside coherent domain of size {r}")));
        }
        Ok(Self { base, realized })
    }

    /// One-hot vector over the coherent domain.
    pub fn realization(&self, r: usize) -> Vec<f64> {
        let mut z = vec![0.0; r];
        z[self.realized] = 1.0;
        z
    }
}

/// Sparse `r × q` column-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconMatrix {
    pub r: usize,
    pub q: usize,
    /// `[k, j, value]`, sorted by `j` then `k`.
    pub triplets: Vec<(usize, usize, f64)>,
    pub horizon: usize,
    pub pattern_hash: String,
}

pub(crate) const COLUMN_TOL: f64 = 1e-8;

impl ReconMatrix {
    pub fn from_triplets(
        r: usize,
        q: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        horizon: usize,
        pattern_hash: String,
    ) -> Result<Self> {
        triplets.retain(|t| t.2 != 0.0);
        triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let m = Self {
            r,
            q,
            triplets,
            horizon,
            pattern_hash,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sums = vec![0.0; self.q];
        for &(k, j, v) in &self.triplets {
            if k >= self.r || j >= self.q {
                return Err(Error::Shape(format!("entry ({k}, {j}) outside {}x{}", self.r, self.q)));
            }
            if !(-1e-10..=1.0 + 1e-10).contains(&v) {
                return Err(Error::Validation(format!("entry ({k}, {j}) = {v} outside [0, 1]")));
            }
            sums[j] += v;
        }
        if let Some((j, s)) = sums.iter().enumerate().find(|(_, s)| (**s - 1.0).abs() > COLUMN_TOL) {
            return Err(Error::Validation(format!("column {j} sums to {s}")));
        }
        Ok(())
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.triplets
            .iter()
            .filter(|t| t.0 == k && t.1 == j)
            .map(|t| t.2)
            .sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.q]; self.r];
        for &(k, j, v) in &self.triplets {
            d[k][j] += v;
        }
        d
    }

    /// `π̃ = A π̂`, with round-off below zero clamped and the result renormalised.
    pub fn apply(&self, base: &IndexedPmf) -> Result<IndexedPmf> {
        if base.kind != DomainKind::Complete || base.len() != self.q {
            return Err(Error::Shape(format!(
                "matrix expects a complete-domain pmf of length {}, got {:?} of length {}",
                self.q,
                base.kind,
                base.len()
            )));
        }
        Ok(IndexedPmf::new_unchecked(DomainKind::Coherent, self.apply_raw(&base.probs)))
    }

    pub(crate) fn apply_raw(&self, base: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        for &(k, j, v) in &self.triplets {
            out[k] += v * base[j];
        }
        clean_pmf(&mut out);
        out
    }

    pub fn ensure_pattern(&self, expected_hash: &str, tbl: &DomainTables) -> Result<()> {
        if self.r != tbl.r() || self.q != tbl.q() {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, hierarchy needs {}x{}",
                self.r,
                self.q,
                tbl.r(),
                tbl.q()
            )));
        }
        if self.pattern_hash != expected_hash {
            return Err(Error::Validation("reconciliation matrix was trained for a different pattern".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Clamps values in `[-1e-10, 0)` to zero and rescales to unit mass.
pub(crate) fn clean_pmf(p: &mut [f64]) {
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    if s > 0.0 && s != 1.0 {
        for v in p.iter_mut() {
            *v /= s;
        }
    }
}

/// Mean Brier score of `A π̂` against the realisations.
pub fn mean_brier(a: &ReconMatrix, pairs: &[ForecastPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|p| crate::evaluation::brier_unchecked(&a.apply_raw(&p.base.probs), p.realized))
        .sum::<f64>()
        / pairs.len() as f64
}

/// QP over the shares of the multi-target incoherent columns.
#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub problem: QpProblem,
    /// `(k, j)` for each decision variable, in problem order.
    pub vars: Vec<(usize, usize)>,
    /// No decision variables remain; `A` is fully determined by the pattern.
    pub degenerate: bool,
}

/// Entries fixed to 1: coherent columns and incoherent columns with one target.
fn fixed_entries(pattern: &MovementPattern) -> impl Iterator<Item = (usize, usize)> + '_ {
    pattern
        .fixed_cols
        .iter()
        .map(|&(j, k)| (k, j))
        .chain(pattern.free_cols.iter().filter(|c| c.targets.len() == 1).map(|c| (c.targets[0], c.j)))
}

/// Expands `(1/T) Σ_t ‖A π̂_t − z_t‖²` into `½ xᵀPx + cᵀx + constant`.
pub fn assemble_qp(pairs: &[ForecastPair], pattern: &MovementPattern) -> Result<AssembledQp> {
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let (r, q) = (pattern.r, pattern.q);
    for (i, p) in pairs.iter().enumerate() {
        if p.base.len() != q || p.realized >= r {
            return Err(Error::Shape(format!("pair {i} does not match a {r}x{q} pattern")));
        }
    }
    let vars: Vec<(usize, usize)> = pattern
        .free_cols
        .iter()
        .filter(|c| c.targets.len() > 1)
        .flat_map(|c| c.targets.iter().map(move |&k| (k, c.j)))
        .collect();
    let nv = vars.len();
    let t_len = pairs.len() as f64;
    let fixed: Vec<(usize, usize)> = fixed_entries(pattern).collect();

    // residual of the fixed part per pair: d_t = F π̂_t − z_t
    let residuals: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            let mut d = vec![0.0; r];
            for &(k, j) in &fixed {
                d[k] += p.base.probs[j];
            }
            d[p.realized] -= 1.0;
            d
        })
        .collect();
    let constant = residuals
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / t_len;

    let mut c = vec![0.0; nv];
    for (p, d) in pairs.iter().zip(&residuals) {
        for (e, &(k, j)) in vars.iter().enumerate() {
            c[e] += p.base.probs[j] * d[k];
        }
    }
    for v in c.iter_mut() {
        *v *= 2.0 / t_len;
    }

    // Variables sharing a target row interact; P is block diagonal by row.
    let mut by_row: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, &(k, _)) in vars.iter().enumerate() {
        by_row.entry(k).or_default().push(e);
    }
    let mut triplets = Vec::new();
    for members in by_row.values() {
        let cols: Vec<usize> = members.iter().map(|&e| vars[e].1).collect();
        let m = nalgebra::DMatrix::from_fn(pairs.len(), cols.len(), |t, a| pairs[t].base.probs[cols[a]]);
        let gram = m.transpose() * &m;
        for a in 0..members.len() {
            for b in a..members.len() {
                let v = gram[(a, b)] * 2.0 / t_len;
                if v != 0.0 {
                    triplets.push((members[a], members[b], v));
                }
            }
        }
    }
    let p = SymMatrix::from_upper_triplets(nv, triplets);

    let mut eq = EqualityRows::default();
    let mut offset = 0;
    for col in pattern.free_cols.iter().filter(|c| c.targets.len() > 1) {
        eq.rows.push((offset..offset + col.targets.len()).map(|e| (e, 1.0)).collect());
        eq.rhs.push(1.0);
        offset += col.targets.len();
    }
    Ok(AssembledQp {
        problem: QpProblem {
            p,
            c,
            eq,
            lower: vec![0.0; nv],
            upper: vec![1.0; nv],
            constant,
        },
        vars,
        degenerate: nv == 0,
    })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite shares"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Builds the matrix from the pattern and the decision values of `assembled`.
pub fn matrix_from_solution(
    assembled: &AssembledQp,
    x: &[f64],
    pattern: &MovementPattern,
    horizon: usize,
) -> Result<ReconMatrix> {
    let mut triplets: Vec<(usize, usize, f64)> = fixed_entries(pattern).map(|(k, j)| (k, j, 1.0)).collect();
    let mut start = 0;
    while start < assembled.vars.len() {
        let j = assembled.vars[start].1;
        let mut end = start;
        while end < assembled.vars.len() && assembled.vars[end].1 == j {
            end += 1;
        }
        let mut shares = x[start..end].to_vec();
        project_simplex(&mut shares);
        for (e, s) in (start..end).zip(shares) {
            triplets.push((assembled.vars[e].0, j, s));
        }
        start = end;
    }
    ReconMatrix::from_triplets(pattern.r, pattern.q, triplets, horizon, pattern.hash())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDfr {
    pub matrix: ReconMatrix,
    /// Absent when the problem had no decision variables.
    pub report: Option<SolveReport>,
    pub n_decision_vars: usize,
    /// Decision values and multipliers, usable as a warm start elsewhere.
    pub warm: Option<WarmStart>,
}

pub fn solve_qp(
    assembled: &AssembledQp,
    pattern: &MovementPattern,
    horizon: usize,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<TrainedDfr> {
    if assembled.degenerate {
        return Ok(TrainedDfr {
            matrix: matrix_from_solution(assembled, &[], pattern, horizon)?,
            report: None,
            n_decision_vars: 0,
            warm: None,
        });
    }
    let sol = qp::solve_warm(&assembled.problem, settings, warm)?;
    if !sol.report.converged {
        log::warn!(
            "reconciliation QP for horizon {horizon} stopped after {} iterations (residuals {:.2e}/{:.2e})",
            sol.report.iterations,
            sol.report.primal_residual,
            sol.report.dual_residual
        );
    }
    let matrix = matrix_from_solution(assembled, &sol.x, pattern, horizon)?;
    Ok(TrainedDfr {
        matrix,
        n_decision_vars: sol.x.len(),
        warm: Some(WarmStart { x: sol.x, y: sol.y }),
        report: Some(sol.report),
    })
}

/// Pattern, QP assembly and solve for one horizon.
pub fn train_dfr(
    pairs: &[ForecastPair],
    tbl: &DomainTables,
    horizon: usize,
    settings: &SolverSettings,
) -> Result<TrainedDfr> {
    let pattern = build_movement_pattern(tbl);
    train_dfr_with_pattern(pairs, &pattern, horizon, settings, None)
}

pub fn train_dfr_with_pattern(
    pairs: &[ForecastPair],
    pattern: &MovementPattern,
    horizon: usize,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<TrainedDfr> {
    let assembled = assemble_qp(pairs, pattern)?;
    solve_qp(&assembled, pattern, horizon, settings, warm)
}

/// Each incoherent column split equally among its admissible targets.
pub fn uniform_split_matrix(pattern: &MovementPattern, horizon: usize) -> Result<ReconMatrix> {
    let mut triplets: Vec<(usize, usize, f64)> = pattern.fixed_cols.iter().map(|&(j, k)| (k, j, 1.0)).collect();
    for c in &pattern.free_cols {
        let share = 1.0 / c.targets.len() as f64;
        triplets.extend(c.targets.iter().map(|&k| (k, c.j, share)));
    }
    ReconMatrix::from_triplets(pattern.r, pattern.q, triplets, horizon, pattern.hash())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{enumerate_domains, Hierarchy};

    fn tbl3() -> DomainTables {
        enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap()
    }

    fn pair(tbl: &DomainTables, probs: Vec<f64>, realized: [u32; 3]) -> ForecastPair {
        let k = tbl.point_to_index(&realized, DomainKind::Coherent).unwrap();
        ForecastPair::new(IndexedPmf::new(DomainKind::Complete, probs).unwrap(), k, tbl.r()).unwrap()
    }

    #[test]
    fn pattern_for_three_variable_example() {
        let t = tbl3();
        let pat = build_movement_pattern(&t);
        let j = t.point_to_index(&[0, 1, 0], DomainKind::Complete).unwrap();
        let col = pat.free_cols.iter().find(|c| c.j == j).unwrap();
        assert_eq!(col.cost, 1);
        let targets: Vec<&[u32]> = col.targets.iter().map(|&k| t.coherent_point(k)).collect();
        assert_eq!(targets, vec![&[0, 0, 0][..], &[0, 1, 1][..]]);
        let jc = t.point_to_index(&[1, 1, 2], DomainKind::Complete).unwrap();
        assert!(pat.fixed_cols.contains(&(jc, 3)));
        assert_eq!(pat.fixed_cols.len() + pat.free_cols.len(), 12);
        assert_eq!(pat.n_free_entries(), 22);
        assert_eq!(pat.n_decision_vars(), 22);
        for c in &pat.free_cols {
            assert!(c.targets.len() >= 2);
            for &k in &c.targets {
                assert_eq!(l1(t.complete_point(c.j), t.coherent_point(k)), pat.costs_min[c.j]);
            }
        }
    }

    #[test]
    fn point_mass_at_incoherent_point_goes_to_realised_target() {
        let t = tbl3();
        let pat = build_movement_pattern(&t);
        let j = t.point_to_index(&[0, 1, 0], DomainKind::Complete).unwrap();
        let base = IndexedPmf::point_mass(DomainKind::Complete, 12, j);
        let p = pair(&t, base.probs, [0, 1, 1]);
        let trained = train_dfr_with_pattern(&[p], &pat, 1, &SolverSettings::default(), None).unwrap();
        let k = t.point_to_index(&[0, 1, 1], DomainKind::Coherent).unwrap();
        assert!((trained.matrix.get(k, j) - 1.0).abs() < 1e-5);
        assert!(trained.report.unwrap().objective.abs() < 1e-5);
    }

    #[test]
    fn hessian_matches_brute_force_expansion() {
        let t = tbl3();
        let pat = build_movement_pattern(&t);
        let pairs = vec![
            pair(&t, (1..=12).map(|v| v as f64 / 78.0).collect(), [1, 0, 1]),
            pair(&t, (1..=12).rev().map(|v| v as f64 / 78.0).collect(), [0, 0, 0]),
        ];
        let asm = assemble_qp(&pairs, &pat).unwrap();
        let nv = asm.vars.len();
        // objective is quadratic: recover P, c, constant by finite differences
        let f = |x: &[f64]| -> f64 {
            let mut a = vec![vec![0.0; 12]; 4];
            for (jj, kk) in fixed_entries(&pat).map(|(k, j)| (j, k)) {
                a[kk][jj] = 1.0;
            }
            for (e, &(k, j)) in asm.vars.iter().enumerate() {
                a[k][j] = x[e];
            }
            pairs
                .iter()
                .map(|p| {
                    let z = p.realization(4);
                    (0..4)
                        .map(|k| {
                            let v: f64 = (0..12).map(|j| a[k][j] * p.base.probs[j]).sum();
                            (v - z[k]).powi(2)
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 2.0
        };
        let zero = vec![0.0; nv];
        assert!((f(&zero) - asm.problem.constant).abs() < 1e-14);
        for a in 0..nv {
            let mut ea = zero.clone();
            ea[a] = 1.0;
            let mut ma = zero.clone();
            ma[a] = -1.0;
            let grad = (f(&ea) - f(&ma)) / 2.0;
            assert!((grad - asm.problem.c[a]).abs() < 1e-13);
            for b in 0..nv {
                let mut eab = ea.clone();
                eab[b] += 1.0;
                let mut eb = zero.clone();
                eb[b] = 1.0;
                let second = f(&eab) - f(&ea) - f(&eb) + f(&zero);
                assert!((second - asm.problem.p.get(a, b)).abs() < 1e-13, "({a},{b})");
            }
        }
    }

    #[test]
    fn coherent_base_makes_free_values_irrelevant() {
        let t = tbl3();
        let pat = build_movement_pattern(&t);
        let mut probs = vec![0.0; 12];
        for k in 0..4 {
            probs[t.complete_index_of_coherent(k)] = 0.25;
        }
        let p = pair(&t, probs.clone(), [0, 0, 0]);
        let trained = train_dfr_with_pattern(&[p.clone()], &pat, 1, &SolverSettings::default(), None).unwrap();
        let uni = uniform_split_matrix(&pat, 1).unwrap();
        let base = IndexedPmf::new(DomainKind::Complete, probs).unwrap();
        assert_eq!(trained.matrix.apply(&base).unwrap().probs, uni.apply(&base).unwrap().probs);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = tbl3();
        let pat = build_movement_pattern(&t);
        let m = uniform_split_matrix(&pat, 2).unwrap();
        let back = ReconMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        back.ensure_pattern(&pat.hash(), &t).unwrap();
        assert!(back.ensure_pattern("other", &t).is_err());
        assert!(ReconMatrix::from_triplets(1, 1, vec![(0, 0, 0.5)], 1, String::new()).is_err());
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.6, 0.6];
        project_simplex(&mut v);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        let mut w = vec![1.2, -0.1, 0.0];
        project_simplex(&mut w);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }
}
