//! Stepwise reconciliation for two-level hierarchies with many bottom series.
//!
//! With bottoms taken in some order `b_1, ..., b_m` and partial sums
//! `S_j = b_{m-j+1} + ... + b_m`, step `i` reconciles the three-node hierarchy
//! `S_{m-i+1} = b_i + S_{m-i}`. The step joints are then made to agree on
//! their shared partial sums and glued into one joint over all bottoms.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_models::independence_product_raw;
use crate::dist::convolve;
use crate::error::{Error, Result};
use crate::evaluation::WindowForecast;
use crate::hierarchy::{enumerate_domains, DomainKind, DomainTables, Hierarchy, IndexedPmf};
use crate::qp::{SolveReport, SolverSettings};
use crate::recon::{build_movement_pattern, clean_pmf, train_dfr_with_pattern, ForecastPair, ReconMatrix};

/// Default number of random bottom orderings averaged over.
pub const DEFAULT_ORDERINGS: usize = 5;

const JOINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepNode {
    pub name: String,
    /// Bottom variables (hierarchy indices) summed by this node.
    pub members: Vec<usize>,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub left: StepNode,
    pub right: StepNode,
    pub total: StepNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPlan {
    /// Bottom indices in the order they are split off.
    pub ordering: Vec<usize>,
    pub steps: Vec<Step>,
    /// Hierarchy index of the total series.
    pub top: usize,
}

fn node(h: &Hierarchy, members: &[usize], top: usize) -> StepNode {
    let dmax = h.domain_max();
    let name = if members.len() == h.n_basis() {
        format!("y[{top}]")
    } else if members.len() == 1 {
        format!("y[{}]", members[0])
    } else {
        format!("sum[{}]", members.len())
    };
    StepNode {
        name,
        members: members.to_vec(),
        max: members.iter().map(|&i| dmax[i]).sum(),
    }
}

/// Splits a two-level hierarchy into `m − 1` three-node steps.
///
/// With two bottoms the ordering is irrelevant and the identity is used.
pub fn plan_steps(h: &Hierarchy, ordering: &[usize]) -> Result<StepPlan> {
    let m = h.n_basis();
    if !h.is_two_level() {
        return Err(Error::Config(
            "stepwise reconciliation needs a two-level hierarchy with a single total".into(),
        ));
    }
    if m < 2 {
        return Err(Error::Config("stepwise reconciliation needs at least two bottom series".into()));
    }
    let mut sorted = ordering.to_vec();
    sorted.sort_unstable();
    if sorted != (0..m).collect::<Vec<_>>() {
        return Err(Error::Config(format!("{ordering:?} is not an ordering of {m} bottom series")));
    }
    let ordering: Vec<usize> = if m == 2 { vec![0, 1] } else { ordering.to_vec() };
    let top = m;
    let steps = (0..m - 1)
        .map(|i| Step {
            left: node(h, &ordering[i..=i], top),
            right: node(h, &ordering[i + 1..], top),
            total: node(h, &ordering[i..], top),
        })
        .collect();
    Ok(StepPlan { ordering, steps, top })
}

/// `count` seeded random orderings of `m` bottoms (one ordering when `m = 2`).
pub fn random_orderings(m: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    if m <= 2 {
        return vec![(0..m).collect()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count.max(1))
        .map(|_| {
            let mut o: Vec<usize> = (0..m).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect()
}

/// Pmf of a sum of independent variables.
pub fn bottom_up_pmf(margins: &[&[f64]]) -> Result<Vec<f64>> {
    let (first, rest) = margins
        .split_first()
        .ok_or_else(|| Error::Validation("no margins to aggregate".into()))?;
    Ok(rest.iter().fold(first.to_vec(), |acc, m| convolve(&acc, m)))
}

/// Joint pmf over a list of named variables, indexed mixed-radix with the
/// first variable most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmfOverVars {
    pub vars: Vec<String>,
    pub dims: Vec<u32>,
    pub probs: Vec<f64>,
    /// Admissible points; `None` means the whole product.
    pub support: Option<Vec<bool>>,
}

impl JointPmfOverVars {
    pub fn new(vars: Vec<String>, dims: Vec<u32>, probs: Vec<f64>, support: Option<Vec<bool>>) -> Result<Self> {
        let len: usize = dims.iter().map(|&d| d as usize + 1).product();
        if vars.len() != dims.len() || probs.len() != len || support.as_ref().is_some_and(|s| s.len() != len) {
            return Err(Error::Shape(format!("joint over {} variables needs {len} probabilities", dims.len())));
        }
        let j = Self {
            vars,
            dims,
            probs,
            support,
        };
        j.check()?;
        Ok(j)
    }

    pub fn check(&self) -> Result<()> {
        crate::hierarchy::check_pmf(&self.probs, JOINT_TOL)?;
        if let Some(s) = &self.support {
            if let Some(i) = (0..self.probs.len()).find(|&i| !s[i] && self.probs[i] != 0.0) {
                return Err(Error::Validation(format!("mass {} outside the support", self.probs[i])));
            }
        }
        Ok(())
    }

    pub fn position(&self, var: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::Validation(format!("variable {var} not in joint {:?}", self.vars)))
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * (self.dims[i + 1] as usize + 1);
        }
        s
    }

    fn admissible(&self, idx: usize) -> bool {
        self.support.as_ref().map_or(true, |s| s[idx])
    }

    /// Value of the variable at `pos` for every point.
    fn values_of(&self, pos: usize) -> impl Iterator<Item = usize> + '_ {
        let stride = self.strides()[pos];
        let base = self.dims[pos] as usize + 1;
        (0..self.probs.len()).map(move |i| (i / stride) % base)
    }

    pub fn marginal(&self, var: &str) -> Result<Vec<f64>> {
        let pos = self.position(var)?;
        let mut out = vec![0.0; self.dims[pos] as usize + 1];
        for (v, p) in self.values_of(pos).zip(&self.probs) {
            out[v] += p;
        }
        Ok(out)
    }

    pub fn point(&self, idx: usize) -> Vec<u32> {
        let strides = self.strides();
        strides
            .iter()
            .zip(&self.dims)
            .map(|(&s, &d)| ((idx / s) % (d as usize + 1)) as u32)
            .collect()
    }

    fn index(&self, point: &[u32]) -> usize {
        point
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&v, &d)| acc * (d as usize + 1) + v as usize)
    }
}

/// Rescales each slice `var = j` so the marginal of `var` becomes `target`.
///
/// Slices with no mass but positive target are filled uniformly over their
/// admissible points.
pub fn adjust(joint: &JointPmfOverVars, var: &str, target: &[f64]) -> Result<JointPmfOverVars> {
    let pos = joint.position(var)?;
    if target.len() != joint.dims[pos] as usize + 1 {
        return Err(Error::Shape(format!(
            "target over {} values, {var} takes {}",
            target.len(),
            joint.dims[pos] + 1
        )));
    }
    crate::hierarchy::check_pmf(target, JOINT_TOL)?;
    let current = joint.marginal(var)?;
    let mut slice_size = vec![0usize; target.len()];
    for (i, v) in joint.values_of(pos).enumerate() {
        if joint.admissible(i) {
            slice_size[v] += 1;
        }
    }
    if let Some(v) = (0..target.len()).find(|&v| target[v] > 0.0 && slice_size[v] == 0) {
        return Err(Error::Consistency(format!("{var} = {v} has target mass but no admissible points")));
    }
    let probs = joint
        .values_of(pos)
        .zip(&joint.probs)
        .enumerate()
        .map(|(i, (v, &p))| {
            if current[v] > 0.0 {
                p * (target[v] / current[v])
            } else if joint.admissible(i) {
                target[v] / slice_size[v] as f64
            } else {
                0.0
            }
        })
        .collect();
    Ok(JointPmfOverVars {
        vars: joint.vars.clone(),
        dims: joint.dims.clone(),
        probs,
        support: joint.support.clone(),
    })
}

/// `Pr(L, R) = Σ_s Pr(L, s) Pr(R | s)`, with `s` dropped from the result.
pub fn construct_joint(left: &JointPmfOverVars, right: &JointPmfOverVars, shared: &str) -> Result<JointPmfOverVars> {
    let lp = left.position(shared)?;
    let rp = right.position(shared)?;
    if left.dims[lp] != right.dims[rp] {
        return Err(Error::Shape(format!("{shared} has different domains in the two joints")));
    }
    let lm = left.marginal(shared)?;
    let rm = right.marginal(shared)?;
    if let Some(v) = (0..lm.len()).find(|&v| (lm[v] - rm[v]).abs() > JOINT_TOL) {
        return Err(Error::Consistency(format!(
            "marginals of {shared} disagree at {v}: {} vs {}",
            lm[v], rm[v]
        )));
    }
    let keep_l: Vec<usize> = (0..left.vars.len()).filter(|&i| i != lp).collect();
    let keep_r: Vec<usize> = (0..right.vars.len()).filter(|&i| i != rp).collect();
    let vars: Vec<String> = keep_l
        .iter()
        .map(|&i| left.vars[i].clone())
        .chain(keep_r.iter().map(|&i| right.vars[i].clone()))
        .collect();
    let dims: Vec<u32> = keep_l
        .iter()
        .map(|&i| left.dims[i])
        .chain(keep_r.iter().map(|&i| right.dims[i]))
        .collect();
    let len: usize = dims.iter().map(|&d| d as usize + 1).product();
    let mut probs = vec![0.0; len];
    let mut reach = vec![false; len];

    let mut right_by_s: Vec<Vec<(Vec<u32>, f64, bool)>> = vec![Vec::new(); rm.len()];
    for i in 0..right.probs.len() {
        let pt = right.point(i);
        let rest: Vec<u32> = keep_r.iter().map(|&d| pt[d]).collect();
        right_by_s[pt[rp] as usize].push((rest, right.probs[i], right.admissible(i)));
    }
    let mut out = JointPmfOverVars {
        vars,
        dims,
        probs: Vec::new(),
        support: None,
    };
    let mut buf: Vec<u32> = Vec::with_capacity(out.dims.len());
    for i in 0..left.probs.len() {
        if !left.admissible(i) {
            continue;
        }
        let pt = left.point(i);
        let s = pt[lp] as usize;
        let pl = left.probs[i];
        for (rest, pr, ok) in &right_by_s[s] {
            if !ok {
                continue;
            }
            buf.clear();
            buf.extend(keep_l.iter().map(|&d| pt[d]));
            buf.extend_from_slice(rest);
            let idx = out.index(&buf);
            reach[idx] = true;
            if pl > 0.0 && rm[s] > 0.0 {
                probs[idx] += pl * pr / rm[s];
            }
        }
    }
    clean_pmf(&mut probs);
    out.probs = probs;
    out.support = if reach.iter().all(|&r| r) { None } else { Some(reach) };
    out.check()?;
    Ok(out)
}

/// Trained step matrices for one ordering and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfrModel {
    pub plan: StepPlan,
    pub horizon: usize,
    pub steps: Vec<ReconMatrix>,
    pub hierarchy_fingerprint: String,
}

/// A model together with the step domain tables it needs.
#[derive(Debug, Clone)]
pub struct PreparedSdfr {
    pub model: SdfrModel,
    tables: Vec<DomainTables>,
}

fn step_tables(plan: &StepPlan) -> Result<Vec<DomainTables>> {
    plan.steps
        .iter()
        .map(|s| {
            let h = Hierarchy::two_level(vec![s.left.max, s.right.max])?.with_names(vec![
                s.left.name.clone(),
                s.right.name.clone(),
                s.total.name.clone(),
            ])?;
            enumerate_domains(&h)
        })
        .collect()
}

impl SdfrModel {
    pub fn prepare(self) -> Result<PreparedSdfr> {
        let tables = step_tables(&self.plan)?;
        if tables.len() != self.steps.len() {
            return Err(Error::Shape("one matrix per step required".into()));
        }
        for (t, a) in tables.iter().zip(&self.steps) {
            if a.r != t.r() || a.q != t.q() {
                return Err(Error::Shape("step matrix does not match its step domain".into()));
            }
        }
        Ok(PreparedSdfr { model: self, tables })
    }
}

/// Reconciled step joint over `(left, right)` and the marginal of `right`.
fn run_step(
    a: &ReconMatrix,
    tbl: &DomainTables,
    left: &[f64],
    right: &[f64],
    total: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = independence_product_raw(&[left, right, total], tbl)?;
    let rec = a.apply_raw(&base);
    let nr = right.len();
    let mut right_marg = vec![0.0; nr];
    for (k, p) in rec.iter().enumerate() {
        right_marg[k % nr] += p;
    }
    Ok((rec, right_marg))
}

fn bottom_up_for(step: &Step, margins: &[&[f64]]) -> Result<Vec<f64>> {
    bottom_up_pmf(&step.right.members.iter().map(|&i| margins[i]).collect::<Vec<_>>())
}

/// Trains one DFR per step, feeding each step's reconciled right-node
/// marginal forward as the next step's total forecast.
pub fn train_sdfr(
    windows: &[WindowForecast],
    tbl: &DomainTables,
    ordering: &[usize],
    horizon: usize,
    settings: &SolverSettings,
) -> Result<(SdfrModel, Vec<Option<SolveReport>>)> {
    if windows.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    let h = tbl.hierarchy();
    let plan = plan_steps(h, ordering)?;
    let tables = step_tables(&plan)?;
    let mut totals: Vec<Vec<f64>> = windows.iter().map(|w| w.margins[plan.top].probs.clone()).collect();
    let mut steps = Vec::with_capacity(plan.steps.len());
    let mut reports = Vec::with_capacity(plan.steps.len());
    for (step, stbl) in plan.steps.iter().zip(&tables) {
        let pairs = windows
            .par_iter()
            .zip(&totals)
            .map(|(w, total)| {
                let margins: Vec<&[f64]> = w.margins.iter().map(|m| m.probs.as_slice()).collect();
                let right = bottom_up_for(step, &margins)?;
                let base = independence_product_raw(&[margins[step.left.members[0]], &right, total], stbl)?;
                let l = w.observed[step.left.members[0]];
                let r: u32 = step.right.members.iter().map(|&i| w.observed[i]).sum();
                let k = stbl.basis_to_coherent_index(&[l, r])?;
                ForecastPair::new(IndexedPmf::new_unchecked(DomainKind::Complete, base), k, stbl.r())
            })
            .collect::<Result<Vec<_>>>()?;
        let pattern = build_movement_pattern(stbl);
        let trained = train_dfr_with_pattern(&pairs, &pattern, horizon, settings, None)?;
        totals = pairs
            .par_iter()
            .map(|p| {
                let rec = trained.matrix.apply_raw(&p.base.probs);
                let nr = step.right.max as usize + 1;
                let mut marg = vec![0.0; nr];
                for (k, v) in rec.iter().enumerate() {
                    marg[k % nr] += v;
                }
                marg
            })
            .collect();
        steps.push(trained.matrix);
        reports.push(trained.report);
    }
    Ok((
        SdfrModel {
            plan,
            horizon,
            steps,
            hierarchy_fingerprint: h.fingerprint(),
        },
        reports,
    ))
}

/// Joint over `(S_total, left, right)` with `S_total = left + right`.
fn step_joint(rec: &[f64], step: &Step) -> Result<JointPmfOverVars> {
    let (dl, dr) = (step.left.max, step.right.max);
    let dims = vec![dl + dr, dl, dr];
    let len = (dl + dr + 1) as usize * (dl + 1) as usize * (dr + 1) as usize;
    let mut probs = vec![0.0; len];
    let mut support = vec![false; len];
    for l in 0..=dl {
        for r in 0..=dr {
            let idx = (((l + r) * (dl + 1) + l) * (dr + 1) + r) as usize;
            probs[idx] = rec[(l * (dr + 1) + r) as usize];
            support[idx] = true;
        }
    }
    Ok(JointPmfOverVars {
        vars: vec![step.total.name.clone(), step.left.name.clone(), step.right.name.clone()],
        dims,
        probs,
        support: Some(support),
    })
}

impl PreparedSdfr {
    /// Coherent joint forecast on the full hierarchy from per-variable margins.
    pub fn forecast(&self, margins: &[&[f64]], tbl: &DomainTables) -> Result<IndexedPmf> {
        let plan = &self.model.plan;
        if tbl.hierarchy().fingerprint() != self.model.hierarchy_fingerprint {
            return Err(Error::Validation("stepwise model was trained on a different hierarchy".into()));
        }
        if margins.len() != tbl.n() {
            return Err(Error::Shape(format!("{} margins for {} variables", margins.len(), tbl.n())));
        }
        let mut total = margins[plan.top].to_vec();
        let mut recs = Vec::with_capacity(plan.steps.len());
        for ((step, stbl), a) in plan.steps.iter().zip(&self.tables).zip(&self.model.steps) {
            let right = bottom_up_for(step, margins)?;
            let (rec, right_marg) = run_step(a, stbl, margins[step.left.members[0]], &right, &total)?;
            recs.push(rec);
            total = right_marg;
        }

        let first = &plan.steps[0];
        let (dl, dr) = (first.left.max, first.right.max);
        let mut glued = JointPmfOverVars {
            vars: vec![first.left.name.clone(), first.right.name.clone()],
            dims: vec![dl, dr],
            probs: recs[0].clone(),
            support: None,
        };
        for (step, rec) in plan.steps.iter().zip(&recs).skip(1) {
            let shared = &step.total.name;
            let joint = step_joint(rec, step)?;
            let m1 = glued.marginal(shared)?;
            let m2 = joint.marginal(shared)?;
            let avg: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| 0.5 * (a + b)).collect();
            let g = adjust(&glued, shared, &avg)?;
            let j = adjust(&joint, shared, &avg)?;
            glued = construct_joint(&g, &j, shared)?;
        }

        // glued is over the bottoms in plan order
        let m = tbl.hierarchy().n_basis();
        let mut out = vec![0.0; tbl.r()];
        let mut basis = vec![0u32; m];
        for (i, &p) in glued.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (pos, v) in glued.point(i).into_iter().enumerate() {
                basis[plan.ordering[pos]] = v;
            }
            out[tbl.basis_to_coherent_index(&basis)?] += p;
        }
        if plan.steps.len() > 1 {
            clean_pmf(&mut out);
        }
        crate::hierarchy::check_pmf(&out, JOINT_TOL)?;
        Ok(IndexedPmf::new_unchecked(DomainKind::Coherent, out))
    }
}

/// Stepwise forecast for one ordering.
pub fn sdfr_forecast(margins: &[&[f64]], model: &PreparedSdfr, tbl: &DomainTables) -> Result<IndexedPmf> {
    model.forecast(margins, tbl)
}

/// Mean of the stepwise forecasts over several orderings.
pub fn sdfr_averaged(margins: &[&[f64]], models: &[PreparedSdfr], tbl: &DomainTables) -> Result<IndexedPmf> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::Config("no stepwise models to average".into()))?;
    let mut acc = first.forecast(margins, tbl)?;
    if rest.is_empty() {
        return Ok(acc);
    }
    for m in rest {
        for (a, p) in acc.probs.iter_mut().zip(m.forecast(margins, tbl)?.probs) {
            *a += p;
        }
    }
    for a in acc.probs.iter_mut() {
        *a /= models.len() as f64;
    }
    Ok(acc)
}

/// Models for several orderings at one horizon, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfrEnsemble {
    pub horizon: usize,
    pub members: Vec<SdfrModel>,
}

impl SdfrEnsemble {
    pub fn prepare(self) -> Result<Vec<PreparedSdfr>> {
        self.members.into_iter().map(SdfrModel::prepare).collect()
    }
}

pub fn train_sdfr_ensemble(
    windows: &[WindowForecast],
    tbl: &DomainTables,
    orderings: &[Vec<usize>],
    horizon: usize,
    settings: &SolverSettings,
) -> Result<SdfrEnsemble> {
    let members = orderings
        .par_iter()
        .map(|o| train_sdfr(windows, tbl, o, horizon, settings).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(SdfrEnsemble { horizon, members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn plans() {
        let h = Hierarchy::two_level(vec![1, 1, 1]).unwrap();
        let p = plan_steps(&h, &[0, 1, 2]).unwrap();
        assert_eq!(p.steps.len(), 2);
        assert_eq!(p.steps[0].total.name, "y[3]");
        assert_eq!((p.steps[0].left.max, p.steps[0].right.max, p.steps[0].total.max), (1, 2, 3));
        assert_eq!(p.steps[0].right.members, vec![1, 2]);
        assert_eq!(p.steps[1].total, p.steps[0].right);
        assert_eq!(p.steps[1].right.members, vec![2]);

        let h7 = Hierarchy::two_level(vec![1; 7]).unwrap();
        let p7 = plan_steps(&h7, &[6, 5, 4, 3, 2, 1, 0]).unwrap();
        assert_eq!(p7.steps.len(), 6);
        for (i, s) in p7.steps.iter().enumerate() {
            assert_eq!(s.right.max as usize, 7 - i - 1);
            assert_eq!(s.total.max as usize, 7 - i);
        }
        let h2 = Hierarchy::two_level(vec![1, 2]).unwrap();
        assert_eq!(plan_steps(&h2, &[1, 0]).unwrap().ordering, vec![0, 1]);
        assert!(plan_steps(&Hierarchy::two_level(vec![1]).unwrap(), &[0]).is_err());
        assert!(plan_steps(&h, &[0, 0, 1]).is_err());
    }

    #[test]
    fn bottom_up_convolution() {
        assert_eq!(bottom_up_pmf(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap(), vec![0.25, 0.5, 0.25]);
        assert_eq!(bottom_up_pmf(&[&[0.3, 0.7]]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn adjust_rescales_slices() {
        let j = JointPmfOverVars::new(names(&["a", "b"]), vec![1, 1], vec![0.1, 0.4, 0.2, 0.3], None).unwrap();
        let same = adjust(&j, "a", &j.marginal("a").unwrap()).unwrap();
        for (x, y) in same.probs.iter().zip(&j.probs) {
            assert!((x - y).abs() < 1e-15);
        }
        let t = adjust(&j, "a", &[0.8, 0.2]).unwrap();
        let m = t.marginal("a").unwrap();
        assert!((m[0] - 0.8).abs() < 1e-15 && (m[1] - 0.2).abs() < 1e-15);
        // conditionals of b given a unchanged
        assert!((t.probs[1] / 0.8 - 0.4 / 0.5).abs() < 1e-12);

        let z = JointPmfOverVars::new(names(&["a", "b"]), vec![1, 1], vec![0.5, 0.5, 0.0, 0.0], None).unwrap();
        let f = adjust(&z, "a", &[0.6, 0.4]).unwrap();
        assert_eq!(f.probs, vec![0.3, 0.3, 0.2, 0.2]);
        assert!(adjust(&z, "a", &[1.0]).is_err());
    }

    #[test]
    fn glue_deterministic_right_substitutes_values() {
        // right: c = s (deterministic given s)
        let left = JointPmfOverVars::new(names(&["a", "s"]), vec![1, 1], vec![0.1, 0.2, 0.3, 0.4], None).unwrap();
        let mut rp = vec![0.0; 4];
        rp[0] = 0.4; // s=0, c=0
        rp[3] = 0.6; // s=1, c=1
        let right = JointPmfOverVars::new(names(&["s", "c"]), vec![1, 1], rp, None).unwrap();
        let g = construct_joint(&left, &right, "s").unwrap();
        assert_eq!(g.vars, names(&["a", "c"]));
        for (x, y) in g.probs.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((x - y).abs() < 1e-15);
        }
        let bad = JointPmfOverVars::new(names(&["s", "c"]), vec![1, 1], vec![0.25; 4], None).unwrap();
        assert!(matches!(construct_joint(&left, &bad, "s"), Err(Error::Consistency(_))));
    }
}
