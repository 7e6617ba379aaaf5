//! Count hierarchies and their complete / coherent domains.
//!
//! A hierarchy has `m` basis variables and `n - m` determined variables, each
//! determined variable being a nonnegative integer combination of the basis.
//! Every variable `i` takes values in `{0, ..., D_i}`.
//!
//! Points are enumerated in mixed-radix order with the determined variables as
//! the most significant digits (first determined variable first), followed by
//! the basis variables `y_1 .. y_m` with `y_m` varying fastest. Coherent points
//! use the same rule over the basis alone. Consequently the complete index of
//! a point is `determined_index * r + basis_index`, and the complete points
//! sharing a basis configuration are exactly `k, k + r, k + 2r, ...`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default guard on the complete-domain cardinality.
pub const DEFAULT_DOMAIN_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    n_basis: usize,
    agg_rows: Vec<Vec<u32>>,
    domain_max: Vec<u32>,
    names: Vec<String>,
}

/// On-disk hierarchy description. Determined domains are always derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub n_basis: usize,
    pub agg_rows: Vec<Vec<u32>>,
    pub domain_max_basis: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl Hierarchy {
    /// Builds a hierarchy from aggregation rows and basis bounds, deriving the
    /// determined bounds.
    pub fn new(agg_rows: Vec<Vec<u32>>, domain_max_basis: Vec<u32>) -> Result<Self> {
        let m = domain_max_basis.len();
        if m == 0 {
            return Err(Error::InvalidHierarchy("no basis variables".into()));
        }
        let mut domain_max = domain_max_basis.clone();
        for (d, row) in agg_rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidHierarchy(format!(
                    "aggregation row {d} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().all(|&c| c == 0) {
                return Err(Error::InvalidHierarchy(format!(
                    "aggregation row {d} is all zero"
                )));
            }
            let bound: u64 = row
                .iter()
                .zip(&domain_max_basis)
                .map(|(&c, &dm)| c as u64 * dm as u64)
                .sum();
            let bound = u32::try_from(bound).map_err(|_| {
                Error::InvalidHierarchy(format!("determined variable {d} bound overflows"))
            })?;
            domain_max.push(bound);
        }
        if domain_max_basis.iter().any(|&d| d == 0) {
            return Err(Error::InvalidHierarchy(
                "basis domain bounds must be positive".into(),
            ));
        }
        let names = (1..=domain_max.len()).map(|i| format!("y{i}")).collect();
        Ok(Self {
            n_basis: m,
            agg_rows,
            domain_max,
            names,
        })
    }

    /// Builds a hierarchy from a full bound vector, checking that the
    /// determined bounds are the ones implied by the aggregation rows.
    pub fn from_parts(
        n_total: usize,
        n_basis: usize,
        agg_rows: Vec<Vec<u32>>,
        domain_max: Vec<u32>,
    ) -> Result<Self> {
        if n_basis >= n_total && !(n_basis == n_total && agg_rows.is_empty()) {
            return Err(Error::InvalidHierarchy(format!(
                "n_basis ({n_basis}) must be smaller than n_total ({n_total})"
            )));
        }
        if domain_max.len() != n_total || agg_rows.len() != n_total - n_basis {
            return Err(Error::InvalidHierarchy(
                "dimensions of agg_rows / domain_max do not match n_total".into(),
            ));
        }
        let h = Self::new(agg_rows, domain_max[..n_basis].to_vec())?;
        if h.domain_max != domain_max {
            return Err(Error::InvalidHierarchy(format!(
                "determined domain bounds {:?} differ from those implied by agg_rows {:?}",
                &domain_max[n_basis..],
                &h.domain_max[n_basis..]
            )));
        }
        Ok(h)
    }

    /// `m` bottom series with a single total on top.
    pub fn two_level(domain_max_basis: Vec<u32>) -> Result<Self> {
        let m = domain_max_basis.len();
        Self::new(vec![vec![1; m]], domain_max_basis)
    }

    pub fn from_config(cfg: &HierarchyConfig) -> Result<Self> {
        if cfg.n_basis != cfg.domain_max_basis.len() {
            return Err(Error::InvalidHierarchy(format!(
                "n_basis is {} but domain_max_basis has {} entries",
                cfg.n_basis,
                cfg.domain_max_basis.len()
            )));
        }
        let h = Self::new(cfg.agg_rows.clone(), cfg.domain_max_basis.clone())?;
        match &cfg.names {
            Some(names) => h.with_names(names.clone()),
            None => Ok(h),
        }
    }

    pub fn to_config(&self) -> HierarchyConfig {
        HierarchyConfig {
            n_basis: self.n_basis,
            agg_rows: self.agg_rows.clone(),
            domain_max_basis: self.domain_max[..self.n_basis].to_vec(),
            names: Some(self.names.clone()),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_total() {
            return Err(Error::InvalidHierarchy(format!(
                "{} names given for {} variables",
                names.len(),
                self.n_total()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n_total(&self) -> usize {
        self.domain_max.len()
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn agg_rows(&self) -> &[Vec<u32>] {
        &self.agg_rows
    }

    pub fn domain_max(&self) -> &[u32] {
        &self.domain_max
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Whether this is a single-total hierarchy over all basis series.
    pub fn is_two_level(&self) -> bool {
        self.agg_rows.len() == 1 && self.agg_rows[0].iter().all(|&c| c == 1)
    }

    /// Recomputes determined coordinates from a basis configuration.
    pub fn complete_from_basis(&self, basis: &[u32]) -> Vec<u32> {
        let mut point = basis.to_vec();
        for row in &self.agg_rows {
            point.push(row.iter().zip(basis).map(|(&c, &b)| c * b).sum());
        }
        point
    }

    pub fn is_coherent(&self, point: &[u32]) -> bool {
        point.len() == self.n_total()
            && self
                .agg_rows
                .iter()
                .zip(&point[self.n_basis..])
                .all(|(row, &v)| row.iter().zip(point).map(|(&c, &b)| c * b).sum::<u32>() == v)
    }

    /// Stable content hash of the structure, used to guard persisted models.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("basis={};", self.n_basis));
        for row in &self.agg_rows {
            hasher.update(format!("row={row:?};"));
        }
        hasher.update(format!("dmax={:?}", self.domain_max));
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Complete,
    Coherent,
}

impl DomainKind {
    fn label(self) -> &'static str {
        match self {
            DomainKind::Complete => "complete",
            DomainKind::Coherent => "coherent",
        }
    }
}

/// Enumerated complete and coherent domains of a hierarchy.
#[derive(Debug, Clone)]
pub struct DomainTables {
    hierarchy: Hierarchy,
    q: usize,
    r: usize,
    complete: Vec<u32>,
    coherent: Vec<u32>,
    coherent_index_of: Vec<Option<u32>>,
    complete_index_of_coherent: Vec<usize>,
}

pub fn enumerate_domains(h: &Hierarchy) -> Result<DomainTables> {
    enumerate_domains_with_cap(h, DEFAULT_DOMAIN_CAP)
}

pub fn enumerate_domains_with_cap(h: &Hierarchy, cap: usize) -> Result<DomainTables> {
    let q: u128 = h.domain_max.iter().map(|&d| d as u128 + 1).product();
    if q > cap as u128 {
        return Err(Error::DomainTooLarge { q, cap });
    }
    let q = q as usize;
    let n = h.n_total();
    let m = h.n_basis;
    let r: usize = h.domain_max[..m].iter().map(|&d| d as usize + 1).product();

    let mut coherent = Vec::with_capacity(r * n);
    let mut basis = vec![0u32; m];
    for _ in 0..r {
        coherent.extend(h.complete_from_basis(&basis));
        increment(&mut basis, &h.domain_max[..m]);
    }

    // Digit order: determined variables (most significant first), then basis.
    let mut complete = Vec::with_capacity(q * n);
    let mut coherent_index_of = Vec::with_capacity(q);
    let mut complete_index_of_coherent = vec![0usize; r];
    let det_bounds = &h.domain_max[m..];
    let mut det = vec![0u32; n - m];
    let n_det: usize = det_bounds.iter().map(|&d| d as usize + 1).product();
    for _ in 0..n_det {
        for k in 0..r {
            let b = &coherent[k * n..k * n + m];
            let j = complete.len() / n;
            let is_coh = coherent[k * n + m..(k + 1) * n] == det[..];
            complete.extend_from_slice(b);
            complete.extend_from_slice(&det);
            if is_coh {
                coherent_index_of.push(Some(k as u32));
                complete_index_of_coherent[k] = j;
            } else {
                coherent_index_of.push(None);
            }
        }
        increment(&mut det, det_bounds);
    }

    Ok(DomainTables {
        hierarchy: h.clone(),
        q,
        r,
        complete,
        coherent,
        coherent_index_of,
        complete_index_of_coherent,
    })
}

/// Mixed-radix increment with the last digit fastest.
fn increment(digits: &mut [u32], bounds: &[u32]) {
    for i in (0..digits.len()).rev() {
        if digits[i] < bounds[i] {
            digits[i] += 1;
            return;
        }
        digits[i] = 0;
    }
}

impl DomainTables {
    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.hierarchy.n_total()
    }

    pub fn len(&self, kind: DomainKind) -> usize {
        match kind {
            DomainKind::Complete => self.q,
            DomainKind::Coherent => self.r,
        }
    }

    pub fn complete_point(&self, j: usize) -> &[u32] {
        let n = self.n();
        &self.complete[j * n..(j + 1) * n]
    }

    pub fn coherent_point(&self, k: usize) -> &[u32] {
        let n = self.n();
        &self.coherent[k * n..(k + 1) * n]
    }

    pub fn point(&self, kind: DomainKind, idx: usize) -> &[u32] {
        match kind {
            DomainKind::Complete => self.complete_point(idx),
            DomainKind::Coherent => self.coherent_point(idx),
        }
    }

    pub fn coherent_index_of(&self, j: usize) -> Option<usize> {
        self.coherent_index_of[j].map(|k| k as usize)
    }

    pub fn complete_index_of_coherent(&self, k: usize) -> usize {
        self.complete_index_of_coherent[k]
    }

    pub fn complete_points(&self) -> impl Iterator<Item = &[u32]> {
        self.complete.chunks_exact(self.n())
    }

    pub fn coherent_points(&self) -> impl Iterator<Item = &[u32]> {
        self.coherent.chunks_exact(self.n())
    }

    /// Complete indices of incoherent points, ascending.
    pub fn incoherent_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(|&j| self.coherent_index_of[j].is_none())
    }

    /// Inverse of the index maps.
    pub fn point_to_index(&self, point: &[u32], kind: DomainKind) -> Result<usize> {
        let h = &self.hierarchy;
        let outside = || Error::PointOutsideDomain {
            point: point.to_vec(),
            kind: kind.label(),
        };
        if point.len() != h.n_total() || point.iter().zip(&h.domain_max).any(|(&v, &d)| v > d) {
            return Err(outside());
        }
        let m = h.n_basis;
        let basis_idx = radix_index(&point[..m], &h.domain_max[..m]);
        match kind {
            DomainKind::Coherent => {
                if !h.is_coherent(point) {
                    return Err(outside());
                }
                Ok(basis_idx)
            }
            DomainKind::Complete => {
                let det_idx = radix_index(&point[m..], &h.domain_max[m..]);
                Ok(det_idx * self.r + basis_idx)
            }
        }
    }

    /// Coherent index of a basis configuration.
    pub fn basis_to_coherent_index(&self, basis: &[u32]) -> Result<usize> {
        let h = &self.hierarchy;
        let m = h.n_basis;
        if basis.len() != m || basis.iter().zip(&h.domain_max).any(|(&v, &d)| v > d) {
            return Err(Error::PointOutsideDomain {
                point: basis.to_vec(),
                kind: "basis",
            });
        }
        Ok(radix_index(basis, &h.domain_max[..m]))
    }
}

fn radix_index(digits: &[u32], bounds: &[u32]) -> usize {
    digits
        .iter()
        .zip(bounds)
        .fold(0usize, |acc, (&v, &d)| acc * (d as usize + 1) + v as usize)
}

/// A probability vector over one of the enumerated domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedPmf {
    pub kind: DomainKind,
    pub probs: Vec<f64>,
}

pub(crate) const PMF_TOL: f64 = 1e-9;

impl IndexedPmf {
    pub fn new(kind: DomainKind, probs: Vec<f64>) -> Result<Self> {
        check_pmf(&probs, PMF_TOL)?;
        Ok(Self { kind, probs })
    }

    /// Skips validation; the caller guarantees a valid pmf.
    pub(crate) fn new_unchecked(kind: DomainKind, probs: Vec<f64>) -> Self {
        Self { kind, probs }
    }

    pub fn point_mass(kind: DomainKind, len: usize, idx: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[idx] = 1.0;
        Self { kind, probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Nonnegative (within `tol`), at most one, and summing to one within `tol`.
pub fn check_pmf(probs: &[f64], tol: f64) -> Result<()> {
    if let Some(p) = probs
        .iter()
        .find(|p| !p.is_finite() || **p < -tol || **p > 1.0 + tol)
    {
        return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::Validation(format!("probabilities sum to {s}")));
    }
    Ok(())
}

/// Marginal pmf of variable `var` over `{0..D_var}`.
pub fn marginalize(pmf: &IndexedPmf, tbl: &DomainTables, var: usize) -> Result<Vec<f64>> {
    let n = tbl.n();
    if var >= n {
        return Err(Error::UnknownVariable(var));
    }
    if pmf.len() != tbl.len(pmf.kind) {
        return Err(Error::Shape(format!(
            "pmf has {} entries, {:?} domain has {}",
            pmf.len(),
            pmf.kind,
            tbl.len(pmf.kind)
        )));
    }
    let mut out = vec![0.0; tbl.hierarchy.domain_max[var] as usize + 1];
    for (idx, &p) in pmf.probs.iter().enumerate() {
        out[tbl.point(pmf.kind, idx)[var] as usize] += p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_var() -> DomainTables {
        enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap()
    }

    #[test]
    fn three_variable_example_domains() {
        let tbl = three_var();
        assert_eq!((tbl.q(), tbl.r()), (12, 4));
        let coh: Vec<Vec<u32>> = tbl.coherent_points().map(|p| p.to_vec()).collect();
        assert_eq!(
            coh,
            vec![vec![0, 0, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 2]]
        );
        // The displayed complete-domain ordering: (000),(010),(100),(110),(001),...
        let first: Vec<Vec<u32>> = (0..5).map(|j| tbl.complete_point(j).to_vec()).collect();
        assert_eq!(
            first,
            vec![
                vec![0, 0, 0],
                vec![0, 1, 0],
                vec![1, 0, 0],
                vec![1, 1, 0],
                vec![0, 0, 1]
            ]
        );
    }

    #[test]
    fn single_unconstrained_variable() {
        let h = Hierarchy::new(vec![], vec![3]).unwrap();
        let tbl = enumerate_domains(&h).unwrap();
        assert_eq!((tbl.q(), tbl.r()), (4, 4));
        assert!((0..4).all(|j| tbl.coherent_index_of(j) == Some(j)));
    }

    #[test]
    fn three_binary_bottoms() {
        let tbl = enumerate_domains(&Hierarchy::two_level(vec![1, 1, 1]).unwrap()).unwrap();
        assert_eq!((tbl.q(), tbl.r()), (32, 8));
        // brute force over every tuple
        let mut coherent = 0;
        for a in 0..2u32 {
            for b in 0..2u32 {
                for c in 0..2u32 {
                    for t in 0..4u32 {
                        if a + b + c == t {
                            coherent += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(coherent, 8);
        assert_eq!(tbl.incoherent_indices().count(), 24);
    }

    #[test]
    fn cap_and_validation_errors() {
        let h = Hierarchy::two_level(vec![1; 12]).unwrap();
        match enumerate_domains_with_cap(&h, 1000) {
            Err(Error::DomainTooLarge { q, .. }) => assert_eq!(q, 4096 * 13),
            other => panic!("expected size error, got {other:?}"),
        }
        assert!(Hierarchy::from_parts(3, 2, vec![vec![1, 1]], vec![1, 1, 3]).is_err());
        assert!(Hierarchy::from_parts(3, 2, vec![vec![1, 1]], vec![1, 1, 2]).is_ok());
        assert!(Hierarchy::new(vec![vec![0, 0]], vec![1, 1]).is_err());
    }

    #[test]
    fn index_lookup() {
        let tbl = three_var();
        assert_eq!(tbl.point_to_index(&[0, 0, 0], DomainKind::Complete).unwrap(), 0);
        assert_eq!(tbl.point_to_index(&[1, 1, 2], DomainKind::Coherent).unwrap(), 3);
        assert!(tbl.point_to_index(&[0, 1, 0], DomainKind::Coherent).is_err());
        assert!(tbl.point_to_index(&[2, 0, 2], DomainKind::Complete).is_err());
    }

    #[test]
    fn marginals() {
        let tbl = three_var();
        let uniform = IndexedPmf::new(DomainKind::Coherent, vec![0.25; 4]).unwrap();
        assert_eq!(marginalize(&uniform, &tbl, 2).unwrap(), vec![0.25, 0.5, 0.25]);
        let mass = IndexedPmf::point_mass(DomainKind::Coherent, 4, 3);
        assert_eq!(marginalize(&mass, &tbl, 0).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            marginalize(&mass, &tbl, 3),
            Err(Error::UnknownVariable(3))
        ));
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"n_basis": 2, "agg_rows": [[1, 1]], "domain_max_basis": [1, 1]}"#;
        let cfg: HierarchyConfig = serde_json::from_str(json).unwrap();
        let h = Hierarchy::from_config(&cfg).unwrap();
        assert_eq!(h.domain_max(), &[1, 1, 2]);
        assert_eq!(Hierarchy::from_config(&h.to_config()).unwrap(), h);
    }
}
