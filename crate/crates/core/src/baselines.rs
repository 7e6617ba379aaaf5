//! Discrete bottom-up and top-down reconcilers as fixed reassignment matrices.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierarchy::DomainTables;
use crate::recon::ReconMatrix;

/// Hash stored in baseline matrices, tying them to the hierarchy.
pub fn baseline_hash(tbl: &DomainTables, label: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}:{label}", tbl.hierarchy().fingerprint()));
    hex::encode(h.finalize())
}

/// Each complete point goes to the coherent point with the same basis values.
pub fn dbu_matrix(tbl: &DomainTables, horizon: usize) -> Result<ReconMatrix> {
    let m = tbl.hierarchy().n_basis();
    let triplets = (0..tbl.q())
        .map(|j| {
            let k = tbl.basis_to_coherent_index(&tbl.complete_point(j)[..m])?;
            Ok((k, j, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    ReconMatrix::from_triplets(tbl.r(), tbl.q(), triplets, horizon, baseline_hash(tbl, "dbu"))
}

/// Per value of the top series, shares of the coherent points with that top value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalProportions {
    /// `by_top[v]` lists `(coherent index, share)`.
    pub by_top: Vec<Vec<(usize, f64)>>,
    /// Top values that never occurred and fell back to uniform shares.
    pub unseen: Vec<u32>,
}

fn top_var(tbl: &DomainTables) -> Result<usize> {
    let h = tbl.hierarchy();
    if !h.is_two_level() {
        return Err(Error::Config(
            "top-down reconciliation needs a two-level hierarchy with a single total".into(),
        ));
    }
    Ok(h.n_basis())
}

pub fn fit_dtd(observations: &[Vec<u32>], tbl: &DomainTables) -> Result<HistoricalProportions> {
    let top = top_var(tbl)?;
    if observations.is_empty() {
        return Err(Error::Data("no observations for historical proportions".into()));
    }
    let d_top = tbl.hierarchy().domain_max()[top] as usize;
    let mut counts = vec![0.0; tbl.r()];
    for (row, obs) in observations.iter().enumerate() {
        let k = tbl
            .point_to_index(obs, crate::hierarchy::DomainKind::Coherent)
            .map_err(|_| Error::Data(format!("observation {row} {obs:?} is not a coherent point")))?;
        counts[k] += 1.0;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); d_top + 1];
    for k in 0..tbl.r() {
        members[tbl.coherent_point(k)[top] as usize].push(k);
    }
    let mut unseen = Vec::new();
    let by_top = members
        .iter()
        .enumerate()
        .map(|(v, ks)| {
            let total: f64 = ks.iter().map(|&k| counts[k]).sum();
            if total == 0.0 {
                unseen.push(v as u32);
                let share = 1.0 / ks.len() as f64;
                ks.iter().map(|&k| (k, share)).collect()
            } else {
                ks.iter().map(|&k| (k, counts[k] / total)).collect()
            }
        })
        .collect();
    Ok(HistoricalProportions { by_top, unseen })
}

/// Column `j` with top value `v` is spread over coherent points by `props[v]`.
pub fn dtd_matrix(props: &HistoricalProportions, tbl: &DomainTables, horizon: usize) -> Result<ReconMatrix> {
    let top = top_var(tbl)?;
    let d_top = tbl.hierarchy().domain_max()[top] as usize;
    if props.by_top.len() != d_top + 1 {
        return Err(Error::Shape(format!(
            "proportions cover {} top values, hierarchy has {}",
            props.by_top.len(),
            d_top + 1
        )));
    }
    let mut triplets = Vec::new();
    for j in 0..tbl.q() {
        let v = tbl.complete_point(j)[top] as usize;
        triplets.extend(props.by_top[v].iter().map(|&(k, s)| (k, j, s)));
    }
    ReconMatrix::from_triplets(tbl.r(), tbl.q(), triplets, horizon, baseline_hash(tbl, "dtd"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_models::{independence_product, MarginalForecast};
    use crate::hierarchy::{enumerate_domains, marginalize, DomainKind, Hierarchy};

    fn tbl3() -> DomainTables {
        enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap()
    }

    #[test]
    fn dbu_is_three_identities() {
        let t = tbl3();
        let d = dbu_matrix(&t, 1).unwrap().to_dense();
        for (k, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j % 4 == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn dtd_matches_displayed_matrix() {
        let t = tbl3();
        let mut obs = vec![vec![0, 1, 1]; 40];
        obs.extend(vec![vec![1, 0, 1]; 60]);
        let props = fit_dtd(&obs, &t).unwrap();
        assert_eq!(props.by_top[1], vec![(1, 0.4), (2, 0.6)]);
        // v = 0 and v = 2 are unseen but have a single coherent point each
        assert_eq!(props.by_top[0], vec![(0, 1.0)]);
        assert_eq!(props.unseen, vec![0, 2]);
        let d = dtd_matrix(&props, &t, 1).unwrap().to_dense();
        let expect = [
            [1., 1., 1., 1., 0., 0., 0., 0., 0., 0., 0., 0.],
            [0., 0., 0., 0., 0.4, 0.4, 0.4, 0.4, 0., 0., 0., 0.],
            [0., 0., 0., 0., 0.6, 0.6, 0.6, 0.6, 0., 0., 0., 0.],
            [0., 0., 0., 0., 0., 0., 0., 0., 1., 1., 1., 1.],
        ];
        for k in 0..4 {
            assert_eq!(d[k], expect[k].to_vec());
        }
    }

    #[test]
    fn dtd_apportions_top_probability() {
        let t = tbl3();
        let mut obs = vec![vec![0, 1, 1]; 40];
        obs.extend(vec![vec![1, 0, 1]; 60]);
        let a = dtd_matrix(&fit_dtd(&obs, &t).unwrap(), &t, 1).unwrap();
        let mf = |var, probs| MarginalForecast { var, horizon: 1, probs };
        let base = independence_product(
            &[mf(0, vec![0.3, 0.7]), mf(1, vec![0.5, 0.5]), mf(2, vec![0.6, 0.1, 0.3])],
            &t,
        )
        .unwrap();
        let rec = a.apply(&base).unwrap();
        assert!((rec.probs[1] - 0.04).abs() < 1e-15);
        assert!((rec.probs[2] - 0.06).abs() < 1e-15);
        let top = marginalize(&rec, &t, 2).unwrap();
        for (x, y) in top.iter().zip([0.6, 0.1, 0.3]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn unseen_top_value_splits_uniformly() {
        let t = tbl3();
        let props = fit_dtd(&[vec![0, 0, 0]], &t).unwrap();
        assert_eq!(props.by_top[1], vec![(1, 0.5), (2, 0.5)]);
        assert!(fit_dtd(&[], &t).is_err());
        let multi = enumerate_domains(&Hierarchy::new(vec![vec![1, 1], vec![1, 0]], vec![1, 1]).unwrap()).unwrap();
        assert!(matches!(fit_dtd(&[vec![0, 0, 0, 0]], &multi), Err(Error::Config(_))));
    }

    #[test]
    fn dbu_preserves_bottom_margins_and_means() {
        let t = enumerate_domains(&Hierarchy::two_level(vec![2, 1, 3]).unwrap()).unwrap();
        let margins = vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.4],
            vec![0.1, 0.2, 0.3, 0.4],
            (1..=7).map(|v| v as f64 / 28.0).collect(),
        ];
        let mfs: Vec<MarginalForecast> = margins
            .iter()
            .enumerate()
            .map(|(i, p)| MarginalForecast { var: i, horizon: 1, probs: p.clone() })
            .collect();
        let base = independence_product(&mfs, &t).unwrap();
        let rec = dbu_matrix(&t, 1).unwrap().apply(&base).unwrap();
        assert_eq!(rec.kind, DomainKind::Coherent);
        let mut bottom_mean = 0.0;
        for i in 0..3 {
            let m = marginalize(&rec, &t, i).unwrap();
            for (x, y) in m.iter().zip(&margins[i]) {
                assert!((x - y).abs() < 1e-12);
            }
            bottom_mean += crate::dist::mean(&margins[i]);
        }
        let top = marginalize(&rec, &t, 3).unwrap();
        assert!((crate::dist::mean(&top) - bottom_mean).abs() < 1e-12);
    }
}
