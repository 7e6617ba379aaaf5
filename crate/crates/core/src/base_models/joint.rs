use super::MarginalForecast;
use crate::error::{Error, Result};
use crate::hierarchy::{DomainKind, DomainTables, IndexedPmf};

/// Joint pmf on the complete domain assuming independent margins.
pub fn independence_product(margins: &[MarginalForecast], tbl: &DomainTables) -> Result<IndexedPmf> {
    let probs = independence_product_raw(
        &margins.iter().map(|m| m.probs.as_slice()).collect::<Vec<_>>(),
        tbl,
    )?;
    Ok(IndexedPmf::new_unchecked(DomainKind::Complete, probs))
}

/// Same as [`independence_product`] over bare probability slices, one per
/// variable in hierarchy order.
pub fn independence_product_raw(margins: &[&[f64]], tbl: &DomainTables) -> Result<Vec<f64>> {
    let dmax = tbl.hierarchy().domain_max();
    if margins.len() != dmax.len() {
        return Err(Error::Shape(format!(
            "{} margins for {} variables",
            margins.len(),
            dmax.len()
        )));
    }
    for (i, (m, &d)) in margins.iter().zip(dmax).enumerate() {
        if m.len() != d as usize + 1 {
            return Err(Error::Shape(format!(
                "margin of variable {i} has {} entries, domain has {}",
                m.len(),
                d + 1
            )));
        }
    }
    Ok(tbl
        .complete_points()
        .map(|pt| {
            pt.iter()
                .zip(margins)
                .map(|(&v, m)| m[v as usize])
                .product()
        })
        .collect())
}

/// Relative frequencies over the coherent domain with additive smoothing.
///
/// Values above a variable's bound are clamped to the bound first; an
/// observation that is still incoherent is rejected.
pub fn empirical_joint(
    observations: &[Vec<u32>],
    tbl: &DomainTables,
    laplace: f64,
) -> Result<IndexedPmf> {
    if observations.is_empty() {
        return Err(Error::Data("no observations for the empirical distribution".into()));
    }
    if !(laplace >= 0.0) {
        return Err(Error::Validation(format!("smoothing {laplace} must be nonnegative")));
    }
    let dmax = tbl.hierarchy().domain_max();
    let mut counts = vec![laplace; tbl.r()];
    for (row, obs) in observations.iter().enumerate() {
        let clamped: Vec<u32> = obs.iter().zip(dmax).map(|(&v, &d)| v.min(d)).collect();
        let k = tbl
            .point_to_index(&clamped, DomainKind::Coherent)
            .map_err(|_| Error::Data(format!("observation {row} {obs:?} is incoherent")))?;
        counts[k] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    Ok(IndexedPmf::new_unchecked(
        DomainKind::Coherent,
        counts.into_iter().map(|c| c / total).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{enumerate_domains, Hierarchy};

    fn tbl() -> DomainTables {
        enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap()
    }

    fn mf(var: usize, probs: Vec<f64>) -> MarginalForecast {
        MarginalForecast { var, horizon: 1, probs }
    }

    #[test]
    fn product_at_incoherent_point() {
        let t = tbl();
        let pmf = independence_product(
            &[
                mf(0, vec![0.2, 0.8]),
                mf(1, vec![0.9, 0.1]),
                mf(2, vec![0.05, 0.5, 0.45]),
            ],
            &t,
        )
        .unwrap();
        let j = t.point_to_index(&[0, 1, 0], DomainKind::Complete).unwrap();
        assert!((pmf.probs[j] - 0.001).abs() < 1e-15);
        assert!((pmf.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_of_point_masses_and_uniforms() {
        let t = tbl();
        let pm = independence_product(
            &[mf(0, vec![0.0, 1.0]), mf(1, vec![1.0, 0.0]), mf(2, vec![0.0, 1.0, 0.0])],
            &t,
        )
        .unwrap();
        let j = t.point_to_index(&[1, 0, 1], DomainKind::Complete).unwrap();
        assert_eq!(pm.probs[j], 1.0);

        let un = independence_product(
            &[mf(0, vec![0.5; 2]), mf(1, vec![0.5; 2]), mf(2, vec![1.0 / 3.0; 3])],
            &t,
        )
        .unwrap();
        assert!(un.probs.iter().all(|&p| (p - 1.0 / 12.0).abs() < 1e-15));
        assert!(independence_product(&[mf(0, vec![1.0])], &t).is_err());
    }

    #[test]
    fn empirical_counts_and_smoothing() {
        let t = tbl();
        let obs = vec![vec![0, 0, 0], vec![0, 0, 0], vec![0, 0, 0], vec![1, 1, 2]];
        assert_eq!(empirical_joint(&obs, &t, 0.0).unwrap().probs, vec![0.75, 0.0, 0.0, 0.25]);
        assert_eq!(
            empirical_joint(&obs, &t, 1.0).unwrap().probs,
            vec![4.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 2.0 / 8.0]
        );
        assert!(empirical_joint(&[], &t, 0.0).is_err());
        assert!(empirical_joint(&[vec![1, 0, 0]], &t, 0.0).is_err());
    }
}
