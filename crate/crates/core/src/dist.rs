//! Small discrete-distribution helpers shared across modules.

/// Binomial(n, p) pmf over `{0..n}`.
pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let n_us = n as usize;
    let mut out = vec![0.0; n_us + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n_us] = 1.0;
        return out;
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut ln_choose = 0.0;
    for k in 0..=n_us {
        if k > 0 {
            ln_choose += ((n_us - k + 1) as f64).ln() - (k as f64).ln();
        }
        out[k] = (ln_choose + k as f64 * ln_p + (n_us - k) as f64 * ln_q).exp();
    }
    out
}

/// Pmf of the sum of two independent variables.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &pa) in a.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (j, &pb) in b.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    out
}

/// Poisson(lambda) pmf on `{0..max}` with the upper tail `P(Y >= max)` lumped
/// onto `max`.
pub fn poisson_lumped(lambda: f64, max: u32) -> Vec<f64> {
    let d = max as usize;
    let mut out = vec![0.0; d + 1];
    if lambda <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    let mut term = (-lambda).exp();
    let mut below = 0.0;
    for (k, slot) in out.iter_mut().enumerate().take(d) {
        if k > 0 {
            term *= lambda / k as f64;
        }
        *slot = term;
        below += term;
    }
    out[d] = (1.0 - below).max(0.0);
    // Underflow of exp(-lambda) for large lambda leaves all mass in the tail,
    // which is the correct limit.
    out
}

/// Rescales to unit mass after clamping tiny negative round-off to zero.
pub fn normalize(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

pub fn mean(pmf: &[f64]) -> f64 {
    pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_edges() {
        assert_eq!(binomial_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(2, 1.0), vec![0.0, 0.0, 1.0]);
        let b = binomial_pmf(2, 0.5);
        for (x, y) in b.iter().zip([0.25, 0.5, 0.25]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn convolution_of_two_fair_coins() {
        assert_eq!(convolve(&[0.5, 0.5], &[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn poisson_lumping_sums_to_one() {
        for lambda in [0.1, 1.0, 3.2, 20.0, 800.0] {
            let p = poisson_lumped(lambda, 7);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{lambda}");
        }
        assert_eq!(poisson_lumped(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
