//! Binomial AR(1) model for counts on `{0..N}`.
//!
//! `X_t = alpha ∘ X_{t-1} + beta ∘ (N - X_{t-1})` with binomial thinning, where
//! `beta = p (1 - rho)` and `alpha = beta + rho`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::MarginalForecast;
use crate::dist::{binomial_pmf, convolve, normalize};
use crate::error::{Error, Result};

const EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAr1Params {
    pub n: u32,
    pub p: f64,
    pub rho: f64,
}

impl BinAr1Params {
    pub fn new(n: u32, p: f64, rho: f64) -> Result<Self> {
        let params = Self { n, p, rho };
        let (a, b) = (params.alpha(), params.beta());
        if n == 0 || !(0.0 < a && a < 1.0 && 0.0 < b && b < 1.0) {
            return Err(Error::Validation(format!(
                "binomial AR(1) with N={n}, p={p}, rho={rho} gives alpha={a}, beta={b} outside (0, 1)"
            )));
        }
        Ok(params)
    }

    pub fn from_thinning(n: u32, alpha: f64, beta: f64) -> Result<Self> {
        let rho = alpha - beta;
        Self::new(n, beta / (1.0 - rho), rho)
    }

    pub fn beta(&self) -> f64 {
        self.p * (1.0 - self.rho)
    }

    pub fn alpha(&self) -> f64 {
        self.beta() + self.rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAr1Fit {
    pub params: BinAr1Params,
    /// Set when the series had no variation and `rho` fell back to zero.
    pub constant_series: bool,
}

/// Method-of-moments fit: mean for `p`, lag-1 autocorrelation for `rho`.
pub fn fit_binar1(series: &[u32], n: u32) -> Result<BinAr1Fit> {
    if n == 0 {
        return Err(Error::Validation("N must be positive".into()));
    }
    if series.len() < 10 {
        return Err(Error::Validation(format!(
            "binomial AR(1) needs at least 10 observations, got {}",
            series.len()
        )));
    }
    if let Some(v) = series.iter().find(|&&v| v > n) {
        return Err(Error::Validation(format!("value {v} exceeds N={n}")));
    }
    let len = series.len() as f64;
    let mean = series.iter().map(|&v| v as f64).sum::<f64>() / len;
    let p = (mean / n as f64).clamp(EPS, 1.0 - EPS);

    let denom: f64 = series.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    let (raw_rho, constant_series) = if denom <= 0.0 {
        log::warn!("constant series in binomial AR(1) fit; using rho = 0");
        (0.0, true)
    } else {
        let num: f64 = series
            .windows(2)
            .map(|w| (w[0] as f64 - mean) * (w[1] as f64 - mean))
            .sum();
        (num / denom, false)
    };
    // alpha, beta in (0, 1) <=> max(-p/(1-p), (p-1)/p) < rho < 1
    let lo = (-p / (1.0 - p)).max((p - 1.0) / p) + EPS;
    let hi = 1.0 - EPS;
    let rho = raw_rho.clamp(lo, hi);
    Ok(BinAr1Fit {
        params: BinAr1Params::new(n, p, rho)?,
        constant_series,
    })
}

/// One-step transition matrix; row `x` is `Bin(x, alpha) * Bin(N - x, beta)`.
pub fn transition_matrix(params: &BinAr1Params) -> Vec<Vec<f64>> {
    let (a, b) = (params.alpha(), params.beta());
    (0..=params.n)
        .map(|x| {
            let mut row = convolve(&binomial_pmf(x, a), &binomial_pmf(params.n - x, b));
            normalize(&mut row);
            row
        })
        .collect()
}

/// `h`-step predictive pmf given the last observed value.
pub fn forecast_binar1(
    params: &BinAr1Params,
    last_value: u32,
    h: usize,
    var: usize,
) -> Result<MarginalForecast> {
    if last_value > params.n {
        return Err(Error::Validation(format!(
            "last value {last_value} exceeds N={}",
            params.n
        )));
    }
    if h == 0 {
        return Err(Error::Validation("horizon must be positive".into()));
    }
    let tm = transition_matrix(params);
    let size = params.n as usize + 1;
    let mut state = vec![0.0; size];
    state[last_value as usize] = 1.0;
    for _ in 0..h {
        let mut next = vec![0.0; size];
        for (x, &px) in state.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (y, &t) in tm[x].iter().enumerate() {
                next[y] += px * t;
            }
        }
        normalize(&mut next);
        state = next;
    }
    Ok(MarginalForecast {
        var,
        horizon: h,
        probs: state,
    })
}

/// Simulates a path by binomial thinning, started from the stationary law.
pub fn simulate_binar1<R: Rng + ?Sized>(params: &BinAr1Params, len: usize, rng: &mut R) -> Vec<u32> {
    let n = params.n as u64;
    let (a, b) = (params.alpha(), params.beta());
    let mut x = Binomial::new(n, params.p).expect("valid p").sample(rng);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let survive = Binomial::new(x, a).expect("valid alpha").sample(rng);
        let born = Binomial::new(n - x, b).expect("valid beta").sample(rng);
        x = survive + born;
        out.push(x as u32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alternating_series_clamps_rho() {
        let s: Vec<u32> = (0..100).map(|t| t % 2).collect();
        let fit = fit_binar1(&s, 1).unwrap();
        assert!((fit.params.p - 0.5).abs() < 1e-12);
        assert!((fit.params.rho + 0.99).abs() < 1e-12, "{:?}", fit);
        assert!(fit.params.alpha() > 0.0 && fit.params.alpha() < 1.0);
        assert!(!fit.constant_series);
    }

    #[test]
    fn constant_series_flags_and_falls_back() {
        let fit = fit_binar1(&[1; 20], 2).unwrap();
        assert!(fit.constant_series);
        assert_eq!(fit.params.rho, 0.0);
        assert!(fit_binar1(&[0; 5], 1).is_err());
        assert!(fit_binar1(&[3; 12], 2).is_err());
    }

    #[test]
    fn iid_bernoulli_rho_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<u32> = (0..100_000).map(|_| rng.gen_bool(0.5) as u32).collect();
        let fit = fit_binar1(&s, 1).unwrap();
        // sd of the lag-1 autocorrelation under independence is 1/sqrt(n)
        assert!(fit.params.rho.abs() < 4.0 / (100_000f64).sqrt(), "{:?}", fit);
        assert!((fit.params.p - 0.5).abs() < 0.01);
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = BinAr1Params::new(1, 0.5, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut p_err, mut rho_err) = (Vec::new(), Vec::new());
        for _ in 0..100 {
            let s = simulate_binar1(&truth, 500, &mut rng);
            let fit = fit_binar1(&s, 1).unwrap();
            p_err.push((fit.params.p - 0.5).abs());
            rho_err.push((fit.params.rho - 0.4).abs());
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(avg(&p_err) < 0.05, "{}", avg(&p_err));
        assert!(avg(&rho_err) < 0.1, "{}", avg(&rho_err));
    }

    #[test]
    fn forecast_examples() {
        let ind = BinAr1Params::new(3, 0.3, 0.0).unwrap();
        for h in [1, 2, 5] {
            let f = forecast_binar1(&ind, 2, h, 0).unwrap();
            for (x, y) in f.probs.iter().zip(binomial_pmf(3, 0.3)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let pr = BinAr1Params::from_thinning(1, 0.9, 0.1).unwrap();
        let one = forecast_binar1(&pr, 1, 1, 0).unwrap();
        assert!((one.probs[1] - 0.9).abs() < 1e-12);
        let two = forecast_binar1(&pr, 1, 2, 0).unwrap();
        // explicit square of [[0.9, 0.1], [0.1, 0.9]]
        assert!((two.probs[1] - 0.82).abs() < 1e-12);
    }

    #[test]
    fn long_horizon_is_stationary_binomial() {
        for (n, p, rho) in [(1, 0.3, 0.5), (3, 0.4, 0.2), (4, 0.6, -0.2)] {
            let params = BinAr1Params::new(n, p, rho).unwrap();
            assert!(params.alpha() > 0.05 && params.alpha() < 0.95);
            let f = forecast_binar1(&params, 0, 200, 0).unwrap();
            let tv = crate::dist::total_variation(&f.probs, &binomial_pmf(n, p));
            assert!(tv < 1e-6, "{tv}");
        }
    }
}
