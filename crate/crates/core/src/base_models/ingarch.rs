//! Poisson INGARCH(p, q):
//! `lambda_t = beta0 + sum_k beta_k y_{t-k} + sum_l alpha_l lambda_{t-l}`.
//!
//! Pre-sample observations and intensities are set to the sample mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::MarginalForecast;
use crate::dist::{normalize, poisson_lumped};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

pub const BETA0_LOWER_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngarchParams {
    pub beta0: f64,
    /// Coefficients on lagged observations (order p).
    pub beta: Vec<f64>,
    /// Coefficients on lagged intensities (order q).
    pub alpha: Vec<f64>,
}

impl IngarchParams {
    pub fn new(beta0: f64, beta: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let params = Self { beta0, beta, alpha };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Validation(format!("beta0 = {} must be positive", self.beta0)));
        }
        if self.beta.iter().chain(&self.alpha).any(|&c| !(c >= 0.0)) {
            return Err(Error::Validation("INGARCH coefficients must be nonnegative".into()));
        }
        if self.persistence() >= 1.0 {
            return Err(Error::Validation(format!(
                "INGARCH persistence {} is not below 1",
                self.persistence()
            )));
        }
        Ok(())
    }

    pub fn persistence(&self) -> f64 {
        self.beta.iter().chain(&self.alpha).sum()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    /// Stationary mean `beta0 / (1 - persistence)`.
    pub fn stationary_mean(&self) -> f64 {
        self.beta0 / (1.0 - self.persistence())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngarchFit {
    pub params: IngarchParams,
    pub log_likelihood: f64,
    pub converged: bool,
    /// `beta0` ended at its lower bound (degenerate likelihood).
    pub at_lower_bound: bool,
}

/// Intensities `lambda_0 .. lambda_T`; the last entry is the one-step-ahead
/// intensity after the final observation.
pub fn conditional_means(params: &IngarchParams, history: &[u32]) -> Vec<f64> {
    let init = if history.is_empty() {
        params.stationary_mean()
    } else {
        history.iter().map(|&v| v as f64).sum::<f64>() / history.len() as f64
    };
    intensities(params, history, init)
}

fn intensities(params: &IngarchParams, y: &[u32], init: f64) -> Vec<f64> {
    let mut lambda = Vec::with_capacity(y.len() + 1);
    for t in 0..=y.len() {
        let mut l = params.beta0;
        for (k, b) in params.beta.iter().enumerate() {
            let v = if t > k { y[t - k - 1] as f64 } else { init };
            l += b * v;
        }
        for (k, a) in params.alpha.iter().enumerate() {
            let v = if t > k { lambda[t - k - 1] } else { init };
            l += a * v;
        }
        lambda.push(l);
    }
    lambda
}

fn log_likelihood(params: &IngarchParams, y: &[u32], init: f64) -> f64 {
    let lambda = intensities(params, y, init);
    y.iter()
        .zip(&lambda)
        .map(|(&v, &l)| {
            if v == 0 {
                -l
            } else {
                v as f64 * l.ln() - l
            }
        })
        .sum()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().max(1e-300).ln()
    }
}

/// Unconstrained vector -> parameters with `beta0 > 0`, coefficients `>= 0`
/// and persistence `< 1`.
fn decode(theta: &[f64], p: usize) -> IngarchParams {
    let beta0 = BETA0_LOWER_BOUND + softplus(theta[0]);
    let w: Vec<f64> = theta[1..].iter().map(|&t| softplus(t)).collect();
    let scale = 1.0 + w.iter().sum::<f64>();
    let coefs: Vec<f64> = w.iter().map(|x| x / scale).collect();
    IngarchParams {
        beta0,
        beta: coefs[..p].to_vec(),
        alpha: coefs[p..].to_vec(),
    }
}

fn encode(params: &IngarchParams) -> Vec<f64> {
    let s = params.persistence();
    let scale = 1.0 / (1.0 - s);
    let mut theta = vec![softplus_inv((params.beta0 - BETA0_LOWER_BOUND).max(1e-12))];
    theta.extend(
        params
            .beta
            .iter()
            .chain(&params.alpha)
            .map(|&c| softplus_inv((c * scale).max(1e-12))),
    );
    theta
}

/// Conditional maximum likelihood via Nelder–Mead on transformed parameters.
pub fn fit_ingarch(series: &[u32], p: usize, q: usize) -> Result<IngarchFit> {
    let min_len = 10 * (p + q + 1);
    if series.len() <= min_len {
        return Err(Error::Validation(format!(
            "INGARCH({p},{q}) needs more than {min_len} observations, got {}",
            series.len()
        )));
    }
    let mean = series.iter().map(|&v| v as f64).sum::<f64>() / series.len() as f64;
    if mean == 0.0 {
        let params = IngarchParams {
            beta0: BETA0_LOWER_BOUND,
            beta: vec![0.0; p],
            alpha: vec![0.0; q],
        };
        let ll = log_likelihood(&params, series, 0.0);
        return Ok(IngarchFit {
            params,
            log_likelihood: ll,
            converged: true,
            at_lower_bound: true,
        });
    }

    let start_persistence = if p + q > 0 { 0.3 } else { 0.0 };
    let start = IngarchParams {
        beta0: mean * (1.0 - start_persistence),
        beta: vec![start_persistence / (p + q).max(1) as f64; p],
        alpha: vec![start_persistence / (p + q).max(1) as f64; q],
    };
    let objective = |theta: &[f64]| -log_likelihood(&decode(theta, p), series, mean);
    let theta0 = encode(&start);
    if !objective(&theta0).is_finite() {
        return Err(Error::Numerical(
            "INGARCH log-likelihood is not finite at the starting point".into(),
        ));
    }
    let opts = NelderMeadOptions {
        max_evals: 4000 * (p + q + 1),
        ..Default::default()
    };
    let mut res = nelder_mead(objective, &theta0, opts);
    // one restart from the best vertex guards against simplex collapse
    let restart = nelder_mead(objective, &res.x, opts);
    if restart.f <= res.f {
        res.converged = restart.converged;
        res.x = restart.x;
        res.f = restart.f;
    }
    if !res.f.is_finite() {
        return Err(Error::Numerical("INGARCH optimiser produced a non-finite objective".into()));
    }
    let params = decode(&res.x, p);
    if !res.converged {
        log::warn!("INGARCH({p},{q}) fit did not converge; returning best iterate");
    }
    let at_lower_bound = params.beta0 < 10.0 * BETA0_LOWER_BOUND;
    Ok(IngarchFit {
        params,
        log_likelihood: -res.f,
        converged: res.converged,
        at_lower_bound,
    })
}

/// Predictive pmf on `{0..max}` with the upper tail lumped onto `max`.
///
/// `h = 1` is exact; longer horizons average the one-step pmf at the simulated
/// intensity over `paths` seeded sample paths.
pub fn forecast_ingarch(
    params: &IngarchParams,
    history: &[u32],
    max: u32,
    h: usize,
    paths: usize,
    seed: u64,
    var: usize,
) -> Result<MarginalForecast> {
    if h == 0 {
        return Err(Error::Validation("horizon must be positive".into()));
    }
    let lambda = conditional_means(params, history);
    if h == 1 {
        return Ok(MarginalForecast {
            var,
            horizon: 1,
            probs: poisson_lumped(*lambda.last().expect("non-empty"), max),
        });
    }
    let init = if history.is_empty() {
        params.stationary_mean()
    } else {
        history.iter().map(|&v| v as f64).sum::<f64>() / history.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; max as usize + 1];
    let paths = paths.max(1);
    for _ in 0..paths {
        let mut y: Vec<f64> = history.iter().map(|&v| v as f64).collect();
        let mut lam = lambda.clone();
        for step in 0..h {
            let next = *lam.last().expect("non-empty");
            if step + 1 == h {
                for (a, p) in acc.iter_mut().zip(poisson_lumped(next, max)) {
                    *a += p;
                }
                break;
            }
            let draw = sample_poisson(next, &mut rng);
            y.push(draw);
            let t = y.len();
            let mut l = params.beta0;
            for (k, b) in params.beta.iter().enumerate() {
                l += b * if t > k { y[t - k - 1] } else { init };
            }
            for (k, a) in params.alpha.iter().enumerate() {
                l += a * if t > k { lam[t - k - 1] } else { init };
            }
            lam.push(l);
        }
    }
    for a in acc.iter_mut() {
        *a /= paths as f64;
    }
    normalize(&mut acc);
    Ok(MarginalForecast {
        var,
        horizon: h,
        probs: acc,
    })
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(0.0)
}

/// Simulates `len` observations after `burn_in` discarded steps.
pub fn simulate_ingarch<R: Rng + ?Sized>(
    params: &IngarchParams,
    len: usize,
    burn_in: usize,
    rng: &mut R,
) -> Vec<u32> {
    let init = params.stationary_mean();
    let mut y: Vec<f64> = Vec::with_capacity(len + burn_in);
    let mut lam: Vec<f64> = Vec::with_capacity(len + burn_in);
    for t in 0..len + burn_in {
        let mut l = params.beta0;
        for (k, b) in params.beta.iter().enumerate() {
            l += b * if t > k { y[t - k - 1] } else { init };
        }
        for (k, a) in params.alpha.iter().enumerate() {
            l += a * if t > k { lam[t - k - 1] } else { init };
        }
        lam.push(l);
        y.push(sample_poisson(l, rng));
    }
    y[burn_in..].iter().map(|&v| v as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_mle_is_the_mean() {
        let fit = fit_ingarch(&[3; 40], 0, 0).unwrap();
        assert!((fit.params.beta0 - 3.0).abs() < 1e-3, "{:?}", fit);
        assert!(!fit.at_lower_bound);
    }

    #[test]
    fn all_zero_series_hits_lower_bound() {
        let fit = fit_ingarch(&[0; 40], 1, 1).unwrap();
        assert_eq!(fit.params.beta0, BETA0_LOWER_BOUND);
        assert!(fit.at_lower_bound);
    }

    #[test]
    fn short_series_rejected() {
        assert!(fit_ingarch(&[1; 30], 1, 1).is_err());
    }

    #[test]
    fn transform_round_trip() {
        let params = IngarchParams::new(1.3, vec![0.2, 0.1], vec![0.3]).unwrap();
        let back = decode(&encode(&params), 2);
        assert!((back.beta0 - 1.3).abs() < 1e-9);
        for (a, b) in back.beta.iter().chain(&back.alpha).zip([0.2, 0.1, 0.3]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tail_lumping() {
        let params = IngarchParams::new(1.0, vec![], vec![]).unwrap();
        let f = forecast_ingarch(&params, &[1, 0, 2], 7, 1, 0, 0, 0).unwrap();
        // P(Y = 7) = 1 - P(Y <= 6) for Poisson(1)
        let mut cdf6 = 0.0;
        let mut term = (-1.0f64).exp();
        for k in 0..=6 {
            if k > 0 {
                term /= k as f64;
            }
            cdf6 += term;
        }
        assert!((f.probs[7] - (1.0 - cdf6)).abs() < 1e-12);
        assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multi_step_is_seeded_and_valid() {
        let params = IngarchParams::new(1.0, vec![0.3], vec![0.2]).unwrap();
        let hist = [2, 1, 3, 0, 2, 4];
        let a = forecast_ingarch(&params, &hist, 7, 3, 2000, 5, 0).unwrap();
        let b = forecast_ingarch(&params, &hist, 7, 3, 2000, 5, 0).unwrap();
        assert_eq!(a, b);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the 3-step mean approaches the stationary mean 2
        let m = crate::dist::mean(&a.probs);
        assert!((m - 2.0).abs() < 0.6, "{m}");
    }
}
