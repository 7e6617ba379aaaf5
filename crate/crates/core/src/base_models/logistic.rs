//! Logistic autoregression for binary series with seasonal dummies.
//!
//! Covariates at time `t`: intercept, `y_{t-1} .. y_{t-n_lags}`, and one dummy
//! per seasonal phase `1..period` (phase `t mod period`, phase 0 is baseline).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MarginalForecast;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
const MAX_IRLS_ITER: usize = 60;
const ETA_CAP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticLagParams {
    pub n_lags: usize,
    pub period: usize,
    pub coefficients: Vec<f64>,
}

impl LogisticLagParams {
    pub fn n_features(n_lags: usize, period: usize) -> usize {
        1 + n_lags + period.saturating_sub(1)
    }

    /// Success probability at time `t` given the values before it.
    fn prob_at(&self, t: usize, lagged: impl Fn(usize) -> f64) -> f64 {
        let mut eta = self.coefficients[0];
        for k in 1..=self.n_lags {
            eta += self.coefficients[k] * lagged(k);
        }
        let phase = t % self.period;
        if phase > 0 {
            eta += self.coefficients[self.n_lags + phase];
        }
        sigmoid(eta.clamp(-ETA_CAP, ETA_CAP))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticLagParams,
    pub converged: bool,
    /// Fitted probabilities reached 0 or 1: (quasi-)separation, held in check by the ridge.
    pub separation: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn features(series: &[u8], t: usize, n_lags: usize, period: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(LogisticLagParams::n_features(n_lags, period));
    x.push(1.0);
    for k in 1..=n_lags {
        x.push(series[t - k] as f64);
    }
    for phase in 1..period {
        x.push(if t % period == phase { 1.0 } else { 0.0 });
    }
    x
}

/// Iteratively reweighted least squares with a small ridge term.
pub fn fit_logistic(series: &[u8], n_lags: usize, period: usize) -> Result<LogisticFit> {
    if n_lags == 0 || period == 0 {
        return Err(Error::Validation("n_lags and period must be positive".into()));
    }
    if series.iter().any(|&v| v > 1) {
        return Err(Error::Validation("logistic model needs a binary series".into()));
    }
    let min_len = 5 * (n_lags + period);
    if series.len() < min_len {
        return Err(Error::Validation(format!(
            "logistic model needs at least {min_len} observations, got {}",
            series.len()
        )));
    }
    let p = LogisticLagParams::n_features(n_lags, period);
    let rows: Vec<Vec<f64>> = (n_lags..series.len())
        .map(|t| features(series, t, n_lags, period))
        .collect();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_iterator(rows.len(), (n_lags..series.len()).map(|t| series[t] as f64));

    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut prev_dev = f64::INFINITY;
    for _ in 0..MAX_IRLS_ITER {
        let eta = (&x * &beta).map(|e| e.clamp(-ETA_CAP, ETA_CAP));
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut xtwx = DMatrix::zeros(p, p);
        let mut xtwz = DVector::zeros(p);
        for i in 0..x.nrows() {
            let row = x.row(i);
            let z = eta[i] + (y[i] - mu[i]) / w[i];
            for a in 0..p {
                let wa = w[i] * row[a];
                if wa == 0.0 {
                    continue;
                }
                xtwz[a] += wa * z;
                for b in a..p {
                    xtwx[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
            xtwx[(a, a)] += RIDGE;
        }
        let next = match xtwx.clone().cholesky() {
            Some(ch) => ch.solve(&xtwz),
            None => xtwx
                .lu()
                .solve(&xtwz)
                .ok_or_else(|| Error::Numerical("singular IRLS system".into()))?,
        };
        beta = next;
        let mu = (&x * &beta).map(|e| sigmoid(e.clamp(-ETA_CAP, ETA_CAP)));
        let dev: f64 = -2.0
            * y.iter()
                .zip(mu.iter())
                .map(|(&yi, &m)| {
                    let m = m.clamp(1e-300, 1.0 - 1e-16);
                    yi * m.ln() + (1.0 - yi) * (1.0 - m).ln()
                })
                .sum::<f64>();
        if (prev_dev - dev).abs() <= 1e-10 * (dev.abs() + 0.1) {
            converged = true;
            break;
        }
        prev_dev = dev;
    }
    let fitted = (&x * &beta).map(|e| sigmoid(e.clamp(-ETA_CAP, ETA_CAP)));
    let separation = fitted.iter().any(|&m| !(1e-8..=1.0 - 1e-8).contains(&m));
    if separation {
        log::debug!("logistic fit shows separation; ridge-capped coefficients");
    }
    Ok(LogisticFit {
        params: LogisticLagParams {
            n_lags,
            period,
            coefficients: beta.iter().copied().collect(),
        },
        converged,
        separation,
    })
}

/// Bernoulli pmf for time `len + h - 1` given the series so far. `h = 1` is
/// exact; longer horizons average the final-step probability over seeded
/// sample paths.
pub fn forecast_logistic(
    params: &LogisticLagParams,
    series: &[u8],
    h: usize,
    paths: usize,
    seed: u64,
    var: usize,
) -> Result<MarginalForecast> {
    if h == 0 {
        return Err(Error::Validation("horizon must be positive".into()));
    }
    if series.len() < params.n_lags {
        return Err(Error::Validation("history shorter than the lag order".into()));
    }
    let t0 = series.len();
    let p1 = if h == 1 {
        params.prob_at(t0, |k| series[t0 - k] as f64)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = paths.max(1);
        let mut acc = 0.0;
        let mut path: Vec<u8> = Vec::with_capacity(h);
        for _ in 0..paths {
            path.clear();
            for step in 0..h {
                let t = t0 + step;
                let lag = |k: usize| {
                    if k <= step {
                        path[step - k] as f64
                    } else {
                        series[t - k] as f64
                    }
                };
                let pr = params.prob_at(t, lag);
                if step + 1 == h {
                    acc += pr;
                } else {
                    path.push(rng.gen_bool(pr) as u8);
                }
            }
        }
        acc / paths as f64
    };
    Ok(MarginalForecast {
        var,
        horizon: h,
        probs: vec![1.0 - p1, p1],
    })
}

pub fn fit_forecast_logistic(
    series: &[u8],
    n_lags: usize,
    period: usize,
    h: usize,
    paths: usize,
    seed: u64,
    var: usize,
) -> Result<(MarginalForecast, LogisticFit)> {
    let fit = fit_logistic(series, n_lags, period)?;
    let f = forecast_logistic(&fit.params, series, h, paths, seed, var)?;
    Ok((f, fit))
}
