//! Data-generating processes for the two simulated hierarchies.
//!
//! Cross-sectional: two binary bottoms thresholded from a latent bivariate
//! VAR(1) and their sum. Temporal: a Poisson weekly total whose log mean
//! follows a seasonal autoregression, split into seven binary days by ranking
//! Beta draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream-separated child seed (SplitMix64 finaliser over the inputs).
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossDgpConfig {
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub noise_cov: [[f64; 2]; 2],
    pub len: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for CrossDgpConfig {
    fn default() -> Self {
        Self {
            alpha_range: [0.4, 0.5],
            beta_range: [0.3, 0.5],
            noise_cov: [[0.1, 0.05], [0.05, 0.1]],
            len: 480,
            burn_in: 100,
            seed: 0,
        }
    }
}

impl CrossDgpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("alpha", self.alpha_range), ("beta", self.beta_range)] {
            if !(lo <= hi && lo > -1.0 && hi < 1.0) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] must lie inside (-1, 1)")));
            }
        }
        let c = self.noise_cov;
        let finite = c.iter().flatten().all(|v| v.is_finite());
        if !finite || c[0][1] != c[1][0] || c[0][0] < 0.0 || c[1][1] < 0.0 || c[0][0] * c[1][1] < c[0][1] * c[0][1] {
            return Err(Error::Config("noise covariance must be symmetric positive semidefinite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossDraw {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSample {
    /// Rows `(y1, y2, y1 + y2)`.
    pub rows: Vec<Vec<u32>>,
    pub draw: CrossDraw,
}

pub fn simulate_cross(cfg: &CrossDgpConfig) -> Result<CrossSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let alpha = draw(&mut rng, cfg.alpha_range);
    let beta = draw(&mut rng, cfg.beta_range);
    // Cholesky factor of the noise covariance
    let c = cfg.noise_cov;
    let l11 = c[0][0].sqrt();
    let l21 = if l11 > 0.0 { c[1][0] / l11 } else { 0.0 };
    let l22 = (c[1][1] - l21 * l21).max(0.0).sqrt();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    let mut rows = Vec::with_capacity(cfg.len);
    for t in 0..cfg.burn_in + cfg.len {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        s1 = alpha * s1 + l11 * e1;
        s2 = beta * s2 + l21 * e1 + l22 * e2;
        if t >= cfg.burn_in {
            let y1 = (s1 > 0.0) as u32;
            let y2 = (s2 > 0.0) as u32;
            rows.push(vec![y1, y2, y1 + y2]);
        }
    }
    Ok(CrossSample {
        rows,
        draw: CrossDraw { alpha, beta },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalDgpConfig {
    pub season: usize,
    pub ar_order: usize,
    /// Every weekly conditional mean must fall in this band.
    pub mean_band: [f64; 2],
    pub cap: u32,
    pub weeks: usize,
    pub burn_in: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for TemporalDgpConfig {
    fn default() -> Self {
        Self {
            season: 4,
            ar_order: 3,
            mean_band: [2.5, 4.5],
            cap: 7,
            weeks: 129,
            burn_in: 100,
            max_attempts: 1000,
            seed: 0,
        }
    }
}

/// Parameters of the log-linear recursion
/// `log λ_t = omega + seasonal[t mod s] + Σ phi_k log(1 + y_{t-k})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDraw {
    pub omega: f64,
    pub seasonal: Vec<f64>,
    pub phi: Vec<f64>,
    /// Average conditional mean per season over the kept weeks.
    pub seasonal_means: Vec<f64>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSample {
    pub weekly: Vec<u32>,
    /// `daily[w][d]` for week `w`, day `d` of seven.
    pub daily: Vec<[u8; 7]>,
    pub means: Vec<f64>,
    pub draw: TemporalDraw,
}

impl TemporalSample {
    /// Hierarchy rows `(d1, ..., d7, total)`.
    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.daily
            .iter()
            .zip(&self.weekly)
            .map(|(d, &w)| d.iter().map(|&v| v as u32).chain(std::iter::once(w)).collect())
            .collect()
    }
}

/// Sets the `total` days with the largest `zeta` to one.
pub fn disaggregate_week(total: u32, zeta: &[f64; 7]) -> [u8; 7] {
    let mut order: Vec<usize> = (0..7).collect();
    order.sort_by(|&a, &b| zeta[b].total_cmp(&zeta[a]));
    let mut out = [0u8; 7];
    for &d in order.iter().take(total.min(7) as usize) {
        out[d] = 1;
    }
    out
}

pub fn simulate_temporal(cfg: &TemporalDgpConfig) -> Result<TemporalSample> {
    let [lo, hi] = cfg.mean_band;
    if !(0.0 < lo && lo < hi) || cfg.season == 0 || cfg.cap == 0 || cfg.cap > 7 || cfg.weeks == 0 {
        return Err(Error::Config("invalid temporal DGP configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let betas: Vec<Beta<f64>> = (1..=7)
        .map(|i| Beta::new(i as f64, 4.0).expect("valid shape"))
        .collect();
    let total_len = cfg.burn_in + cfg.weeks;
    for attempt in 1..=cfg.max_attempts {
        let level = rng.gen_range(lo.ln()..hi.ln());
        let phi: Vec<f64> = (0..cfg.ar_order).map(|_| rng.gen_range(0.0..0.3)).collect();
        if phi.iter().sum::<f64>() >= 0.9 {
            continue;
        }
        let mut seasonal: Vec<f64> = (0..cfg.season).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let centre = seasonal.iter().sum::<f64>() / cfg.season as f64;
        seasonal.iter_mut().for_each(|g| *g -= centre);
        // intercept that puts the deterministic fixed point at `level`
        let omega = level - phi.iter().sum::<f64>() * level.exp().ln_1p();
        let mut y = vec![0u32; total_len];
        let mut lambda = vec![0.0; total_len];
        for t in 0..total_len {
            let mut x = omega + seasonal[t % cfg.season];
            for (k, &a) in phi.iter().enumerate() {
                let prev = if t > k { y[t - k - 1] as f64 } else { level.exp() };
                x += a * prev.ln_1p();
            }
            lambda[t] = x.exp();
            y[t] = Poisson::new(lambda[t]).expect("positive mean").sample(&mut rng) as u32;
        }
        let mut sums = vec![(0.0, 0usize); cfg.season];
        for t in cfg.burn_in..total_len {
            let e = &mut sums[t % cfg.season];
            e.0 += lambda[t];
            e.1 += 1;
        }
        let seasonal_means: Vec<f64> = sums.iter().filter(|e| e.1 > 0).map(|e| e.0 / e.1 as f64).collect();
        if seasonal_means.iter().any(|&m| m < lo || m > hi) {
            continue;
        }
        let mut weekly = Vec::with_capacity(cfg.weeks);
        let mut daily = Vec::with_capacity(cfg.weeks);
        for &v in &y[cfg.burn_in..] {
            let v = v.min(cfg.cap);
            let mut zeta = [0.0; 7];
            for (z, b) in zeta.iter_mut().zip(&betas) {
                *z = b.sample(&mut rng);
            }
            weekly.push(v);
            daily.push(disaggregate_week(v, &zeta));
        }
        return Ok(TemporalSample {
            weekly,
            daily,
            means: lambda[cfg.burn_in..].to_vec(),
            draw: TemporalDraw {
                omega,
                seasonal,
                phi,
                seasonal_means,
                attempts: attempt,
            },
        });
    }
    Err(Error::Config(format!(
        "no seasonal AR parameters kept the long-run means inside [{lo}, {hi}] in {} attempts",
        cfg.max_attempts
    )))
}

/// Seeds and drawn parameters of every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationManifest {
    pub kind: String,
    pub root_seed: u64,
    pub replications: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub params: serde_json::Value,
    pub file: Option<String>,
}
