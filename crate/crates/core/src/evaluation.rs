//! Brier scoring, backtesting windows and rank-based comparison of methods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_models::{independence_product, MarginalForecast};
use crate::error::{Error, Result};
use crate::hierarchy::{DomainKind, DomainTables};
use crate::recon::ForecastPair;

/// `Σ_k (z_k − π_k)²` for the one-hot `z` at `outcome`.
pub fn brier(pmf: &[f64], outcome: usize) -> Result<f64> {
    if outcome >= pmf.len() {
        return Err(Error::Shape(format!("outcome {outcome} outside pmf of length {}", pmf.len())));
    }
    Ok(brier_unchecked(pmf, outcome))
}

pub(crate) fn brier_unchecked(pmf: &[f64], outcome: usize) -> f64 {
    let sq: f64 = pmf.iter().map(|p| p * p).sum();
    let po = pmf[outcome];
    // Σ_{k≠o} π_k² + (1 − π_o)²
    (sq - po * po) + (1.0 - po) * (1.0 - po)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Training data always starts at the first observation.
    #[default]
    Expanding,
    /// Training data is the `origin` observations before the forecast origin.
    Rolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Length of the first training window.
    pub origin: usize,
    #[serde(default = "default_step")]
    pub step: usize,
    pub horizon: usize,
    #[serde(default)]
    pub kind: WindowKind,
}

fn default_step() -> usize {
    1
}

/// One backtest window: training rows `train_start..train_end`, target row
/// `train_end + horizon − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub train_start: usize,
    pub train_end: usize,
    pub target: usize,
}

impl WindowSpec {
    pub fn expanding(origin: usize, horizon: usize) -> Self {
        Self {
            origin,
            step: 1,
            horizon,
            kind: WindowKind::Expanding,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.origin == 0 || self.step == 0 || self.horizon == 0 {
            return Err(Error::Config("origin, step and horizon must be positive".into()));
        }
        if self.origin + self.horizon > len {
            return Err(Error::Config(format!(
                "series of length {len} too short for origin {} and horizon {}",
                self.origin, self.horizon
            )));
        }
        Ok(())
    }

    pub fn windows(&self, len: usize) -> Result<Vec<Window>> {
        self.validate(len)?;
        let mut out = Vec::new();
        let mut end = self.origin;
        while end + self.horizon <= len {
            out.push(Window {
                train_start: match self.kind {
                    WindowKind::Expanding => 0,
                    WindowKind::Rolling => end - self.origin,
                },
                train_end: end,
                target: end + self.horizon - 1,
            });
            end += self.step;
        }
        Ok(out)
    }
}

/// Margins forecast in one window together with what happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowForecast {
    pub target: usize,
    pub margins: Vec<MarginalForecast>,
    /// Observed point after clamping to the domain bounds.
    pub observed: Vec<u32>,
    pub realized: usize,
    pub clamped: bool,
}

/// Coherent index of an observation, clamping values above the bounds.
pub fn realize(obs: &[u32], tbl: &DomainTables, row: usize) -> Result<(usize, Vec<u32>, bool)> {
    let dmax = tbl.hierarchy().domain_max();
    if obs.len() != dmax.len() {
        return Err(Error::Data(format!("row {row} has {} values, expected {}", obs.len(), dmax.len())));
    }
    let clamped: Vec<u32> = obs.iter().zip(dmax).map(|(&v, &d)| v.min(d)).collect();
    let was_clamped = clamped.as_slice() != obs;
    let k = tbl
        .point_to_index(&clamped, DomainKind::Coherent)
        .map_err(|_| Error::Data(format!("row {row} {obs:?} violates the aggregation constraints")))?;
    Ok((k, clamped, was_clamped))
}

/// Runs `forecaster(training rows, horizon)` in every window, in parallel.
pub fn run_window_forecasts<F>(
    series: &[Vec<u32>],
    spec: &WindowSpec,
    tbl: &DomainTables,
    forecaster: F,
) -> Result<Vec<WindowForecast>>
where
    F: Fn(&[Vec<u32>], usize, usize) -> Result<Vec<MarginalForecast>> + Sync,
{
    let windows = spec.windows(series.len())?;
    let out: Vec<WindowForecast> = windows
        .par_iter()
        .map(|w| {
            let (realized, observed, clamped) = realize(&series[w.target], tbl, w.target)?;
            let margins = forecaster(&series[w.train_start..w.train_end], spec.horizon, w.target)?;
            if margins.len() != tbl.n() {
                return Err(Error::Shape(format!("forecaster returned {} margins for {} variables", margins.len(), tbl.n())));
            }
            Ok(WindowForecast {
                target: w.target,
                margins,
                observed,
                realized,
                clamped,
            })
        })
        .collect::<Result<_>>()?;
    let n_clamped = out.iter().filter(|w| w.clamped).count();
    if n_clamped > 0 {
        log::warn!("{n_clamped} realisations clamped to the domain bounds");
    }
    Ok(out)
}

pub fn pairs_from_windows(windows: &[WindowForecast], tbl: &DomainTables) -> Result<Vec<ForecastPair>> {
    windows
        .iter()
        .map(|w| ForecastPair::new(independence_product(&w.margins, tbl)?, w.realized, tbl.r()))
        .collect()
}

/// Backtest producing one `(base forecast, realisation)` pair per window.
pub fn run_windows<F>(series: &[Vec<u32>], spec: &WindowSpec, tbl: &DomainTables, forecaster: F) -> Result<Vec<ForecastPair>>
where
    F: Fn(&[Vec<u32>], usize, usize) -> Result<Vec<MarginalForecast>> + Sync,
{
    pairs_from_windows(&run_window_forecasts(series, spec, tbl, forecaster)?, tbl)
}

/// Upper 5% quantiles of the studentized range with infinite degrees of
/// freedom, for 2..=10 groups.
const STUDENTIZED_RANGE_05: [f64; 9] = [2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286, 4.387, 4.474];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McbResult {
    pub mean_ranks: Vec<f64>,
    /// Half-width of every method's interval around its mean rank.
    pub half_width: f64,
    pub best: usize,
    /// Interval does not overlap the best method's interval.
    pub significant: Vec<bool>,
}

/// Ranks within one sample, ties sharing their average rank (1 = lowest score).
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &e in &idx[i..=j] {
            ranks[e] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Multiple comparisons with the best on `scores[sample][method]`.
///
/// Intervals are `mean rank ± (q/2) √(K(K+1) / 12N)` with `q` the studentized
/// range quantile, so two intervals are disjoint exactly when the mean ranks
/// differ by more than the Nemenyi critical distance.
pub fn mcb(scores: &[Vec<f64>], alpha: f64) -> Result<McbResult> {
    if (alpha - 0.05).abs() > 1e-12 {
        return Err(Error::Config(format!("MCB critical values are tabulated for alpha = 0.05 only, got {alpha}")));
    }
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(Error::Config("MCB needs at least two methods".into()));
    }
    if k > 10 {
        return Err(Error::Config(format!("MCB critical values are tabulated for up to 10 methods, got {k}")));
    }
    if n < 2 {
        return Err(Error::Data("MCB needs at least two samples".into()));
    }
    if scores.iter().any(|s| s.len() != k) {
        return Err(Error::Shape("ragged score matrix".into()));
    }
    let mut mean_ranks = vec![0.0; k];
    for s in scores {
        for (m, r) in average_ranks(s).into_iter().enumerate() {
            mean_ranks[m] += r;
        }
    }
    for r in mean_ranks.iter_mut() {
        *r /= n as f64;
    }
    let q = STUDENTIZED_RANGE_05[k - 2];
    let half_width = 0.5 * q * ((k * (k + 1)) as f64 / (12.0 * n as f64)).sqrt();
    let best = (0..k)
        .min_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]))
        .expect("k >= 2");
    let significant = mean_ranks
        .iter()
        .map(|&r| r - mean_ranks[best] > 2.0 * half_width)
        .collect();
    Ok(McbResult {
        mean_ranks,
        half_width,
        best,
        significant,
    })
}

/// Label of the joint target in reports.
pub const JOINT: &str = "joint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<String>,
    /// Variable names followed by [`JOINT`].
    pub targets: Vec<String>,
    /// `mean_scores[method][target]`
    pub mean_scores: Vec<Vec<f64>>,
    pub n_samples: usize,
    /// `samples[target][sample][method]`
    pub samples: Vec<Vec<Vec<f64>>>,
    /// One entry per target; absent with fewer than two methods or samples.
    pub mcb: Vec<Option<McbResult>>,
}

impl EvalReport {
    /// Builds the report from `samples[target][sample][method]`.
    pub fn new(methods: Vec<String>, targets: Vec<String>, samples: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if samples.len() != targets.len() {
            return Err(Error::Shape("one score matrix per target required".into()));
        }
        let n_samples = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|t| t.len() != n_samples || t.iter().any(|s| s.len() != methods.len())) {
            return Err(Error::Shape("score matrices disagree in shape".into()));
        }
        let mean_scores = (0..methods.len())
            .map(|m| {
                samples
                    .iter()
                    .map(|t| {
                        if n_samples == 0 {
                            f64::NAN
                        } else {
                            t.iter().map(|s| s[m]).sum::<f64>() / n_samples as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mcb = samples
            .iter()
            .map(|t| {
                if methods.len() >= 2 && methods.len() <= 10 && n_samples >= 2 {
                    mcb(t, 0.05).ok()
                } else {
                    None
                }
            })
            .collect();
        Ok(Self {
            methods,
            targets,
            mean_scores,
            n_samples,
            samples,
            mcb,
        })
    }

    pub fn mean(&self, method: &str, target: &str) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        let t = self.targets.iter().position(|x| x == target)?;
        Some(self.mean_scores[m][t])
    }

    /// `method,<target>...` with one row per method.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for t in &self.targets {
            s.push(',');
            s.push_str(t);
        }
        s.push('\n');
        for (m, row) in self.methods.iter().zip(&self.mean_scores) {
            s.push_str(m);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// `target,method,mean_rank,half_width,significant` for external plotting.
    pub fn ranks_csv(&self) -> String {
        let mut s = String::from("target,method,mean_rank,half_width,significant\n");
        for (t, res) in self.targets.iter().zip(&self.mcb) {
            if let Some(res) = res {
                for (m, name) in self.methods.iter().enumerate() {
                    s.push_str(&format!(
                        "{t},{name},{},{},{}\n",
                        res.mean_ranks[m], res.half_width, res.significant[m]
                    ));
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Parses the output of [`EvalReport::to_csv`] into `(methods, targets, means)`.
    pub fn parse_csv(s: &str) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
        let mut lines = s.lines();
        let header = lines.next().ok_or_else(|| Error::Data("empty report".into()))?;
        let targets: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut methods = Vec::new();
        let mut means = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let mut it = line.split(',');
            methods.push(it.next().unwrap_or_default().to_string());
            let row = it
                .map(|v| v.parse::<f64>().map_err(|e| Error::Data(format!("bad score {v}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != targets.len() {
                return Err(Error::Data("report row length differs from header".into()));
            }
            means.push(row);
        }
        Ok((methods, targets, means))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{enumerate_domains, Hierarchy};

    #[test]
    fn brier_identities() {
        assert_eq!(brier(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        assert_eq!(brier(&[0.25; 4], 2).unwrap(), 0.75);
        assert_eq!(brier(&[0.0, 1.0], 0).unwrap(), 2.0);
        assert!(brier(&[1.0], 1).is_err());
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::expanding(150, 1);
        assert_eq!(spec.windows(480).unwrap().len(), 330);
        assert_eq!(WindowSpec::expanding(10, 3).windows(13).unwrap().len(), 1);
        assert!(WindowSpec::expanding(10, 4).windows(13).is_err());
        for (t, o, h) in [(50, 7, 1), (50, 7, 5), (31, 30, 1), (100, 1, 99)] {
            assert_eq!(WindowSpec::expanding(o, h).windows(t).unwrap().len(), t - o - h + 1);
        }
        let rolling = WindowSpec {
            origin: 5,
            step: 2,
            horizon: 1,
            kind: WindowKind::Rolling,
        };
        let w = rolling.windows(12).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!((w[3].train_start, w[3].train_end, w[3].target), (6, 11, 11));
    }

    #[test]
    fn realizations_round_trip_and_clamp() {
        let tbl = enumerate_domains(&Hierarchy::two_level(vec![1, 1]).unwrap()).unwrap();
        let series: Vec<Vec<u32>> = (0..20).map(|t| vec![t % 2, (t / 2) % 2, t % 2 + (t / 2) % 2]).collect();
        let uniform = |_: &[Vec<u32>], h: usize, _: usize| {
            Ok(vec![
                MarginalForecast { var: 0, horizon: h, probs: vec![0.5; 2] },
                MarginalForecast { var: 1, horizon: h, probs: vec![0.5; 2] },
                MarginalForecast { var: 2, horizon: h, probs: vec![1.0 / 3.0; 3] },
            ])
        };
        let spec = WindowSpec::expanding(5, 2);
        let wf = run_window_forecasts(&series, &spec, &tbl, uniform).unwrap();
        assert_eq!(wf.len(), 14);
        for w in &wf {
            assert_eq!(tbl.coherent_point(w.realized), &series[w.target][..]);
        }
        assert_eq!(wf.last().unwrap().target, 19);
        let pairs = run_windows(&series, &spec, &tbl, uniform).unwrap();
        assert_eq!(pairs.len(), 14);

        assert_eq!(realize(&[1, 1, 2], &tbl, 0).unwrap().2, false);
        let err = realize(&[1, 1, 1], &tbl, 7).unwrap_err();
        assert!(err.to_string().contains("row 7"), "{err}");
        let t2 = enumerate_domains(&Hierarchy::two_level(vec![2, 2]).unwrap()).unwrap();
        assert!(realize(&[3, 0, 3], &t2, 0).is_err());
        assert_eq!(realize(&[3, 2, 4], &t2, 0).unwrap().1, vec![2, 2, 4]);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
        let same = vec![vec![0.5; 4]; 10];
        let res = mcb(&same, 0.05).unwrap();
        assert!(res.mean_ranks.iter().all(|&r| r == 2.5));
        assert!(res.significant.iter().all(|&s| !s));
    }

    #[test]
    fn mcb_detects_dominant_method() {
        let scores: Vec<Vec<f64>> = (0..200).map(|i| vec![0.1, 0.2 + (i % 3) as f64 * 0.1, 0.25, 0.3]).collect();
        let res = mcb(&scores, 0.05).unwrap();
        assert_eq!(res.best, 0);
        assert_eq!(res.mean_ranks[0], 1.0);
        assert!(res.significant[1..].iter().all(|&s| s));
        let small = mcb(&scores[..50], 0.05).unwrap();
        assert!((small.half_width / res.half_width - 2.0).abs() < 1e-12);

        let swapped: Vec<Vec<f64>> = (0..10).map(|i| if i % 2 == 0 { vec![0.1, 0.2] } else { vec![0.2, 0.1] }).collect();
        assert_eq!(mcb(&swapped, 0.05).unwrap().mean_ranks, vec![1.5, 1.5]);
        assert!(mcb(&swapped, 0.1).is_err());
        assert!(mcb(&[vec![0.1], vec![0.2]], 0.05).is_err());
    }

    #[test]
    fn report_files_round_trip() {
        let samples = vec![
            vec![vec![0.1, 0.2], vec![0.3, 0.1], vec![0.2, 0.2]],
            vec![vec![0.5, 0.7], vec![0.6, 0.4], vec![0.9, 1.0]],
        ];
        let rep = EvalReport::new(
            vec!["base".into(), "dfr".into()],
            vec!["y1".into(), JOINT.into()],
            samples,
        )
        .unwrap();
        assert!((rep.mean("dfr", JOINT).unwrap() - 0.7).abs() < 1e-15);
        let (m, t, means) = EvalReport::parse_csv(&rep.to_csv()).unwrap();
        assert_eq!(m, rep.methods);
        assert_eq!(t, rep.targets);
        assert_eq!(means, rep.mean_scores);
        assert_eq!(EvalReport::from_json(&rep.to_json().unwrap()).unwrap(), rep);
        assert_eq!(rep.ranks_csv().lines().count(), 5);
    }
}
