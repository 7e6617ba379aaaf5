//! Backtest pipeline: base forecasts per window, training of the
//! reconciliation methods on the early windows and scoring on the rest.
//! The two simulation studies are thin wrappers around it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_models::{
    empirical_joint, fit_binar1, fit_ingarch, fit_logistic, forecast_binar1, forecast_ingarch, forecast_logistic,
    independence_product, MarginalForecast, DEFAULT_PATHS,
};
use crate::baselines::{dbu_matrix, dtd_matrix, fit_dtd};
use crate::error::{Error, Result};
use crate::evaluation::{brier_unchecked, pairs_from_windows, run_window_forecasts, EvalReport, WindowForecast, WindowSpec, JOINT};
use crate::hierarchy::{marginalize, DomainKind, DomainTables, Hierarchy, IndexedPmf};
use crate::qp::{SolveReport, SolverSettings};
use crate::recon::{train_dfr, ReconMatrix};
use crate::simulation::{
    derive_seed, simulate_cross, simulate_temporal, CrossDgpConfig, ReplicationManifest, ReplicationRecord,
    TemporalDgpConfig,
};
use crate::stepwise::{random_orderings, sdfr_averaged, train_sdfr_ensemble, PreparedSdfr, SdfrEnsemble, DEFAULT_ORDERINGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Base,
    Dbu,
    Dtd,
    Dfr,
    Sdfr,
    Empirical,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Base, Method::Dbu, Method::Dtd, Method::Dfr, Method::Sdfr, Method::Empirical];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Dbu => "dbu",
            Method::Dtd => "dtd",
            Method::Dfr => "dfr",
            Method::Sdfr => "sdfr",
            Method::Empirical => "empirical",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Base forecaster for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BaseModel {
    /// Binomial AR(1) with `N` equal to the variable's upper bound.
    Binar1,
    Ingarch { p: usize, q: usize },
    Logistic { lags: usize, period: usize },
    /// Variables sharing this model are consecutive sub-periods of one binary
    /// series at a higher frequency, in variable order. The sub-period count
    /// is the seasonal period.
    SubperiodLogistic { lags: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSetup {
    pub models: Vec<BaseModel>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    DEFAULT_PATHS
}

impl BaseSetup {
    pub fn validate(&self, tbl: &DomainTables) -> Result<()> {
        let dmax = tbl.hierarchy().domain_max();
        if self.models.len() != dmax.len() {
            return Err(Error::Config(format!(
                "{} base models for {} variables",
                self.models.len(),
                dmax.len()
            )));
        }
        let mut sub_lags = None;
        for (i, m) in self.models.iter().enumerate() {
            match *m {
                BaseModel::Logistic { .. } | BaseModel::SubperiodLogistic { .. } if dmax[i] != 1 => {
                    return Err(Error::Config(format!("logistic model on variable {i} with upper bound {}", dmax[i])));
                }
                BaseModel::SubperiodLogistic { lags } => {
                    if sub_lags.is_some_and(|l| l != lags) {
                        return Err(Error::Config("sub-period logistic models must share their lag order".into()));
                    }
                    sub_lags = Some(lags);
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Margins for the row `h` steps past the end of `rows`.
    pub fn forecast(&self, rows: &[Vec<u32>], h: usize, target: usize, tbl: &DomainTables) -> Result<Vec<MarginalForecast>> {
        let dmax = tbl.hierarchy().domain_max();
        let seed = |var: usize| derive_seed(self.seed, target as u64, var as u64);
        let mut out: Vec<Option<MarginalForecast>> = vec![None; dmax.len()];

        let sub: Vec<usize> = (0..dmax.len())
            .filter(|&i| matches!(self.models[i], BaseModel::SubperiodLogistic { .. }))
            .collect();
        if let Some(&first) = sub.first() {
            let BaseModel::SubperiodLogistic { lags } = self.models[first] else {
                unreachable!()
            };
            let flat: Vec<u8> = rows
                .iter()
                .flat_map(|r| sub.iter().map(move |&i| r[i].min(1) as u8))
                .collect();
            let fit = fit_logistic(&flat, lags, sub.len())?;
            for (pos, &i) in sub.iter().enumerate() {
                let steps = (h - 1) * sub.len() + pos + 1;
                let mut f = forecast_logistic(&fit.params, &flat, steps, self.paths, seed(i), i)?;
                f.horizon = h;
                out[i] = Some(f);
            }
        }

        for (i, m) in self.models.iter().enumerate() {
            let raw: Vec<u32> = rows.iter().map(|r| r[i]).collect();
            let f = match *m {
                BaseModel::SubperiodLogistic { .. } => continue,
                BaseModel::Binar1 => {
                    let col: Vec<u32> = raw.iter().map(|&v| v.min(dmax[i])).collect();
                    let fit = fit_binar1(&col, dmax[i])?;
                    let last = *col.last().ok_or_else(|| Error::Data("empty training window".into()))?;
                    forecast_binar1(&fit.params, last, h, i)?
                }
                BaseModel::Ingarch { p, q } => {
                    let fit = fit_ingarch(&raw, p, q)?;
                    forecast_ingarch(&fit.params, &raw, dmax[i], h, self.paths, seed(i), i)?
                }
                BaseModel::Logistic { lags, period } => {
                    let col: Vec<u8> = raw.iter().map(|&v| v.min(1) as u8).collect();
                    let fit = fit_logistic(&col, lags, period)?;
                    forecast_logistic(&fit.params, &col, h, self.paths, seed(i), i)?
                }
            };
            out[i] = Some(f);
        }
        Ok(out.into_iter().map(|f| f.expect("every variable forecast")).collect())
    }
}

/// Base margins for every window of `spec`.
pub fn backtest(rows: &[Vec<u32>], tbl: &DomainTables, spec: &WindowSpec, base: &BaseSetup) -> Result<Vec<WindowForecast>> {
    base.validate(tbl)?;
    run_window_forecasts(rows, spec, tbl, |train, h, target| base.forecast(train, h, target, tbl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub methods: Vec<Method>,
    pub train_pairs: usize,
    /// Defaults to every window after the training ones.
    #[serde(default)]
    pub test_pairs: Option<usize>,
    #[serde(default = "default_orderings")]
    pub orderings: usize,
    /// Additive smoothing for the empirical method.
    #[serde(default)]
    pub laplace: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_orderings() -> usize {
    DEFAULT_ORDERINGS
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("method list has duplicates".into()));
        }
        if self.train_pairs == 0 {
            return Err(Error::Config("at least one training pair is needed".into()));
        }
        if self.methods.contains(&Method::Sdfr) && self.orderings == 0 {
            return Err(Error::Config("stepwise reconciliation needs at least one ordering".into()));
        }
        Ok(())
    }

    /// `(train, test)` window counts for `n` windows.
    pub fn split(&self, n: usize) -> Result<(usize, usize)> {
        let test = match self.test_pairs {
            Some(t) => t,
            None => n.saturating_sub(self.train_pairs),
        };
        if test == 0 {
            return Err(Error::Config("test set is empty".into()));
        }
        if self.train_pairs + test != n {
            return Err(Error::Config(format!(
                "{} training and {test} test pairs do not add up to the {n} available windows",
                self.train_pairs
            )));
        }
        Ok((self.train_pairs, test))
    }
}

/// Everything needed to reconcile new base forecasts, as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMethods {
    pub horizon: usize,
    pub hierarchy_fingerprint: String,
    pub methods: Vec<Method>,
    pub dbu: Option<ReconMatrix>,
    pub dtd: Option<ReconMatrix>,
    pub dfr: Option<ReconMatrix>,
    pub dfr_report: Option<SolveReport>,
    pub sdfr: Option<SdfrEnsemble>,
    /// Coherent-domain probabilities.
    pub empirical: Option<Vec<f64>>,
}

/// Trains every configured method. `history` holds the rows observable at the
/// end of training and feeds the top-down proportions and the empirical pmf.
pub fn train_methods(
    train: &[WindowForecast],
    history: &[Vec<u32>],
    tbl: &DomainTables,
    cfg: &MethodConfig,
    horizon: usize,
    seed: u64,
) -> Result<TrainedMethods> {
    cfg.validate()?;
    let has = |m| cfg.methods.contains(&m);
    let mut out = TrainedMethods {
        horizon,
        hierarchy_fingerprint: tbl.hierarchy().fingerprint(),
        methods: cfg.methods.clone(),
        dbu: None,
        dtd: None,
        dfr: None,
        dfr_report: None,
        sdfr: None,
        empirical: None,
    };
    if has(Method::Dbu) {
        out.dbu = Some(dbu_matrix(tbl, horizon)?);
    }
    if has(Method::Dtd) {
        out.dtd = Some(dtd_matrix(&fit_dtd(&clamp_rows(history, tbl), tbl)?, tbl, horizon)?);
    }
    if has(Method::Empirical) {
        out.empirical = Some(empirical_joint(history, tbl, cfg.laplace)?.probs);
    }
    if has(Method::Dfr) {
        let pairs = pairs_from_windows(train, tbl)?;
        let trained = train_dfr(&pairs, tbl, horizon, &cfg.solver)?;
        out.dfr = Some(trained.matrix);
        out.dfr_report = trained.report;
    }
    if has(Method::Sdfr) {
        let orderings = random_orderings(tbl.hierarchy().n_basis(), cfg.orderings, derive_seed(seed, 7, horizon as u64));
        out.sdfr = Some(train_sdfr_ensemble(train, tbl, &orderings, horizon, &cfg.solver)?);
    }
    Ok(out)
}

fn clamp_rows(rows: &[Vec<u32>], tbl: &DomainTables) -> Vec<Vec<u32>> {
    let dmax = tbl.hierarchy().domain_max();
    rows.iter()
        .map(|r| r.iter().zip(dmax).map(|(&v, &d)| v.min(d)).collect())
        .collect()
}

/// Trained methods with the stepwise models' domain tables built.
#[derive(Debug, Clone)]
pub struct PreparedMethods {
    pub trained: TrainedMethods,
    sdfr: Option<Vec<PreparedSdfr>>,
}

impl TrainedMethods {
    pub fn prepare(self, tbl: &DomainTables) -> Result<PreparedMethods> {
        if self.hierarchy_fingerprint != tbl.hierarchy().fingerprint() {
            return Err(Error::Validation("models were trained on a different hierarchy".into()));
        }
        for m in &self.methods {
            let present = match m {
                Method::Base => true,
                Method::Dbu => self.dbu.is_some(),
                Method::Dtd => self.dtd.is_some(),
                Method::Dfr => self.dfr.is_some(),
                Method::Sdfr => self.sdfr.is_some(),
                Method::Empirical => self.empirical.is_some(),
            };
            if !present {
                return Err(Error::Data(format!("no trained model for method {m}")));
            }
        }
        for a in [&self.dbu, &self.dtd, &self.dfr].into_iter().flatten() {
            if a.r != tbl.r() || a.q != tbl.q() {
                return Err(Error::Shape("reconciliation matrix does not match the hierarchy".into()));
            }
        }
        let sdfr = self.sdfr.clone().map(SdfrEnsemble::prepare).transpose()?;
        Ok(PreparedMethods { trained: self, sdfr })
    }
}

impl PreparedMethods {
    /// One joint forecast per method: complete domain for `base`, coherent otherwise.
    pub fn forecast(&self, margins: &[MarginalForecast], tbl: &DomainTables) -> Result<Vec<IndexedPmf>> {
        let base = independence_product(margins, tbl)?;
        let t = &self.trained;
        t.methods
            .iter()
            .map(|m| match m {
                Method::Base => Ok(base.clone()),
                Method::Dbu => t.dbu.as_ref().expect("prepared").apply(&base),
                Method::Dtd => t.dtd.as_ref().expect("prepared").apply(&base),
                Method::Dfr => t.dfr.as_ref().expect("prepared").apply(&base),
                Method::Sdfr => {
                    let probs: Vec<&[f64]> = margins.iter().map(|m| m.probs.as_slice()).collect();
                    sdfr_averaged(&probs, self.sdfr.as_deref().expect("prepared"), tbl)
                }
                Method::Empirical => IndexedPmf::new(DomainKind::Coherent, t.empirical.clone().expect("prepared")),
            })
            .collect()
    }
}

/// Brier scores of each variable's marginal followed by the joint score.
///
/// Complete-domain forecasts are scored against the one-hot over the complete
/// domain, so mass on incoherent points is penalised.
pub fn score(pmf: &IndexedPmf, tbl: &DomainTables, realized: usize, observed: &[u32]) -> Result<Vec<f64>> {
    let joint_idx = match pmf.kind {
        DomainKind::Coherent => realized,
        DomainKind::Complete => tbl.complete_index_of_coherent(realized),
    };
    if pmf.probs.len() != tbl.len(pmf.kind) {
        return Err(Error::Shape("forecast length does not match its domain".into()));
    }
    let mut out = Vec::with_capacity(tbl.n() + 1);
    for (i, &y) in observed.iter().enumerate() {
        out.push(brier_unchecked(&marginalize(pmf, tbl, i)?, y as usize));
    }
    out.push(brier_unchecked(&pmf.probs, joint_idx));
    Ok(out)
}

/// Variable names followed by the joint target.
pub fn report_targets(tbl: &DomainTables) -> Vec<String> {
    let mut t = tbl.hierarchy().names().to_vec();
    t.push(JOINT.to_string());
    t
}

pub fn evaluate(prepared: &PreparedMethods, test: &[WindowForecast], tbl: &DomainTables) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    // per window: [method][target]
    let per_window: Vec<Vec<Vec<f64>>> = test
        .par_iter()
        .map(|w| {
            prepared
                .forecast(&w.margins, tbl)?
                .iter()
                .map(|pmf| score(pmf, tbl, w.realized, &w.observed))
                .collect()
        })
        .collect::<Result<_>>()?;
    let targets = report_targets(tbl);
    let samples = (0..targets.len())
        .map(|t| per_window.iter().map(|w| w.iter().map(|m| m[t]).collect()).collect())
        .collect();
    let methods = prepared.trained.methods.iter().map(|m| m.to_string()).collect();
    EvalReport::new(methods, targets, samples)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub windows: Vec<WindowForecast>,
    pub n_train: usize,
    pub trained: TrainedMethods,
    pub report: EvalReport,
}

/// Backtest, split, train and score on one data set.
pub fn run_pipeline(
    rows: &[Vec<u32>],
    tbl: &DomainTables,
    spec: &WindowSpec,
    base: &BaseSetup,
    cfg: &MethodConfig,
    seed: u64,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let windows = backtest(rows, tbl, spec, base)?;
    let (n_train, _) = cfg.split(windows.len())?;
    let (train, test) = windows.split_at(n_train);
    let history = &rows[..test[0].target + 1 - spec.horizon];
    let trained = train_methods(train, history, tbl, cfg, spec.horizon, seed)?;
    let report = evaluate(&trained.clone().prepare(tbl)?, test, tbl)?;
    Ok(PipelineOutcome {
        windows,
        n_train,
        trained,
        report,
    })
}

/// One sample per replication: that replication's mean scores.
pub fn aggregate_replications(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("no replications to aggregate".into()))?;
    if reports.iter().any(|r| r.methods != first.methods || r.targets != first.targets) {
        return Err(Error::Shape("replications disagree in methods or targets".into()));
    }
    let samples = (0..first.targets.len())
        .map(|t| {
            reports
                .iter()
                .map(|r| (0..first.methods.len()).map(|m| r.mean_scores[m][t]).collect())
                .collect()
        })
        .collect();
    EvalReport::new(first.methods.clone(), first.targets.clone(), samples)
}

pub const CROSS_STREAM: u64 = 1;
pub const TEMPORAL_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    /// Per-replication mean scores as samples.
    pub report: EvalReport,
    pub replications: Vec<EvalReport>,
    pub manifest: ReplicationManifest,
}

fn run_replications<F>(kind: &str, stream: u64, n: usize, root_seed: u64, run: F) -> Result<StudyOutcome>
where
    F: Fn(u64) -> Result<(EvalReport, serde_json::Value)> + Sync,
{
    if n == 0 {
        return Err(Error::Config("at least one replication is needed".into()));
    }
    let results: Vec<(EvalReport, serde_json::Value)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let out = run(derive_seed(root_seed, stream, i as u64));
            log::info!("{kind} replication {} of {n} done", i + 1);
            out
        })
        .collect::<Result<_>>()?;
    let manifest = ReplicationManifest {
        kind: kind.to_string(),
        root_seed,
        replications: results
            .iter()
            .enumerate()
            .map(|(i, (_, params))| ReplicationRecord {
                index: i,
                seed: derive_seed(root_seed, stream, i as u64),
                params: params.clone(),
                file: None,
            })
            .collect(),
    };
    let replications: Vec<EvalReport> = results.into_iter().map(|(r, _)| r).collect();
    Ok(StudyOutcome {
        report: aggregate_replications(&replications)?,
        replications,
        manifest,
    })
}

pub fn cross_hierarchy() -> Result<Hierarchy> {
    Hierarchy::two_level(vec![1, 1])?.with_names(vec!["y1".into(), "y2".into(), "y3".into()])
}

pub fn temporal_hierarchy() -> Result<Hierarchy> {
    let mut names: Vec<String> = (1..=7).map(|d| format!("d{d}")).collect();
    names.push("week".into());
    Hierarchy::two_level(vec![1; 7])?.with_names(names)
}

/// Binary pair and their sum, binomial AR(1) base forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossStudy {
    pub dgp: CrossDgpConfig,
    pub replications: usize,
    pub origin: usize,
    pub methods: MethodConfig,
}

impl Default for CrossStudy {
    fn default() -> Self {
        Self {
            dgp: CrossDgpConfig::default(),
            replications: 100,
            origin: 150,
            methods: MethodConfig {
                methods: vec![Method::Base, Method::Dbu, Method::Dtd, Method::Dfr, Method::Empirical],
                train_pairs: 300,
                test_pairs: Some(30),
                orderings: DEFAULT_ORDERINGS,
                laplace: 0.0,
                solver: SolverSettings::default(),
            },
        }
    }
}

impl CrossStudy {
    pub fn base_setup(&self, seed: u64) -> BaseSetup {
        BaseSetup {
            models: vec![BaseModel::Binar1; 3],
            paths: DEFAULT_PATHS,
            seed,
        }
    }

    pub fn run_replication(&self, seed: u64) -> Result<(EvalReport, serde_json::Value)> {
        let tbl = crate::hierarchy::enumerate_domains(&cross_hierarchy()?)?;
        let sample = simulate_cross(&CrossDgpConfig { seed, ..self.dgp.clone() })?;
        let out = run_pipeline(
            &sample.rows,
            &tbl,
            &WindowSpec::expanding(self.origin, 1),
            &self.base_setup(derive_seed(seed, 0, 0)),
            &self.methods,
            derive_seed(seed, 1, 0),
        )?;
        Ok((out.report, serde_json::to_value(sample.draw)?))
    }

    pub fn run(&self, root_seed: u64) -> Result<StudyOutcome> {
        run_replications("cross", CROSS_STREAM, self.replications, root_seed, |s| self.run_replication(s))
    }
}

/// Seven binary days and their weekly total. Each week is one observation of
/// the hierarchy; day `i` is forecast `i` steps ahead by a logistic model on
/// the daily series and the total one step ahead by an INGARCH model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalStudy {
    pub dgp: TemporalDgpConfig,
    pub replications: usize,
    /// Weeks before the first forecast.
    pub origin: usize,
    pub lags: usize,
    pub ingarch_order: [usize; 2],
    pub paths: usize,
    pub methods: MethodConfig,
}

impl Default for TemporalStudy {
    fn default() -> Self {
        Self {
            dgp: TemporalDgpConfig {
                weeks: 150,
                ..TemporalDgpConfig::default()
            },
            replications: 100,
            origin: 71,
            lags: 6,
            ingarch_order: [3, 3],
            paths: DEFAULT_PATHS,
            methods: MethodConfig {
                methods: vec![Method::Base, Method::Dbu, Method::Dtd, Method::Sdfr, Method::Empirical],
                train_pairs: 76,
                test_pairs: Some(3),
                orderings: DEFAULT_ORDERINGS,
                laplace: 0.0,
                solver: SolverSettings::default(),
            },
        }
    }
}

impl TemporalStudy {
    pub fn validate(&self) -> Result<()> {
        self.methods.validate()?;
        let test = self
            .methods
            .test_pairs
            .ok_or_else(|| Error::Config("temporal study needs an explicit test size".into()))?;
        let need = self.origin + self.methods.train_pairs + test;
        if self.dgp.weeks != need {
            return Err(Error::Config(format!(
                "{} simulated weeks but origin, training and test need {need}",
                self.dgp.weeks
            )));
        }
        Ok(())
    }

    pub fn base_setup(&self, seed: u64) -> BaseSetup {
        let mut models = vec![BaseModel::SubperiodLogistic { lags: self.lags }; 7];
        models.push(BaseModel::Ingarch {
            p: self.ingarch_order[0],
            q: self.ingarch_order[1],
        });
        BaseSetup {
            models,
            paths: self.paths,
            seed,
        }
    }

    pub fn run_replication(&self, seed: u64) -> Result<(EvalReport, serde_json::Value)> {
        self.validate()?;
        let tbl = crate::hierarchy::enumerate_domains(&temporal_hierarchy()?)?;
        let sample = simulate_temporal(&TemporalDgpConfig { seed, ..self.dgp.clone() })?;
        let out = run_pipeline(
            &sample.rows(),
            &tbl,
            &WindowSpec::expanding(self.origin, 1),
            &self.base_setup(derive_seed(seed, 0, 0)),
            &self.methods,
            derive_seed(seed, 1, 0),
        )?;
        Ok((out.report, serde_json::to_value(sample.draw)?))
    }

    pub fn run(&self, root_seed: u64) -> Result<StudyOutcome> {
        self.validate()?;
        run_replications("temporal", TEMPORAL_STREAM, self.replications, root_seed, |s| self.run_replication(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::enumerate_domains;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("bu".parse::<Method>().is_err());
    }

    #[test]
    fn split_sizes() {
        let mut cfg = CrossStudy::default().methods;
        assert_eq!(cfg.split(330).unwrap(), (300, 30));
        assert!(cfg.split(331).is_err());
        cfg.test_pairs = None;
        assert_eq!(cfg.split(331).unwrap(), (300, 31));
        assert!(cfg.split(300).is_err());
    }

    #[test]
    fn base_joint_scored_on_complete_domain() {
        let tbl = enumerate_domains(&cross_hierarchy().unwrap()).unwrap();
        let uniform = IndexedPmf::new(DomainKind::Complete, vec![1.0 / 12.0; 12]).unwrap();
        let k = tbl.basis_to_coherent_index(&[1, 0]).unwrap();
        let s = score(&uniform, &tbl, k, &[1, 0, 1]).unwrap();
        assert!((s[3] - (1.0 - 1.0 / 12.0)).abs() < 1e-12);
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert!((s[2] - 2.0 / 3.0).abs() < 1e-12);
        let coherent = IndexedPmf::point_mass(DomainKind::Coherent, 4, k);
        assert_eq!(score(&coherent, &tbl, k, &[1, 0, 1]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn small_cross_pipeline_runs() {
        let study = CrossStudy {
            dgp: CrossDgpConfig {
                len: 120,
                ..Default::default()
            },
            replications: 2,
            origin: 60,
            methods: MethodConfig {
                methods: Method::ALL.to_vec(),
                train_pairs: 50,
                test_pairs: Some(10),
                orderings: 3,
                laplace: 0.0,
                solver: SolverSettings::default(),
            },
        };
        let out = study.run(9).unwrap();
        assert_eq!(out.report.n_samples, 2);
        assert_eq!(out.replications[0].n_samples, 10);
        assert_eq!(out.manifest.replications.len(), 2);
        // with two bottoms the stepwise method is plain DFR
        let r = &out.replications[0];
        for t in 0..r.targets.len() {
            assert_eq!(r.mean_scores[3][t], r.mean_scores[4][t]);
        }
        let again = study.run(9).unwrap();
        assert_eq!(out.report.to_json().unwrap(), again.report.to_json().unwrap());
    }
}
