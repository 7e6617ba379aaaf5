use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dfr_core::evaluation::{EvalReport, WindowForecast};
use dfr_core::experiment::{backtest, evaluate as score_windows, train_methods, Method, TrainedMethods};
use dfr_core::hierarchy::DomainKind;
use dfr_core::io::write_series;
use dfr_core::recon::ReconMatrix;
use dfr_core::simulation::{ReplicationManifest, ReplicationRecord};
use dfr_core::stepwise::SdfrEnsemble;
use dfr_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{Run, Study};

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    method: Method,
    horizon: usize,
    hierarchy_fingerprint: String,
    model: ModelBody,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelBody {
    /// The base forecast is the independence product; nothing to store.
    Independent,
    Matrix(ReconMatrix),
    Stepwise(SdfrEnsemble),
    Joint(Vec<f64>),
}

#[derive(Debug, Serialize)]
struct Reconciled {
    target: usize,
    method: Method,
    domain: &'static str,
    probs: Vec<f64>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::Io)?;
    }
    fs::write(path, contents).map_err(Error::Io)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    s.push('\n');
    write(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{what} {} unavailable: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)
        .map_err(Error::Json)
        .with_context(|| format!("parsing {}", path.display()))?)
}

fn forecasts_path(run: &Run, h: usize) -> PathBuf {
    run.out.join(format!("forecasts_h{h}.json"))
}

fn model_path(run: &Run, method: Method, h: usize) -> PathBuf {
    run.out.join("models").join(format!("{method}_h{h}.json"))
}

pub fn simulate(run: &Run) -> Result<()> {
    let n = run.cfg.replications;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let (table, params) = run.simulate(i)?;
        let file = format!("series/series_{i:04}.csv");
        let path = run.out.join(&file);
        fs::create_dir_all(path.parent().expect("nested path")).map_err(Error::Io)?;
        write_series(fs::File::create(&path).map_err(Error::Io)?, &table)?;
        records.push(ReplicationRecord {
            index: i,
            seed: run.replication_seed(i),
            params,
            file: Some(file),
        });
    }
    let kind = match run.study()? {
        Study::Cross(_) => "cross",
        Study::Temporal(_) => "temporal",
    };
    write_json(
        &run.out.join("manifest.json"),
        &ReplicationManifest {
            kind: kind.into(),
            root_seed: run.cfg.seed,
            replications: records,
        },
    )
}

fn fit_horizon(run: &Run, rows: &[Vec<u32>], h: usize) -> Result<Vec<WindowForecast>> {
    let windows = backtest(rows, &run.tbl, &run.window_for(h)?, &run.base()?)?;
    write_json(&forecasts_path(run, h), &windows)?;
    Ok(windows)
}

pub fn fit(run: &Run) -> Result<()> {
    let rows = run.rows()?;
    for h in run.horizons()? {
        let w = fit_horizon(run, &rows, h)?;
        log::info!("horizon {h}: {} windows", w.len());
    }
    Ok(())
}

pub fn train(run: &Run) -> Result<()> {
    let rows = run.rows()?;
    let cfg = run.methods()?;
    for h in run.horizons()? {
        let path = forecasts_path(run, h);
        let windows: Vec<WindowForecast> = if path.exists() {
            read_json(&path, "base forecasts")?
        } else {
            fit_horizon(run, &rows, h)?
        };
        let (n_train, _) = cfg.split(windows.len())?;
        let history = &rows[..windows[n_train].target + 1 - h];
        let trained = train_methods(&windows[..n_train], history, &run.tbl, &cfg, h, run.method_seed())?;
        if let Some(r) = &trained.dfr_report {
            log::info!(
                "dfr horizon {h}: objective {:.6}, {} iterations, converged {}",
                r.objective,
                r.iterations,
                r.converged
            );
        }
        for &m in &trained.methods {
            let model = match m {
                Method::Base => ModelBody::Independent,
                Method::Dbu => ModelBody::Matrix(trained.dbu.clone().expect("trained")),
                Method::Dtd => ModelBody::Matrix(trained.dtd.clone().expect("trained")),
                Method::Dfr => ModelBody::Matrix(trained.dfr.clone().expect("trained")),
                Method::Sdfr => ModelBody::Stepwise(trained.sdfr.clone().expect("trained")),
                Method::Empirical => ModelBody::Joint(trained.empirical.clone().expect("trained")),
            };
            let file = ModelFile {
                method: m,
                horizon: h,
                hierarchy_fingerprint: trained.hierarchy_fingerprint.clone(),
                model,
            };
            write_json(&model_path(run, m, h), &file)?;
        }
    }
    Ok(())
}

fn load_models(run: &Run, methods: &[Method], h: usize) -> Result<TrainedMethods> {
    let mut t = TrainedMethods {
        horizon: h,
        hierarchy_fingerprint: run.hierarchy.fingerprint(),
        methods: methods.to_vec(),
        dbu: None,
        dtd: None,
        dfr: None,
        dfr_report: None,
        sdfr: None,
        empirical: None,
    };
    for &m in methods {
        let file: ModelFile = read_json(&model_path(run, m, h), "model")?;
        if file.method != m || file.horizon != h {
            return Err(Error::Data(format!("model file for {m} at horizon {h} holds something else")).into());
        }
        if file.hierarchy_fingerprint != t.hierarchy_fingerprint {
            return Err(Error::Validation(format!("{m} model was trained on a different hierarchy")).into());
        }
        match (m, file.model) {
            (Method::Base, ModelBody::Independent) => {}
            (Method::Dbu, ModelBody::Matrix(a)) => t.dbu = Some(a),
            (Method::Dtd, ModelBody::Matrix(a)) => t.dtd = Some(a),
            (Method::Dfr, ModelBody::Matrix(a)) => t.dfr = Some(a),
            (Method::Sdfr, ModelBody::Stepwise(e)) => t.sdfr = Some(e),
            (Method::Empirical, ModelBody::Joint(p)) => t.empirical = Some(p),
            (m, _) => return Err(Error::Data(format!("model file for {m} has the wrong kind of model")).into()),
        }
    }
    Ok(t)
}

/// Test windows and prepared models for horizon `h`.
fn test_setup(run: &Run, h: usize) -> Result<(Vec<WindowForecast>, dfr_core::experiment::PreparedMethods)> {
    let cfg = run.methods()?;
    let windows: Vec<WindowForecast> = read_json(&forecasts_path(run, h), "base forecasts")?;
    let (n_train, _) = cfg.split(windows.len())?;
    let prepared = load_models(run, &cfg.methods, h)?.prepare(&run.tbl)?;
    Ok((windows[n_train..].to_vec(), prepared))
}

pub fn reconcile(run: &Run) -> Result<()> {
    for h in run.horizons()? {
        let (test, prepared) = test_setup(run, h)?;
        let mut out = Vec::new();
        for w in &test {
            for (m, pmf) in prepared.trained.methods.iter().zip(prepared.forecast(&w.margins, &run.tbl)?) {
                out.push(Reconciled {
                    target: w.target,
                    method: *m,
                    domain: match pmf.kind {
                        DomainKind::Complete => "complete",
                        DomainKind::Coherent => "coherent",
                    },
                    probs: pmf.probs,
                });
            }
        }
        write_json(&run.out.join(format!("reconciled_h{h}.json")), &out)?;
    }
    Ok(())
}

fn write_report(run: &Run, report: &EvalReport, stem: &str) -> Result<()> {
    if report.methods.len() < 2 {
        log::warn!("a single method was evaluated, so no rank comparison is reported");
    }
    write(&run.out.join(format!("{stem}.json")), &(report.to_json()? + "\n"))?;
    write(&run.out.join(format!("{stem}.csv")), &report.to_csv())?;
    write(&run.out.join(format!("ranks{}.csv", stem.trim_start_matches("report"))), &report.ranks_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn evaluate(run: &Run) -> Result<()> {
    for h in run.horizons()? {
        let (test, prepared) = test_setup(run, h)?;
        let report = score_windows(&prepared, &test, &run.tbl)?;
        write_report(run, &report, &format!("report_h{h}"))?;
    }
    Ok(())
}

pub fn report(run: &Run) -> Result<()> {
    if !run.is_simulated() {
        fit(run)?;
        train(run)?;
        return evaluate(run);
    }
    if run.cfg.base.is_some() {
        log::warn!("simulated studies use their own base models; the base setting is ignored");
    }
    let outcome = match run.study()? {
        Study::Cross(s) => s.run(run.cfg.seed)?,
        Study::Temporal(s) => s.run(run.cfg.seed)?,
    };
    write_json(&run.out.join("manifest.json"), &outcome.manifest)?;
    write_report(run, &outcome.report, "report")
}
