use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dfr_core::evaluation::WindowSpec;
use dfr_core::experiment::{
    cross_hierarchy, temporal_hierarchy, BaseSetup, CrossStudy, MethodConfig, TemporalStudy, CROSS_STREAM,
    TEMPORAL_STREAM,
};
use dfr_core::hierarchy::{enumerate_domains, DomainTables, Hierarchy, HierarchyConfig};
use dfr_core::io::{read_series, SeriesTable};
use dfr_core::simulation::{derive_seed, simulate_cross, simulate_temporal, CrossDgpConfig, TemporalDgpConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Series table with one column per hierarchy variable.
    Csv(PathBuf),
    Cross(CrossDgpConfig),
    Temporal(TemporalDgpConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Hierarchy JSON; implied for simulated sources.
    #[serde(default)]
    pub hierarchy: Option<PathBuf>,
    pub data: DataSource,
    #[serde(default)]
    pub base: Option<BaseSetup>,
    #[serde(default)]
    pub window: Option<WindowSpec>,
    /// Overrides the window horizon; one model set per entry.
    #[serde(default)]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub methods: Option<MethodConfig>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

/// A config with paths resolved and the hierarchy enumerated.
pub struct Run {
    pub cfg: RunConfig,
    pub hierarchy: Hierarchy,
    pub tbl: DomainTables,
    pub out: PathBuf,
}

impl Run {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let DataSource::Csv(p) = &cfg.data {
            cfg.data = DataSource::Csv(resolve(p));
        }
        cfg.hierarchy = cfg.hierarchy.as_deref().map(resolve);
        let out = match out {
            Some(o) => o,
            None => cfg.out.as_deref().map(resolve).unwrap_or_else(|| dir.join("out")),
        };
        let hierarchy = match (&cfg.data, &cfg.hierarchy) {
            (DataSource::Cross(_), _) => cross_hierarchy()?,
            (DataSource::Temporal(_), _) => temporal_hierarchy()?,
            (DataSource::Csv(_), Some(h)) => {
                let text = fs::read_to_string(h).with_context(|| format!("reading hierarchy {}", h.display()))?;
                let hc: HierarchyConfig =
                    serde_json::from_str(&text).with_context(|| format!("parsing hierarchy {}", h.display()))?;
                Hierarchy::from_config(&hc)?
            }
            (DataSource::Csv(_), None) => bail!(dfr_core::Error::Config("csv data needs a hierarchy file".into())),
        };
        let tbl = enumerate_domains(&hierarchy)?;
        if let Some(m) = &cfg.methods {
            m.validate()?;
        }
        Ok(Self {
            cfg,
            hierarchy,
            tbl,
            out,
        })
    }

    pub fn is_simulated(&self) -> bool {
        !matches!(self.cfg.data, DataSource::Csv(_))
    }

    pub fn stream(&self) -> u64 {
        match self.cfg.data {
            DataSource::Temporal(_) => TEMPORAL_STREAM,
            _ => CROSS_STREAM,
        }
    }

    pub fn replication_seed(&self, i: usize) -> u64 {
        derive_seed(self.cfg.seed, self.stream(), i as u64)
    }

    /// Simulated replication `i`, with its drawn parameters.
    pub fn simulate(&self, i: usize) -> Result<(SeriesTable, serde_json::Value)> {
        let seed = self.replication_seed(i);
        let names = self.hierarchy.names().to_vec();
        match &self.cfg.data {
            DataSource::Cross(c) => {
                let s = simulate_cross(&CrossDgpConfig { seed, ..c.clone() })?;
                Ok((SeriesTable { names, rows: s.rows }, serde_json::to_value(s.draw)?))
            }
            DataSource::Temporal(c) => {
                let s = simulate_temporal(&TemporalDgpConfig { seed, ..c.clone() })?;
                Ok((SeriesTable { names, rows: s.rows() }, serde_json::to_value(s.draw)?))
            }
            DataSource::Csv(_) => bail!(dfr_core::Error::Config("simulate needs a simulated data source".into())),
        }
    }

    /// The single data set worked on by fit, train and evaluate. For simulated
    /// sources this is replication 0.
    pub fn rows(&self) -> Result<Vec<Vec<u32>>> {
        match &self.cfg.data {
            DataSource::Csv(p) => {
                let f = fs::File::open(p).map_err(|e| dfr_core::Error::Data(format!("{}: {e}", p.display())))?;
                let table = read_series(f)?.select(self.hierarchy.names())?;
                if table.rows.is_empty() {
                    bail!(dfr_core::Error::Data("series table has no rows".into()));
                }
                Ok(table.rows)
            }
            _ => Ok(self.simulate(0)?.0.rows),
        }
    }

    fn cross_study(&self) -> CrossStudy {
        let mut s = CrossStudy::default();
        if let DataSource::Cross(c) = &self.cfg.data {
            s.dgp = c.clone();
        }
        if let Some(w) = &self.cfg.window {
            s.origin = w.origin;
        }
        if let Some(m) = &self.cfg.methods {
            s.methods = m.clone();
        }
        s.replications = self.cfg.replications;
        s
    }

    fn temporal_study(&self) -> TemporalStudy {
        let mut s = TemporalStudy::default();
        if let DataSource::Temporal(c) = &self.cfg.data {
            s.dgp = c.clone();
        }
        if let Some(w) = &self.cfg.window {
            s.origin = w.origin;
        }
        if let Some(m) = &self.cfg.methods {
            s.methods = m.clone();
        }
        s.replications = self.cfg.replications;
        s
    }

    pub fn study(&self) -> Result<Study> {
        Ok(match self.cfg.data {
            DataSource::Cross(_) => Study::Cross(self.cross_study()),
            DataSource::Temporal(_) => Study::Temporal(self.temporal_study()),
            DataSource::Csv(_) => bail!(dfr_core::Error::Config("csv data needs explicit base, window and methods settings".into())),
        })
    }

    pub fn base(&self) -> Result<BaseSetup> {
        if let Some(b) = &self.cfg.base {
            return Ok(BaseSetup {
                seed: derive_seed(self.cfg.seed, 0, 0),
                ..b.clone()
            });
        }
        let seed = derive_seed(self.replication_seed(0), 0, 0);
        Ok(match self.study()? {
            Study::Cross(s) => s.base_setup(seed),
            Study::Temporal(s) => s.base_setup(seed),
        })
    }

    pub fn window(&self) -> Result<WindowSpec> {
        if let Some(w) = self.cfg.window {
            return Ok(w);
        }
        Ok(match self.study()? {
            Study::Cross(s) => WindowSpec::expanding(s.origin, 1),
            Study::Temporal(s) => WindowSpec::expanding(s.origin, 1),
        })
    }

    pub fn horizons(&self) -> Result<Vec<usize>> {
        let w = self.window()?;
        Ok(if self.cfg.horizons.is_empty() { vec![w.horizon] } else { self.cfg.horizons.clone() })
    }

    pub fn window_for(&self, h: usize) -> Result<WindowSpec> {
        Ok(WindowSpec { horizon: h, ..self.window()? })
    }

    pub fn methods(&self) -> Result<MethodConfig> {
        if let Some(m) = &self.cfg.methods {
            return Ok(m.clone());
        }
        Ok(match self.study()? {
            Study::Cross(s) => s.methods,
            Study::Temporal(s) => s.methods,
        })
    }

    pub fn method_seed(&self) -> u64 {
        derive_seed(self.replication_seed(0), 1, 0)
    }
}

pub enum Study {
    Cross(CrossStudy),
    Temporal(TemporalStudy),
}
