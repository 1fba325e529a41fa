//! TOML session configuration. Relative paths resolve against the config
//! file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::checker::{CheckConfig, SizeProfile, DEFAULT_TRIALS};
use crate::minisql::parse_sql;
use crate::oracle::OracleHandle;
use crate::relcore::load::{load_catalog, load_instance};
use crate::relcore::{DatabaseState, SchemaCatalog};
use crate::tpch;
use crate::xfe::client::{ChatClient, HttpClient, HttpConfig, MockClient};
use crate::xfe::{RefineConfig, XfeConfig};
use crate::xre::XreConfig;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaSection {
    /// DDL file; the bundled TPC-H schema when absent.
    pub ddl: Option<PathBuf>,
    /// JSON domain sidecar.
    pub domains: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Bundled instance name (`q0`, `union`).
    pub instance: Option<String>,
    /// Directory of `<table>.csv` files.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub sql: Option<String>,
    pub sql_file: Option<PathBuf>,
    /// External executable speaking the line protocol.
    pub command: Option<String>,
    pub timeout_secs: u64,
    /// Where request directories for an external executable go; the
    /// session directory when absent.
    pub workdir: Option<PathBuf>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { sql: None, sql_file: None, command: None, timeout_secs: 30, workdir: None }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    /// Business description of the hidden query.
    pub description: Option<String>,
    pub description_file: Option<PathBuf>,
    pub mock_transcript: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub aux_cap: usize,
    pub max_literals: usize,
    /// Failed result trials before combinatorial fallback.
    pub threshold: usize,
    pub max_rounds: usize,
    pub candidate_cap: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let (x, f) = (XreConfig::default(), XfeConfig::default());
        LimitsSection { aux_cap: x.aux_cap, max_literals: x.max_literals, threshold: f.refine.threshold, max_rounds: f.refine.max_rounds, candidate_cap: f.cap }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerSection {
    pub trials: usize,
    pub seed: u64,
    /// `small` or `mini-tpch`.
    pub profile: String,
}

impl Default for CheckerSection {
    fn default() -> Self {
        CheckerSection { trials: DEFAULT_TRIALS, seed: 0, profile: "small".into() }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema: SchemaSection,
    pub data: DataSection,
    pub oracle: OracleSection,
    pub llm: LlmSection,
    pub limits: LimitsSection,
    pub checker: CheckerSection,
    #[serde(skip)]
    pub base: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn catalog(&self) -> Result<SchemaCatalog, ConfigError> {
        match &self.schema.ddl {
            None => Ok(tpch::catalog()),
            Some(ddl) => {
                let dom = self.schema.domains.as_ref().map(|d| self.path(d));
                load_catalog(&self.path(ddl), dom.as_deref()).map_err(|e| err(e.to_string()))
            }
        }
    }

    pub fn instance(&self) -> Result<DatabaseState, ConfigError> {
        match (&self.data.instance, &self.data.dir) {
            (Some(name), None) => tpch::instance(name).ok_or_else(|| err(format!("no bundled instance named {name}"))),
            (None, Some(dir)) => load_instance(self.catalog()?, &self.path(dir)).map_err(|e| err(e.to_string())),
            (Some(_), Some(_)) => Err(err("[data] takes either `instance` or `dir`, not both")),
            (None, None) => Err(err("[data] names no instance")),
        }
    }

    /// The hidden query's text, for embedded oracles.
    pub fn hidden_sql(&self) -> Result<Option<String>, ConfigError> {
        match (&self.oracle.sql, &self.oracle.sql_file) {
            (Some(s), None) => Ok(Some(s.clone())),
            (None, Some(p)) => {
                let p = self.path(p);
                std::fs::read_to_string(&p).map(Some).map_err(|e| err(format!("{}: {e}", p.display())))
            }
            (None, None) => Ok(None),
            _ => Err(err("[oracle] takes either `sql` or `sql_file`, not both")),
        }
    }

    /// An external command wins over an embedded query.
    pub fn oracle(&self, session: &Path) -> Result<OracleHandle, ConfigError> {
        if let Some(cmd) = &self.oracle.command {
            let workdir = self.oracle.workdir.as_ref().map(|w| self.path(w)).unwrap_or_else(|| session.join("oracle"));
            return Ok(OracleHandle::external(cmd, workdir, Duration::from_secs(self.oracle.timeout_secs)));
        }
        let sql = self.hidden_sql()?.ok_or_else(|| err("[oracle] needs `sql`, `sql_file` or `command`"))?;
        let q = parse_sql(&sql).map_err(|e| err(format!("hidden query: {e}")))?;
        Ok(OracleHandle::embedded_ir(q))
    }

    pub fn description(&self) -> Result<String, ConfigError> {
        match (&self.llm.description, &self.llm.description_file) {
            (Some(d), None) => Ok(d.clone()),
            (None, Some(p)) => {
                let p = self.path(p);
                std::fs::read_to_string(&p).map(|s| s.trim().to_string()).map_err(|e| err(format!("{}: {e}", p.display())))
            }
            (None, None) => Err(err("[llm] needs a `description` of the hidden query")),
            _ => Err(err("[llm] takes either `description` or `description_file`, not both")),
        }
    }

    /// The mock transcript when one is configured, else the HTTP client.
    pub fn client(&self) -> Result<Box<dyn ChatClient>, ConfigError> {
        if let Some(t) = &self.llm.mock_transcript {
            let m = MockClient::load(&self.path(t)).map_err(|e| err(e.to_string()))?;
            return Ok(Box::new(m));
        }
        let d = HttpConfig::default();
        let l = &self.llm;
        Ok(Box::new(HttpClient::new(HttpConfig {
            endpoint: l.endpoint.clone().unwrap_or(d.endpoint),
            model: l.model.clone().unwrap_or(d.model),
            api_key_env: l.api_key_env.clone().unwrap_or(d.api_key_env),
            timeout_secs: l.timeout_secs.unwrap_or(d.timeout_secs),
            retries: l.retries.unwrap_or(d.retries),
        })))
    }

    pub fn xre(&self) -> XreConfig {
        XreConfig { aux_cap: self.limits.aux_cap, max_literals: self.limits.max_literals }
    }

    pub fn xfe(&self) -> XfeConfig {
        XfeConfig { refine: RefineConfig { threshold: self.limits.threshold, max_rounds: self.limits.max_rounds }, cap: self.limits.candidate_cap }
    }

    pub fn profile(&self) -> Result<SizeProfile, ConfigError> {
        match self.checker.profile.as_str() {
            "small" => Ok(SizeProfile::small()),
            "mini-tpch" => Ok(SizeProfile::mini_tpch()),
            other => Err(err(format!("unknown checker profile {other}; expected small or mini-tpch"))),
        }
    }

    pub fn check(&self) -> Result<CheckConfig, ConfigError> {
        Ok(CheckConfig { trials: self.checker.trials, seed: self.checker.seed, profile: self.profile()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "[data]\ninstance = \"q0\"\n[oracle]\nsql_file = \"q.sql\"\n[limits]\nthreshold = 2\n[checker]\ntrials = 5\nprofile = \"mini-tpch\"\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("q.sql"), tpch::Q0_SQL).unwrap();
        let c = Config::load(&p).unwrap();
        assert_eq!(c.hidden_sql().unwrap().as_deref(), Some(tpch::Q0_SQL));
        assert_eq!(c.xfe().refine.threshold, 2);
        assert_eq!(c.xfe().cap, 10_000);
        assert_eq!(c.check().unwrap().trials, 5);
        assert_eq!(c.instance().unwrap().total_rows(), 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[limits]\nthreshhold = 2\n").unwrap();
        assert!(Config::load(&p).is_err());
    }
}
