//! Run configuration: input locations, experiment date and every threshold.
//!
//! Loaded from TOML. Environment variables override paths:
//! `TRIPREC_DATA_DIR` (directory holding the dataset tables),
//! `TRIPREC_GTFS` (feed zip or directory), `TRIPREC_OUT` and `TRIPREC_DATE`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::client_filter::FilterConfig;
use crate::evaluation::{default_gate, GateCheck, Method};
use crate::live_matcher::LiveMatchConfig;
use crate::segmentation::DEFAULT_MAX_GAP_S;
use crate::static_matcher::MatchConstants;

pub const ENV_DATA_DIR: &str = "TRIPREC_DATA_DIR";
pub const ENV_GTFS: &str = "TRIPREC_GTFS";
pub const ENV_OUT: &str = "TRIPREC_OUT";
pub const ENV_DATE: &str = "TRIPREC_DATE";

/// Default file names looked up under the data directory and its `csv/`
/// subdirectory.
pub const DEVICE_DATA: &str = "device_data.csv";
pub const FILTERED_DATA: &str = "device_data_filtered.csv";
pub const TRANSIT_LIVE: &str = "transit_live.csv";
pub const MANUAL_LOG: &str = "manual_log.csv";
pub const DEVICE_MODELS: &str = "device_models.csv";
pub const TRAIN_STOPS: &str = "commuterTrains.json";
pub const GTFS_ARCHIVE: &str = "hsl_20160825T125101Z.zip";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0} is not set and no data directory was given")]
    MissingPath(&'static str),
    #[error("{what}: {path} does not exist")]
    NotFound { what: &'static str, path: PathBuf },
    #[error("invalid {section} settings: {message}")]
    Invalid { section: &'static str, message: String },
    #[error("{var}: cannot parse '{value}'")]
    Env { var: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub device_data: Option<PathBuf>,
    pub filtered_data: Option<PathBuf>,
    pub transit_live: Option<PathBuf>,
    pub manual_log: Option<PathBuf>,
    pub device_models: Option<PathBuf>,
    pub train_stops: Option<PathBuf>,
    pub gtfs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub max_gap_s: u32,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            max_gap_s: DEFAULT_MAX_GAP_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlannerConfig {
    #[default]
    Embedded,
    External {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub date: NaiveDate,
    pub out_dir: PathBuf,
    pub methods: Vec<Method>,
    pub paths: PathsConfig,
    pub filter: FilterConfig,
    pub segmentation: SegmentationConfig,
    pub live: LiveMatchConfig,
    #[serde(rename = "static")]
    pub constants: MatchConstants,
    pub planner: PlannerConfig,
    pub gate: Vec<GateCheck>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            date: NaiveDate::from_ymd_opt(2016, 8, 26).expect("valid date"),
            out_dir: PathBuf::from("out"),
            methods: Method::ALL.to_vec(),
            paths: PathsConfig::default(),
            filter: FilterConfig::default(),
            segmentation: SegmentationConfig::default(),
            live: LiveMatchConfig::default(),
            constants: MatchConstants::default(),
            planner: PlannerConfig::default(),
            gate: default_gate(),
        }
    }
}

/// Fully resolved input files.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub device_data: PathBuf,
    pub filtered_data: PathBuf,
    pub transit_live: PathBuf,
    pub manual_log: PathBuf,
    pub device_models: Option<PathBuf>,
    pub train_stops: Option<PathBuf>,
    /// Only static matching needs the feed.
    pub gtfs: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(path, &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section| move |message| ConfigError::Invalid { section, message };
        self.filter.validate().map_err(invalid("filter"))?;
        self.live.validate().map_err(invalid("live"))?;
        self.constants.validate().map_err(invalid("static"))?;
        if self.segmentation.max_gap_s == 0 {
            return Err(invalid("segmentation")("max_gap_s must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods")("at least one method is required".into()));
        }
        for problem in self.constants.inconsistencies() {
            log::warn!("static constants: {problem}");
        }
        Ok(())
    }

    /// Applies the documented environment overrides.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(dir) = env(ENV_DATA_DIR) {
            self.paths.data_dir = Some(dir.into());
        }
        if let Some(gtfs) = env(ENV_GTFS) {
            self.paths.gtfs = Some(gtfs.into());
        }
        if let Some(out) = env(ENV_OUT) {
            self.out_dir = out.into();
        }
        if let Some(date) = env(ENV_DATE) {
            self.date = date.parse().map_err(|_| ConfigError::Env { var: ENV_DATE, value: date })?;
        }
        Ok(())
    }

    /// Resolves input files, checking that required ones exist.
    pub fn resolve_paths(&self) -> Result<DataPaths, ConfigError> {
        let p = &self.paths;
        let find = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
            if let Some(path) = explicit {
                return Some(path.clone());
            }
            let dir = p.data_dir.as_ref()?;
            let candidates = [dir.join(name), dir.join("csv").join(name)];
            candidates.iter().find(|c| c.exists()).cloned().or_else(|| Some(candidates[0].clone()))
        };
        let required = |explicit: &Option<PathBuf>, name: &str, what: &'static str| {
            let path = find(explicit, name).ok_or(ConfigError::MissingPath(what))?;
            if path.exists() {
                Ok(path)
            } else {
                Err(ConfigError::NotFound { what, path })
            }
        };
        let optional = |explicit: &Option<PathBuf>, names: &[&str]| {
            names.iter().filter_map(|n| find(explicit, n)).find(|path| path.exists())
        };
        let gtfs = match &p.gtfs {
            Some(path) if !path.exists() => return Err(ConfigError::NotFound { what: "gtfs", path: path.clone() }),
            Some(path) => Some(path.clone()),
            None => optional(&None, &[GTFS_ARCHIVE, "gtfs"]),
        };
        Ok(DataPaths {
            device_data: required(&p.device_data, DEVICE_DATA, "device_data")?,
            filtered_data: required(&p.filtered_data, FILTERED_DATA, "filtered_data")?,
            transit_live: required(&p.transit_live, TRANSIT_LIVE, "transit_live")?,
            manual_log: required(&p.manual_log, MANUAL_LOG, "manual_log")?,
            device_models: optional(&p.device_models, &[DEVICE_MODELS]),
            train_stops: optional(
                &p.train_stops,
                &[TRAIN_STOPS, "trains-json/commuterTrains.json", "trains.json"],
            ),
            gtfs,
        })
    }
}
