//! Run configuration shared by the pretraining and streaming commands.
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::PretrainOptions;
use crate::error::{Error, Result};
use crate::event::{HorizonConfig, Timestamp};
use crate::logio::LogSchema;
use crate::stream::{Backbone, StreamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub log: PathBuf,
    pub bundle: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            log: "log.csv".into(),
            bundle: "bundle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSection {
    /// Window end points in seconds after the click; the last is d_max.
    pub boundaries: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataPaths,
    pub schema: LogSchema,
    pub horizon: HorizonSection,
    /// Clicks at or before this time are pretraining data; later clicks are streamed.
    pub stream_start: Timestamp,
    #[serde(default)]
    pub pretrain: PretrainOptions,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default = "default_backbone")]
    pub backbone: Backbone,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

fn default_backbone() -> Backbone {
    Backbone::Trace
}

fn default_out_dir() -> PathBuf {
    "out".into()
}

fn default_log_level() -> String {
    "info".into()
}

const LOG_LEVELS: [&str; 6] = ["off", "error", "warn", "info", "debug", "trace"];

impl RunConfig {
    pub fn new(schema: LogSchema, boundaries: Vec<i64>, stream_start: Timestamp) -> Self {
        Self {
            data: DataPaths::default(),
            schema,
            horizon: HorizonSection { boundaries },
            stream_start,
            pretrain: PretrainOptions::default(),
            stream: StreamConfig::default(),
            backbone: Backbone::Trace,
            out_dir: default_out_dir(),
            log_level: default_log_level(),
        }
    }

    pub fn horizon_config(&self) -> Result<HorizonConfig> {
        HorizonConfig::new(
            self.horizon.boundaries.clone(),
            self.schema.behaviors.clone(),
            self.schema.purchase,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.horizon_config()?;
        self.stream.validate()?;
        if !(self.pretrain.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if self.schema.numeric == 0 && self.schema.categorical.is_empty() {
            return Err(Error::Config("schema has no features".into()));
        }
        if !LOG_LEVELS.contains(&self.log_level.as_str()) {
            return Err(Error::Config(format!("unknown log level {:?}", self.log_level)));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.log, &mut cfg.data.bundle, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::GeneratorSpec;

    fn base() -> RunConfig {
        let spec = GeneratorSpec::default();
        let h = spec.horizon_config().unwrap();
        RunConfig::new(LogSchema::for_generator(&spec), h.boundaries().to_vec(), 259_200)
    }

    #[test]
    fn defaults_and_round_trip() {
        let c = base();
        assert_eq!(c.stream.lambda, 0.1);
        assert_eq!(c.pretrain.beta, 2.0);
        assert_eq!(c.stream.delta, 3_600);
        assert_eq!(c.stream.batch_size, 4096);
        assert_eq!(c.stream.learning_rate, 1e-3);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let text = "stream_start = 100\n[horizon]\nboundaries = [60, 600]\n\
                    [schema]\nbehaviors = [\"cart\", \"purchase\"]\npurchase = 1\n\
                    numeric = 2\ncategorical = [4]\n";
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.backbone, Backbone::Trace);
        assert_eq!(c.horizon_config().unwrap().d_max(), 600);
        assert_eq!(c.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = base();
        c.stream.lambda = -0.1;
        assert!(c.validate().is_err());
        let mut c = base();
        c.pretrain.beta = -1.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.stream.delta = 0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.horizon.boundaries = vec![600, 60];
        assert!(c.validate().is_err());
        let mut c = base();
        c.log_level = "loud".into();
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("stream_start = \"x\"").is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, base().to_toml()).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.data.log, dir.path().join("log.csv"));
        assert_eq!(c.out_dir, dir.path().join("out"));
        assert!(RunConfig::load(&dir.path().join("missing.toml")).is_err());
    }
}
