//! Pretrained model bundle: a directory holding a manifest, three
//! checkpoints and the window weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Architecture, Completer, FeatureSchema, StaticIntent, TrajectoryLikelihood};
use crate::event::{ClickEvent, HorizonConfig};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::pretrain::{
    compute_window_weights, conditional_entropy_per_window, lifecycle_samples,
    pretrain_completer, pretrain_static_intent, pretrain_trajectory_likelihood, TrainConfig,
    WindowWeights,
};

pub const MANIFEST: &str = "manifest.toml";
const STATIC_FILE: &str = "static.ckpt";
const LIKELIHOOD_FILE: &str = "likelihood.ckpt";
const COMPLETER_FILE: &str = "completer.ckpt";
const WEIGHTS_FILE: &str = "window_weights.txt";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub horizon: HorizonConfig,
    pub schema: FeatureSchema,
    pub architecture: Architecture,
    pub static_intent: StaticIntent,
    pub likelihood: TrajectoryLikelihood,
    pub completer: Option<Completer>,
    pub weights: WindowWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Files {
    static_intent: String,
    likelihood: String,
    completer: Option<String>,
    window_weights: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    horizon: HorizonConfig,
    schema: FeatureSchema,
    architecture: Architecture,
    files: Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainOptions {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub beta: f64,
    pub skip_completer: bool,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            beta: 2.0,
            skip_completer: false,
        }
    }
}

/// Runs every pretraining step on a fully observed log.
pub fn pretrain_bundle(
    log: &[ClickEvent],
    horizon: &HorizonConfig,
    schema: &FeatureSchema,
    opts: &PretrainOptions,
) -> Result<ModelBundle> {
    if !(opts.beta >= 0.0) {
        return Err(Error::Config("beta must be non-negative".into()));
    }
    for e in log {
        e.validate(horizon)?;
        schema.check(&e.features)?;
    }
    let data = lifecycle_samples(log, horizon);
    let entropies = conditional_entropy_per_window(&data)?;
    let weights = compute_window_weights(&entropies, opts.beta);
    log::info!("window weights eta={:?}", weights.eta);
    let (h, k) = (horizon.horizons(), horizon.behaviors());
    let arch = &opts.architecture;
    let static_intent = pretrain_static_intent(&data, schema, arch, &opts.train)?;
    let likelihood = pretrain_trajectory_likelihood(&data, schema, arch, h, k, &opts.train)?;
    let completer = if opts.skip_completer {
        None
    } else {
        Some(pretrain_completer(&data, schema, arch, h, k, &opts.train)?)
    };
    Ok(ModelBundle {
        horizon: horizon.clone(),
        schema: schema.clone(),
        architecture: arch.clone(),
        static_intent,
        likelihood,
        completer,
        weights,
    })
}

impl ModelBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join(STATIC_FILE), self.static_intent.net(), None)?;
        save_checkpoint(&dir.join(LIKELIHOOD_FILE), self.likelihood.net(), None)?;
        if let Some(c) = &self.completer {
            save_checkpoint(&dir.join(COMPLETER_FILE), c.net(), None)?;
        }
        let wpath = dir.join(WEIGHTS_FILE);
        fs::write(&wpath, self.weights.to_text()).map_err(|e| Error::io(&wpath, e))?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            horizon: self.horizon.clone(),
            schema: self.schema.clone(),
            architecture: self.architecture.clone(),
            files: Files {
                static_intent: STATIC_FILE.into(),
                likelihood: LIKELIHOOD_FILE.into(),
                completer: self.completer.as_ref().map(|_| COMPLETER_FILE.into()),
                window_weights: WEIGHTS_FILE.into(),
            },
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mpath = dir.join(MANIFEST);
        fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported bundle version {}",
                m.format_version
            )));
        }
        let horizon = HorizonConfig::new(
            m.horizon.boundaries().to_vec(),
            m.horizon.behavior_names().to_vec(),
            m.horizon.purchase_index(),
        )?;
        let (h, k) = (horizon.horizons(), horizon.behaviors());
        let (net, _) = load_checkpoint(&dir.join(&m.files.static_intent))?;
        let static_intent = StaticIntent::from_net(net, m.schema.clone())?;
        let (net, _) = load_checkpoint(&dir.join(&m.files.likelihood))?;
        let likelihood = TrajectoryLikelihood::from_net(net, m.schema.clone(), h, k)?;
        let completer = match &m.files.completer {
            Some(f) => {
                let (net, _) = load_checkpoint(&dir.join(f))?;
                Some(Completer::from_net(net, m.schema.clone(), h, k)?)
            }
            None => None,
        };
        let wpath = dir.join(&m.files.window_weights);
        let wtext = fs::read_to_string(&wpath).map_err(|e| Error::io(&wpath, e))?;
        let weights = WindowWeights::from_text(&wtext)?;
        if weights.eta.len() != h {
            return Err(Error::Checkpoint("window weights do not match horizons".into()));
        }
        Ok(Self {
            horizon,
            schema: m.schema,
            architecture: m.architecture,
            static_intent,
            likelihood,
            completer,
            weights,
        })
    }

    /// Fails unless the bundle was built for `horizon` and `schema`.
    pub fn check_compatible(&self, horizon: &HorizonConfig, schema: &FeatureSchema) -> Result<()> {
        if &self.horizon != horizon {
            return Err(Error::Config("bundle horizon config differs from run config".into()));
        }
        if &self.schema != schema {
            return Err(Error::Config("bundle feature schema differs from log schema".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorSpec};

    #[test]
    fn bundle_round_trip() {
        let spec = GeneratorSpec {
            n_samples: 300,
            ..GeneratorSpec::default()
        };
        let g = generate(&spec).unwrap();
        let horizon = spec.horizon_config().unwrap();
        let opts = PretrainOptions {
            architecture: Architecture {
                hidden: vec![8],
                emb_dim: 2,
            },
            train: TrainConfig {
                epochs: 1,
                batch_size: 64,
                ..TrainConfig::default()
            },
            ..PretrainOptions::default()
        };
        let b = pretrain_bundle(&g.log, &horizon, &spec.feature_schema(), &opts).unwrap();
        assert!(b.likelihood.is_frozen());
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back.static_intent.net().checksum(), b.static_intent.net().checksum());
        assert_eq!(back.likelihood.net().checksum(), b.likelihood.net().checksum());
        assert_eq!(
            back.completer.as_ref().unwrap().net().checksum(),
            b.completer.unwrap().net().checksum()
        );
        assert_eq!(back.weights, b.weights);
        back.check_compatible(&horizon, &spec.feature_schema()).unwrap();
        assert!(back
            .check_compatible(&HorizonConfig::criteo(), &spec.feature_schema())
            .is_err());
    }

    #[test]
    fn skip_completer_and_missing_dir() {
        let spec = GeneratorSpec {
            n_samples: 100,
            ..GeneratorSpec::default()
        };
        let g = generate(&spec).unwrap();
        let opts = PretrainOptions {
            architecture: Architecture {
                hidden: vec![4],
                emb_dim: 2,
            },
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            skip_completer: true,
            ..PretrainOptions::default()
        };
        let b = pretrain_bundle(&g.log, &spec.horizon_config().unwrap(), &spec.feature_schema(), &opts)
            .unwrap();
        assert!(b.completer.is_none());
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        assert!(!dir.path().join(COMPLETER_FILE).exists());
        assert!(ModelBundle::load(dir.path()).unwrap().completer.is_none());
        assert!(ModelBundle::load(&dir.path().join("nope")).is_err());
    }
}
