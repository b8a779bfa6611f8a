//! End-to-end synthetic runs: generate, split chronologically, pretrain,
//! then stream each method from the same warm start.

use serde::{Deserialize, Serialize};

use crate::bundle::{pretrain_bundle, ModelBundle, PretrainOptions};
use crate::datagen::{bayes_auc, generate, GeneratorSpec, TruthRow};
use crate::error::Result;
use crate::estimators::Architecture;
use crate::event::{ClickEvent, HorizonConfig, Timestamp};
use crate::pretrain::TrainConfig;
use crate::stream::{
    run_simulation, Ablation, Auxiliary, Backbone, FeedbackSource, Learner, LogSource,
    SimulationResult, StreamConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trace,
    Vanilla,
    Oracle,
    VanillaPlugin,
    NoGate,
    NoRetro,
    NoTraj,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Trace,
        Method::Vanilla,
        Method::Oracle,
        Method::VanillaPlugin,
        Method::NoGate,
        Method::NoRetro,
        Method::NoTraj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trace => "trace",
            Method::Vanilla => "vanilla",
            Method::Oracle => "oracle",
            Method::VanillaPlugin => "vanilla+con",
            Method::NoGate => "trace/no_gate",
            Method::NoRetro => "trace/no_retro",
            Method::NoTraj => "trace/no_traj",
        }
    }

    pub fn backbone(self) -> Backbone {
        match self {
            Method::Vanilla | Method::VanillaPlugin => Backbone::Vanilla,
            Method::Oracle => Backbone::Oracle,
            _ => Backbone::Trace,
        }
    }

    /// Applies the method's switches to a base stream config.
    pub fn configure(self, base: &StreamConfig) -> StreamConfig {
        let mut cfg = base.clone();
        cfg.plugin = self == Method::VanillaPlugin;
        cfg.ablation = Ablation {
            no_traj: self == Method::NoTraj,
            no_retro: self == Method::NoRetro,
            no_gate: self == Method::NoGate,
        };
        cfg
    }
}

/// Generator, pretraining and streaming settings for one synthetic study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preset {
    pub generator: GeneratorSpec,
    /// Samples clicked within this many seconds of the start form the
    /// pretraining split.
    pub pretrain_secs: i64,
    pub pretrain: PretrainOptions,
    pub stream: StreamConfig,
}

impl Default for Preset {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl Preset {
    /// Default synthetic stream with networks sized for a single CPU core.
    pub fn desk(seed: u64) -> Self {
        let arch = Architecture {
            hidden: vec![64, 32],
            emb_dim: 8,
        };
        Self {
            generator: GeneratorSpec {
                seed,
                ..GeneratorSpec::default()
            },
            pretrain_secs: 3 * 86_400,
            pretrain: PretrainOptions {
                architecture: arch,
                train: TrainConfig {
                    epochs: 5,
                    batch_size: 512,
                    seed,
                    ..TrainConfig::default()
                },
                ..PretrainOptions::default()
            },
            stream: StreamConfig {
                batch_size: 512,
                seed,
                ..StreamConfig::default()
            },
        }
    }
}

/// Generated data and the pretrained bundle shared by every method.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub preset: Preset,
    pub log: Vec<ClickEvent>,
    pub truth: Vec<TruthRow>,
    pub horizon: HorizonConfig,
    pub split: Timestamp,
    pub bundle: ModelBundle,
}

impl Experiment {
    pub fn prepare(preset: &Preset) -> Result<Self> {
        let g = generate(&preset.generator)?;
        let horizon = preset.generator.horizon_config()?;
        let split = preset.generator.start_ts + preset.pretrain_secs;
        let n_pre = g.log.partition_point(|e| e.click_ts <= split);
        let bundle = pretrain_bundle(
            &g.log[..n_pre],
            &horizon,
            &preset.generator.feature_schema(),
            &preset.pretrain,
        )?;
        Ok(Self {
            preset: preset.clone(),
            log: g.log,
            truth: g.truth,
            horizon,
            split,
            bundle,
        })
    }

    /// Bayes-optimal AUC over the streaming range.
    pub fn bayes_auc(&self) -> Result<f64> {
        let n_pre = self.log.partition_point(|e| e.click_ts <= self.split);
        bayes_auc(&self.truth[n_pre..])
    }

    pub fn run(&self, method: Method) -> Result<SimulationResult> {
        let source = LogSource::new(&self.log, self.horizon.d_max())?;
        self.run_with(method, &source)
    }

    pub fn run_with(&self, method: Method, source: &dyn FeedbackSource) -> Result<SimulationResult> {
        let cfg = method.configure(&self.preset.stream);
        let b = &self.bundle;
        let aux = Auxiliary {
            likelihood: Some(&b.likelihood),
            completer: b.completer.as_ref(),
            weights: Some(&b.weights),
        };
        let learner = Learner::new(
            method.backbone(),
            b.static_intent.clone(),
            cfg,
            aux,
            &self.horizon,
        )?;
        run_simulation(source, learner, &self.horizon, self.split)
    }
}
