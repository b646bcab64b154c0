//! Declarative experiment description: a flat TOML file, overridable from
//! the command line, fully determining every numeric output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitSpec;
use crate::optim::OptimKind;

/// Head-initialization strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Variance-scaling head init, joint training from step 0.
    Base,
    /// Variance-scaling head init with a warm-up phase that trains only the
    /// augmented parameters first.
    BaseWu,
    /// Maximum-entropy head init.
    Mei,
    /// Maximum-entropy head init plus the feature-norm correction layer.
    MeiFn,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::BaseWu => "base_wu",
            Strategy::Mei => "mei",
            Strategy::MeiFn => "mei_fn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Strategy::Base),
            "base_wu" => Ok(Strategy::BaseWu),
            "mei" => Ok(Strategy::Mei),
            "mei_fn" => Ok(Strategy::MeiFn),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected base, base_wu, mei, mei_fn)"
            ))),
        }
    }

    pub fn uses_feature_norm(self) -> bool {
        self == Strategy::MeiFn
    }

    pub fn uses_warmup(self) -> bool {
        self == Strategy::BaseWu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl From<OptimizerChoice> for OptimKind {
    fn from(c: OptimizerChoice) -> OptimKind {
        match c {
            OptimizerChoice::Adam => OptimKind::Adam,
            OptimizerChoice::Sgd => OptimKind::Sgd,
        }
    }
}

/// Everything a run needs. The defaults are the desk-scale recipe: a small
/// MLP on a synthetic transfer pair, 8 seeds, 200 steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Source task the backbone pretrains on, e.g. `synth:0` or `mnist:0-4`.
    pub source: String,
    /// Target task of the head swap, e.g. `synth:1` or `mnist:5-9`.
    pub target: String,
    /// Backbone id: `mlp` (D–256–128–C) or `cnn` (deeper dense stand-in).
    pub arch: String,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Initial learning rate γ.
    pub gamma: f64,
    /// Head weight energy; mutually exclusive with `lambda`.
    pub phi_w: Option<f64>,
    /// Noise-proportion hyper-parameter; overrides `phi_w` when set.
    pub lambda: Option<f64>,
    pub batch_size: usize,
    /// Fine-tuning updates per run (telemetry is also recorded at step 0).
    pub steps: usize,
    pub pretrain_steps: usize,
    /// Warm-up updates for the `base_wu` strategy.
    pub warmup_steps: usize,
    pub optimizer: OptimizerChoice,
    /// Random horizontal flip on image-shaped training batches.
    pub hflip: bool,
    pub out: PathBuf,
    /// Dataset directory; falls back to `$HEADLAB_DATA`, then `./data`.
    pub data_dir: Option<PathBuf>,
    pub synth_classes: usize,
    pub synth_dim: usize,
    pub synth_examples: usize,
    pub synth_test_examples: usize,
    pub synth_difficulty: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: "synth:0".into(),
            target: "synth:1".into(),
            arch: "mlp".into(),
            strategies: vec![Strategy::Base, Strategy::BaseWu, Strategy::Mei, Strategy::MeiFn],
            seeds: (1..=8).collect(),
            gamma: 1e-4,
            phi_w: None,
            lambda: None,
            batch_size: 256,
            steps: 200,
            pretrain_steps: 300,
            warmup_steps: 1,
            optimizer: OptimizerChoice::Adam,
            hflip: false,
            out: PathBuf::from("out"),
            data_dir: None,
            synth_classes: 5,
            synth_dim: 64,
            synth_examples: 2048,
            synth_test_examples: 512,
            synth_difficulty: 0.5,
        }
    }
}

pub const DEFAULT_PHI_W: f64 = 1e-12;

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        let mut sorted = self.strategies.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.strategies.len() {
            return Err(Error::Config("duplicate strategies".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if let Some(p) = self.phi_w {
            if !(p > 0.0) {
                return Err(Error::Config(format!("phi_w must be > 0, got {p}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::Config(format!("lambda must be > 0, got {l}")));
            }
        }
        if self.phi_w.is_some() && self.lambda.is_some() {
            return Err(Error::Config("set phi_w or lambda, not both".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be ≥ 2".into()));
        }
        if self.arch != "mlp" && self.arch != "cnn" {
            return Err(Error::Config(format!(
                "unknown arch '{}' (expected mlp or cnn)",
                self.arch
            )));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.synth_difficulty) {
            return Err(Error::Config("synth_difficulty must be in [0,1]".into()));
        }
        Ok(())
    }

    /// Hidden-layer widths for the backbone id.
    pub fn arch_hidden(&self) -> Vec<usize> {
        match self.arch.as_str() {
            "cnn" => vec![512, 256, 128],
            _ => vec![256, 128],
        }
    }

    /// Head weight energy for a `classes`-way head under this config:
    /// `λ` wins when given, otherwise `phi_w`, otherwise 1e-12.
    pub fn head_phi_w(&self, classes: usize) -> Result<f64> {
        if let Some(lambda) = self.lambda {
            return crate::init::mei_variance(self.gamma, lambda, classes);
        }
        Ok(self.phi_w.unwrap_or(DEFAULT_PHI_W))
    }

    /// Head init for one strategy.
    pub fn head_init(&self, strategy: Strategy, classes: usize) -> Result<InitSpec> {
        match strategy {
            Strategy::Base | Strategy::BaseWu => Ok(InitSpec::he_fan_out()),
            Strategy::Mei | Strategy::MeiFn => {
                if let Some(lambda) = self.lambda {
                    Ok(InitSpec::Mei {
                        gamma: self.gamma,
                        lambda,
                        classes,
                    })
                } else {
                    InitSpec::mei_from_phi_w(self.gamma, self.head_phi_w(classes)?, classes)
                }
            }
        }
    }

    /// Resolved dataset directory.
    pub fn data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        if let Ok(env) = std::env::var("HEADLAB_DATA") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        PathBuf::from("data")
    }
}
