//! Harness configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration; `--print-config` shows them all.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    DepthCompleter, NoisyDepth, NoisyNormals, NormalEstimator, OracleDepth, OracleNormals, RawDepth, TrainConfig,
};
use crate::pipeline::SamplerConfig;
use crate::synth::SceneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthSource {
    Oracle,
    Noisy,
    /// Uncompleted sensor depth.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalSource {
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub depth: DepthSource,
    pub normals: NormalSource,
    pub noisy_depth: NoisyDepth,
    pub noisy_normals: NoisyNormals,
    /// Decoder checkpoint; without one the untrained decoder (priors and
    /// canonical axes) is used.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            depth: DepthSource::Oracle,
            normals: NormalSource::Oracle,
            noisy_depth: NoisyDepth::default(),
            noisy_normals: NoisyNormals::default(),
            checkpoint: None,
        }
    }
}

impl EstimatorConfig {
    /// Noise streams are keyed by `seed` on top of their configured seeds.
    pub fn depth_completer(&self, source: DepthSource, seed: u64) -> Box<dyn DepthCompleter> {
        match source {
            DepthSource::Oracle => Box::new(OracleDepth),
            DepthSource::Raw => Box::new(RawDepth),
            DepthSource::Noisy => Box::new(NoisyDepth {
                seed: crate::rng::derive_seed(self.noisy_depth.seed, seed),
                ..self.noisy_depth.clone()
            }),
        }
    }

    pub fn normal_estimator(&self, source: NormalSource, seed: u64) -> Box<dyn NormalEstimator> {
        match source {
            NormalSource::Oracle => Box::new(OracleNormals),
            NormalSource::Noisy => Box::new(NoisyNormals {
                seed: crate::rng::derive_seed(self.noisy_normals.seed, seed),
                ..self.noisy_normals.clone()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub symmetry_aware: bool,
    pub formats: Vec<ReportFormat>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            symmetry_aware: true,
            formats: vec![ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json],
        }
    }
}

/// The four-condition depth/normal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Frames each condition's decoder is trained on.
    pub train_frames: u64,
    /// Frames every condition is evaluated on, disjoint from training.
    pub test_frames: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            train_frames: 200,
            test_frames: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Master seed of every random stream.
    pub seed: u64,
    /// Frames written by `generate`.
    pub frames: u64,
    pub scene: SceneConfig,
    pub sampler: SamplerConfig,
    pub estimators: EstimatorConfig,
    /// Training settings; `train.loss` is also the loss for `gradcheck`.
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub grid: GridConfig,
    /// Record per-instance wall time in prediction files.
    pub record_timing: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 0,
            frames: 20,
            scene: SceneConfig::default(),
            sampler: SamplerConfig::default(),
            estimators: EstimatorConfig::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            grid: GridConfig::default(),
            record_timing: false,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative checkpoint path is taken relative to
    /// the file's directory and must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(ckpt) = &cfg.estimators.checkpoint {
            let resolved = match path.parent() {
                Some(dir) if ckpt.is_relative() => dir.join(ckpt),
                _ => ckpt.clone(),
            };
            if !resolved.is_file() {
                return Err(Error::io(
                    &resolved,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
                ));
            }
            cfg.estimators.checkpoint = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.sampler.validate()?;
        self.train.validate()?;
        if self.grid.train_frames == 0 || self.grid.test_frames == 0 {
            return Err(Error::Invalid("grid needs training and test frames".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_parse_back() {
        let cfg = HarnessConfig::default();
        let text = cfg.to_toml();
        assert_eq!(HarnessConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(HarnessConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_files_and_typos() {
        let cfg = HarnessConfig::from_toml("seed = 7\n[estimators]\ndepth = \"noisy\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.estimators.depth, DepthSource::Noisy);
        assert!(HarnessConfig::from_toml("sead = 7").is_err());
        assert!(HarnessConfig::from_toml("[sampler]\npoints = 0").is_err());
    }

    #[test]
    fn checkpoint_is_resolved_next_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "[estimators]\ncheckpoint = \"m.ckpt\"\n").unwrap();
        assert!(matches!(HarnessConfig::load(&cfg_path), Err(Error::Io { .. })));
        std::fs::write(dir.path().join("m.ckpt"), b"x").unwrap();
        let cfg = HarnessConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.estimators.checkpoint, Some(dir.path().join("m.ckpt")));
    }
}
