//! Run configuration: one JSON document with a section per subsystem,
//! defaults everywhere, unknown keys rejected, and the effective version
//! echoed next to the outputs as `run_config.resolved.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use msgldm_core::data::PhantomConfig;
use msgldm_core::diffusion::SamplerKind;
use msgldm_core::losses::LossWeights;
use msgldm_core::networks::ModelConfig;
use msgldm_core::train::OptimConfig;
use msgldm_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampler_kind: SamplerKind,
    pub sampler_steps: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        // Betas are the classic 1000-step linear schedule (1e-4..0.02)
        // rescaled by 2× at T=200 so the terminal ᾱ_T ≈ 0.018: close enough
        // to zero SNR that the N(0,1) sampler initialization matches q(z_T)
        // (latents are normalized to zero mean / unit variance), without
        // drowning most timesteps in noise the way a full 1000/T rescale
        // would at this model scale.
        DiffusionConfig {
            timesteps: 200,
            beta_start: 2e-4,
            beta_end: 0.04,
            sampler_kind: SamplerKind::Deterministic,
            sampler_steps: 25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Dataset directory; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: PhantomConfig,
    pub model: ModelConfig,
    pub diffusion: DiffusionConfig,
    pub loss: LossWeights,
    pub optim: OptimConfig,
    pub io: IoConfig,
}

impl RunConfig {
    /// Loads from JSON, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Derives the cross-section invariants (shared image size / timestep
    /// count) and validates everything.
    pub fn resolve(&mut self) -> Result<()> {
        self.model.image_size = self.data.image_size;
        self.model.timesteps = self.diffusion.timesteps;
        self.data.validate()?;
        self.model.validate()?;
        self.loss.validate()?;
        if !(self.diffusion.beta_start > 0.0
            && self.diffusion.beta_start <= self.diffusion.beta_end
            && self.diffusion.beta_end < 1.0)
        {
            return Err(Error::Config("invalid diffusion beta range".into()));
        }
        if self.diffusion.sampler_steps == 0 || self.diffusion.sampler_steps > self.diffusion.timesteps
        {
            return Err(Error::Config("sampler_steps must lie in [1, timesteps]".into()));
        }
        Ok(())
    }

    /// Applies the global `--seed` override to every seeded subsystem.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.optim.seed = seed;
    }

    pub fn data_dir(&self, out: &Path) -> PathBuf {
        self.io
            .data_dir
            .clone()
            .unwrap_or_else(|| out.join("data"))
    }

    /// Writes the effective configuration next to the outputs.
    pub fn persist_resolved(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("run_config.resolved.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let mut cfg = RunConfig::default();
        cfg.resolve().unwrap();
        assert_eq!(cfg.model.image_size, cfg.data.image_size);
        assert_eq!(cfg.model.timesteps, cfg.diffusion.timesteps);
        assert!((cfg.optim.learning_rate - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"data": {"image_size": 64, "bogus": 1}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
        let text = r#"{"nonexistent_section": {}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let text = r#"{"optim": {"epochs": 3}}"#;
        let mut cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.resolve().unwrap();
        assert_eq!(cfg.optim.epochs, 3);
        assert_eq!(cfg.data.image_size, 64);
    }

    #[test]
    fn resolved_round_trips() {
        let dir = std::env::temp_dir().join("msgldm_cfg_test");
        let mut cfg = RunConfig::default();
        cfg.resolve().unwrap();
        cfg.persist_resolved(&dir).unwrap();
        let loaded = RunConfig::load(Some(&dir.join("run_config.resolved.json"))).unwrap();
        assert_eq!(
            serde_json::to_string(&cfg).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
