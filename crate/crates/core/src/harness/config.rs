//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvSpec;
use crate::error::{Result, SspError};
use crate::estimation::FullInfoCounting;
use crate::po::{Overrides, Setting};

fn default_delta() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_parallel() -> usize {
    1
}

/// One experiment: an environment, a setting and a list of learner seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub setting: Setting,
    pub episodes: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Number of seeds run at the same time.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    pub env: EnvSpec,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub full_info_counting: FullInfoCounting,
    /// Default output directory when none is given on the command line.
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SspError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SspError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(SspError::Config("episodes must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SspError::Config("delta must lie in (0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(SspError::Config("at least one seed is required".into()));
        }
        if self.parallel == 0 {
            return Err(SspError::Config("parallel must be >= 1".into()));
        }
        Ok(())
    }

    /// Apply a `key=value` command-line override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| SspError::Config(format!("override '{spec}' is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || value.parse::<f64>().map_err(|_| SspError::Config(format!("override {key}: '{value}' is not a number")));
        match key {
            "episodes" => self.episodes = value.parse().map_err(|_| SspError::Config("episodes must be an integer".into()))?,
            "delta" => self.delta = num()?,
            "parallel" => self.parallel = value.parse().map_err(|_| SspError::Config("parallel must be an integer".into()))?,
            "env.seed" => self.env.seed = value.parse().map_err(|_| SspError::Config("env.seed must be an integer".into()))?,
            "env.c_min" => self.env.c_min = num()?,
            _ => self.overrides.set(key, num()?)?,
        }
        self.validate()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
setting = "stochastic-costs"
episodes = 20
seeds = [1, 2]

[env]
c_min = 0.0
seed = 7
generator = { kind = "random-ssp", num_states = 3, num_actions = 2, p_goal = 0.2 }
costs = { kind = "stochastic", noise = "bernoulli" }

[overrides]
eta = 0.5
"#;

    #[test]
    fn parses_and_hashes() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.overrides.eta, Some(0.5));
        assert_eq!(cfg.hash().len(), 16);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn overrides_change_the_hash() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let before = cfg.hash();
        cfg.apply_override("lambda=0").unwrap();
        assert_ne!(cfg.hash(), before);
        assert!(cfg.apply_override("nonsense=1").is_err());
        assert!(cfg.apply_override("episodes=0").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("setting = \"adv-full\"\nepisodes = 1\ncolour = 3\n[env]\ngenerator = { kind = \"line\", length = 2 }\n").is_err());
    }
}
