// SPDX-License-Identifier: Apache-2.0

//! Run settings merged from flags, a TOML config file and defaults.
//!
//! Precedence: flags > config file > defaults. Every field is optional at
//! each layer; [`Settings::merge`] takes the first one that is set.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub graph: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
    pub nodes: Option<usize>,
    pub model: Option<PathBuf>,
    pub mechanism: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub directed: Option<bool>,
    pub non_dp: Option<bool>,
    pub allow_nonconverged: Option<bool>,
    /// Releases (`release`), replicates per mechanism (`evaluate`).
    pub replicates: Option<usize>,
    /// Retained draws per chain.
    pub samples: Option<usize>,
    pub burn_in: Option<usize>,
    pub interval: Option<usize>,
    pub max_iterations: Option<usize>,
    /// Draws per KL path point (`evaluate`).
    pub kl_samples: Option<usize>,
    /// Uniform flip probabilities to sweep (`evaluate`).
    pub pi: Option<Vec<f64>>,
    /// Parameter vector (`simulate`).
    pub theta: Option<Vec<f64>>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// Fields of `self`, falling back to `lower` where unset.
    pub fn merge(self, lower: Settings) -> Settings {
        merge_fields!(
            self,
            lower,
            graph,
            attrs,
            nodes,
            model,
            mechanism,
            seed,
            out_dir,
            workers,
            directed,
            non_dp,
            allow_nonconverged,
            replicates,
            samples,
            burn_in,
            interval,
            max_iterations,
            kl_samples,
            pi,
            theta
        )
    }

    pub fn from_toml_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn directed(&self) -> bool {
        self.directed.unwrap_or(false)
    }

    pub fn require_graph(&self) -> Result<&Path> {
        match &self.graph {
            Some(p) => Ok(p),
            None => bail!("--graph is required"),
        }
    }

    pub fn require_model(&self) -> Result<&Path> {
        match &self.model {
            Some(p) => Ok(p),
            None => bail!("--model is required"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let flags = Settings {
            seed: Some(7),
            ..Default::default()
        };
        let config = Settings {
            seed: Some(3),
            workers: Some(4),
            ..Default::default()
        };
        let s = flags.merge(config);
        assert_eq!(s.seed, Some(7));
        assert_eq!(s.workers, Some(4));
        assert_eq!(s.replicates, None);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let s = Settings {
            pi: Some(vec![0.01, 0.02]),
            samples: Some(100),
            ..Default::default()
        };
        let text = toml::to_string(&s).unwrap();
        assert_eq!(toml::from_str::<Settings>(&text).unwrap(), s);
        assert!(toml::from_str::<Settings>("bogus = 1").is_err());
    }
}
