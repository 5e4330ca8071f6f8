//! JSON run configuration shared by the command-line tool and the harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureProductSpec;
use crate::error::{ClrError, Result};
use crate::optimize::OptimizerConfig;
use crate::ratcode::AlphaApproxConstants;
use crate::sphere::SphereBudget;

/// How raw columns are expanded into model features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChoice {
    Identity,
    Squares,
    Pairwise,
    Custom(FeatureProductSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimizerConfig,
    pub alpha: AlphaApproxConstants,
    pub features: FeatureChoice,
    pub include_bias: bool,
    pub sphere: SphereBudget,
    pub train_fraction: f64,
    /// Round the target to this resolution before estimating δ(y).
    pub target_resolution: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            alpha: AlphaApproxConstants::default(),
            features: FeatureChoice::Identity,
            include_bias: true,
            sphere: SphereBudget::default(),
            train_fraction: 2.0 / 3.0,
            target_resolution: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ClrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ClrError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ClrError::Config("train_fraction must lie in (0, 1)".into()));
        }
        if let Some(r) = self.target_resolution {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ClrError::Config("target_resolution must be positive".into()));
            }
        }
        Ok(())
    }

    /// Expansion for a dataset with `j` raw columns.
    pub fn feature_spec(&self, j: usize) -> FeatureProductSpec {
        match &self.features {
            FeatureChoice::Identity => FeatureProductSpec::identity(j).with_bias(self.include_bias),
            FeatureChoice::Squares => FeatureProductSpec::squares(j, self.include_bias),
            FeatureChoice::Pairwise => FeatureProductSpec::pairwise(j, self.include_bias),
            FeatureChoice::Custom(spec) => spec.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_defaults() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_json(r#"{"features":"squares","optimizer":{"seed":9}}"#).unwrap();
        assert_eq!(partial.features, FeatureChoice::Squares);
        assert_eq!(partial.optimizer.seed, 9);
        assert_eq!(partial.optimizer.max_cull_rounds, 20);
        assert!(partial.feature_spec(2).include_bias);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(
            RunConfig::from_json(r#"{"bogus":1}"#),
            Err(ClrError::Config(_))
        ));
        assert!(RunConfig::from_json(r#"{"train_fraction":1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"optimizer":{"shrink":2.0}}"#).is_err());
    }
}
