//! TOML run configuration.

use adapt_core::AdaptConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Which CSV columns hold what.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Columns {
    pub p: String,
    /// Covariate columns; every other column when absent.
    pub covariates: Option<Vec<String>>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            p: "p".into(),
            covariates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Levels reported in the output table.
    pub alpha: Vec<f64>,
    pub columns: Columns,
    pub adapt: AdaptConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            alpha: vec![0.05, 0.1, 0.2],
            columns: Columns::default(),
            adapt: AdaptConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("config: {e}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Usage(format!("config: schema {} is not supported", self.schema)));
        }
        if let Some(a) = self.alpha.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(CliError::Usage(format!("config: alpha = {a} must lie in (0, 1]")));
        }
        self.adapt.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adapt_core::engine::{RefitCadence, StrategyKind};
    use adapt_core::{FeaturePair, Featurization, Family, SelectionCriterion};

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn custom_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.alpha = vec![0.01, 0.3];
        cfg.columns.covariates = Some(vec!["x1".into(), "x2".into()]);
        cfg.adapt.family = Family::Gaussian;
        cfg.adapt.candidates = vec![
            FeaturePair::same(Featurization::Intercept),
            FeaturePair {
                pi: Featurization::Subset { indices: vec![0, 1] },
                mu: Featurization::TensorSpline { knots: 2 },
            },
        ];
        cfg.adapt.criterion = SelectionCriterion::Cv { folds: 4 };
        cfg.adapt.s0 = 0.1 + 0.2;
        cfg.adapt.refit = RefitCadence::Every(7);
        cfg.adapt.alpha = Some(0.1);
        cfg.adapt.strategy = StrategyKind::ConstantThreshold;
        cfg.adapt.em.seed = 12345;
        cfg.adapt.em.tol = 1e-300;
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.adapt.s0.to_bits(), cfg.adapt.s0.to_bits());
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_files_use_defaults() {
        let cfg = RunConfig::from_toml("alpha = [0.1]\n[adapt]\nfamily = \"gaussian\"\n").unwrap();
        assert_eq!(cfg.alpha, vec![0.1]);
        assert_eq!(cfg.adapt.family, Family::Gaussian);
        assert_eq!(cfg.adapt.candidates, AdaptConfig::default().candidates);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_toml("alpha = [2.0]"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_toml("schema = 2"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_toml("[adapt]\ns0 = 0.7"), Err(CliError::Usage(_))));
    }
}
