//! The experiment configuration: one TOML document with a section per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use survey_impute::dataset::outcome_name;
use survey_impute::rng::{derive_seed, label_tag};
use survey_impute::{
    DesignSpec, GeneratorConfig, ImputationModelSpec, Level, Method, ResponseModel, Scenario,
};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClaimsConfig {
    /// Mean number of beneficiaries generated per practice.
    pub per_practice_mean: f64,
    /// Target correlation of the driver claims covariate with outcome 0.
    pub aux_outcome_corr: f64,
}

impl Default for ClaimsConfig {
    fn default() -> Self {
        Self {
            per_practice_mean: 20.0,
            aux_outcome_corr: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub design: DesignSpec,
    pub response: ResponseModel,
    pub claims: ClaimsConfig,
    /// Chain settings; predictor columns come from the scenario.
    pub imputation: ImputationModelSpec,
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<Method>,
    /// Levels at which every method is evaluated.
    pub levels: Vec<Level>,
    /// Treat the completed frame as a census in the MI within variance.
    pub fpc: bool,
    pub replicates: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// Persist every stage of every replicate, not only its estimates.
    pub keep_replicate_artifacts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            design: DesignSpec::default(),
            response: ResponseModel::default(),
            claims: ClaimsConfig::default(),
            imputation: ImputationModelSpec::default(),
            scenarios: vec![Scenario::Mi1, Scenario::Mi2],
            methods: vec![Method::Naive, Method::Weighted, Method::Mi],
            levels: vec![Level::Practice],
            fpc: false,
            replicates: 1,
            base_seed: 20_200_101,
            output_dir: PathBuf::from("out"),
            workers: 1,
            keep_replicate_artifacts: false,
        }
    }
}

fn config_err(e: impl ToString) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(config_err)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate().map_err(config_err)?;
        self.design.validate().map_err(config_err)?;
        self.response.validate().map_err(config_err)?;
        self.imputation.validate().map_err(config_err)?;
        if !(self.claims.per_practice_mean.is_finite() && self.claims.per_practice_mean > 0.0) {
            return Err(config_err("`claims.per_practice_mean` must be positive"));
        }
        if !(self.claims.aux_outcome_corr > -1.0 && self.claims.aux_outcome_corr < 1.0) {
            return Err(config_err("`claims.aux_outcome_corr` must lie in (-1, 1)"));
        }
        if self.replicates < 1 {
            return Err(config_err("`replicates` must be at least 1"));
        }
        if self.workers < 1 {
            return Err(config_err("`workers` must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("`methods` must not be empty"));
        }
        if self.levels.is_empty() {
            return Err(config_err("`levels` must not be empty"));
        }
        if self.methods.contains(&Method::Mi) && self.scenarios.is_empty() {
            return Err(config_err("`scenarios` must not be empty when `mi` is requested"));
        }
        for (name, dup) in [
            ("methods", has_duplicates(&self.methods)),
            ("scenarios", has_duplicates(&self.scenarios)),
            ("levels", has_duplicates(&self.levels)),
        ] {
            if dup {
                return Err(config_err(format!("`{name}` lists an entry twice")));
            }
        }
        if !self.imputation.predictor_columns.is_empty() {
            return Err(config_err(
                "`imputation.predictor_columns` is set by the scenario and must be empty",
            ));
        }
        let known: Vec<String> = (0..self.generator.outcome_count).map(outcome_name).collect();
        for c in &self.imputation.outcome_columns {
            if !known.contains(c) {
                return Err(config_err(format!(
                    "`imputation.outcome_columns` names unknown outcome `{c}`"
                )));
            }
        }
        Ok(())
    }

    /// Outcomes reported in every table, in column order.
    pub fn outcomes(&self) -> Vec<String> {
        if self.imputation.outcome_columns.is_empty() {
            (0..self.generator.outcome_count).map(outcome_name).collect()
        } else {
            self.imputation.outcome_columns.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

/// Seeds of every stochastic stage of one replicate.
///
/// The frame and the claims population depend on the base seed only, so
/// replicates share one population and vary sample, response, and imputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub base: u64,
    pub replicate: usize,
    pub replicate_seed: u64,
    pub frame: u64,
    pub claims: u64,
    pub sample: u64,
    pub response: u64,
    pub imputation: BTreeMap<String, u64>,
}

impl StageSeeds {
    pub fn new(base: u64, replicate: usize) -> Self {
        let replicate_seed = derive_seed(base, &[replicate as u64]);
        let imputation = [Scenario::Mi1, Scenario::Mi2]
            .into_iter()
            .map(|s| {
                let seed = derive_seed(replicate_seed, &[label_tag("impute"), label_tag(s.as_str())]);
                (s.as_str().to_string(), seed)
            })
            .collect();
        Self {
            base,
            replicate,
            replicate_seed,
            frame: derive_seed(base, &[label_tag("frame")]),
            claims: derive_seed(base, &[label_tag("claims")]),
            sample: derive_seed(replicate_seed, &[label_tag("sample")]),
            response: derive_seed(replicate_seed, &[label_tag("response")]),
            imputation,
        }
    }

    pub fn imputation_seed(&self, scenario: Scenario) -> u64 {
        self.imputation[scenario.as_str()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.generator.n_parents, 570);
        assert_eq!(c.imputation.n_imputations, 10);
        assert_eq!(c.outcomes(), ["y0", "y1", "y2"]);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = ExperimentConfig::from_toml(
            r#"
            scenarios = ["MI2"]
            methods = ["naive", "mi"]
            base_seed = 9
            [generator]
            n_parents = 50
            [imputation]
            D = 5
            n_burn = 20
            [response.level_targets]
            practice = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(c.generator.n_parents, 50);
        assert_eq!(c.generator.outcome_count, 3);
        assert_eq!(c.imputation.n_imputations, 5);
        assert_eq!(c.imputation.n_between, 100);
        assert_eq!(c.scenarios, [Scenario::Mi2]);
        assert_eq!(c.response.level_targets.len(), 1);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn rejects_bad_documents() {
        for doc in [
            "replicates = 0",
            "workers = 0",
            "methods = []",
            "methods = [\"mi\"]\nscenarios = []",
            "methods = [\"naive\", \"naive\"]",
            "scenarios = [\"MI3\"]",
            "unknown_key = 1",
            "[generator]\ncluster_icc = 1.5",
            "[claims]\naux_outcome_corr = 1.0",
            "[imputation]\nD = 1",
            "[imputation]\npredictor_columns = [\"np\"]",
            "[imputation]\noutcome_columns = [\"y9\"]",
            "[design]\ndesign = \"two_level\"",
        ] {
            let err = ExperimentConfig::from_toml(doc).unwrap_err();
            assert!(err.is_config(), "{doc}: {err}");
        }
    }

    #[test]
    fn seeds_separate_population_from_replicate() {
        let a = StageSeeds::new(1, 0);
        let b = StageSeeds::new(1, 1);
        assert_eq!(a.frame, b.frame);
        assert_eq!(a.claims, b.claims);
        assert_ne!(a.sample, b.sample);
        assert_ne!(a.imputation_seed(Scenario::Mi1), a.imputation_seed(Scenario::Mi2));
        assert_eq!(a, StageSeeds::new(1, 0));
    }
}
