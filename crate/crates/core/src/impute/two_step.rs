use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{gibbs_impute, ImputationModelSpec, ImputationSet};
use crate::claims::CLAIMS_COVARIATES;
use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::frame::FRAME_COVARIATES;
use crate::rng::{derive_seed, label_tag};

/// Covariate sets for the two imputation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Frame covariates only.
    #[serde(rename = "MI1")]
    Mi1,
    /// Frame covariates plus claims aggregates.
    #[serde(rename = "MI2")]
    Mi2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioColumns {
    pub frame_covariates: Vec<String>,
    pub extra_covariates: Vec<String>,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Mi1 => "MI1",
            Scenario::Mi2 => "MI2",
        }
    }

    pub fn columns(self) -> ScenarioColumns {
        let frame_covariates = FRAME_COVARIATES.iter().map(|s| s.to_string()).collect();
        let extra_covariates = match self {
            Scenario::Mi1 => Vec::new(),
            Scenario::Mi2 => CLAIMS_COVARIATES.iter().map(|s| s.to_string()).collect(),
        };
        ScenarioColumns {
            frame_covariates,
            extra_covariates,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MI1" | "mi1" => Ok(Scenario::Mi1),
            "MI2" | "mi2" => Ok(Scenario::Mi2),
            other => Err(Error::config("scenarios", format!("unknown scenario `{other}`"))),
        }
    }
}

/// Completes incomplete `extra_covariates` from `frame_covariates`, then
/// imputes the outcome columns of `spec` from both sets.
///
/// Each missing auxiliary cell is replaced by the average of its `D` step-1
/// draws. Step 2 runs with `seed` itself, so a run with complete auxiliary
/// columns is identical to calling [`gibbs_impute`] directly.
pub fn two_step_impute(
    data: &StudyDataset,
    frame_covariates: &[String],
    extra_covariates: &[String],
    spec: &ImputationModelSpec,
    seed: u64,
) -> Result<ImputationSet> {
    for name in frame_covariates {
        if !data.column(name)?.is_complete() {
            return Err(Error::InsufficientData(format!(
                "frame covariate `{name}` has missing cells"
            )));
        }
    }
    let mut incomplete = Vec::new();
    for name in extra_covariates {
        if !data.column(name)?.is_complete() {
            incomplete.push(name.clone());
        }
    }

    let mut working = data.clone();
    let mut step1_diagnostics = None;
    if !incomplete.is_empty() {
        let step1 = ImputationModelSpec {
            outcome_columns: incomplete.clone(),
            predictor_columns: frame_covariates.to_vec(),
            prior_df_residual: None,
            prior_scale_residual: None,
            prior_df_random: None,
            prior_scale_random: None,
            ..spec.clone()
        };
        let set = gibbs_impute(data, &step1, derive_seed(seed, &[label_tag("predictor-step")]))
            .map_err(|e| e.in_step("predictor imputation"))?;
        let d = set.datasets.len() as f64;
        for name in &incomplete {
            let idx = working.column_index(name)?;
            let col = &mut working.columns[idx];
            for i in 0..col.values.len() {
                if !col.observed[i] {
                    col.values[i] = set
                        .datasets
                        .iter()
                        .map(|ds| ds.columns[idx].values[i])
                        .sum::<f64>()
                        / d;
                    col.observed[i] = true;
                }
            }
        }
        step1_diagnostics = Some(Box::new(set.chain_diagnostics));
    }

    let mut predictors = frame_covariates.to_vec();
    predictors.extend(extra_covariates.iter().cloned());
    let step2 = ImputationModelSpec {
        predictor_columns: predictors,
        ..spec.clone()
    };
    let mut set = gibbs_impute(&working, &step2, seed).map_err(|e| e.in_step("outcome imputation"))?;
    // report missingness relative to the caller's data, not the step-1 fill
    set.source_observed = data
        .columns
        .iter()
        .map(|c| (c.name.clone(), c.observed.clone()))
        .collect();
    set.chain_diagnostics.predictor_step = step1_diagnostics;
    Ok(set)
}
