//! Multiple imputation under a multivariate two-level random-intercept model.
//!
//! The model for row `i` of cluster `c` is `y_i = B' x_i + u_c + e_i` with
//! `u_c ~ N(0, Psi)` and `e_i ~ N(0, Sigma)`. [`gibbs_impute`] runs a data
//! augmentation Gibbs sampler and keeps thinned completed datasets;
//! [`two_step_impute`] first completes incomplete auxiliary predictors and
//! then imputes the survey outcomes.

mod gibbs;
mod two_step;
pub mod wishart;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::StudyDataset;
use crate::error::{Error, Result};

pub use gibbs::{gibbs_impute, Sampler};
pub use two_step::{two_step_impute, Scenario, ScenarioColumns};

/// Only the owner subsidiary defines clusters in this crate.
pub const CLUSTER_COLUMN: &str = "os_id";

fn default_cluster_column() -> String {
    CLUSTER_COLUMN.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputationModelSpec {
    /// Columns to impute. Empty means every outcome-role column.
    pub outcome_columns: Vec<String>,
    pub predictor_columns: Vec<String>,
    #[serde(default = "default_cluster_column")]
    pub cluster_column: String,
    pub n_burn: usize,
    pub n_between: usize,
    #[serde(alias = "D")]
    pub n_imputations: usize,
    /// Inverse-Wishart prior for the residual covariance. Unset values
    /// default to `p + 1` degrees of freedom and a tenth of the observed
    /// covariance.
    pub prior_df_residual: Option<f64>,
    pub prior_scale_residual: Option<Vec<Vec<f64>>>,
    pub prior_df_random: Option<f64>,
    pub prior_scale_random: Option<Vec<Vec<f64>>>,
}

impl Default for ImputationModelSpec {
    fn default() -> Self {
        Self {
            outcome_columns: Vec::new(),
            predictor_columns: Vec::new(),
            cluster_column: default_cluster_column(),
            n_burn: 500,
            n_between: 100,
            n_imputations: 10,
            prior_df_residual: None,
            prior_scale_residual: None,
            prior_df_random: None,
            prior_scale_random: None,
        }
    }
}

impl ImputationModelSpec {
    /// Checks the parts of the spec that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.n_imputations < 2 {
            return Err(Error::config("imputation.n_imputations", "must be at least 2"));
        }
        if self.n_burn < 1 {
            return Err(Error::config("imputation.n_burn", "must be at least 1"));
        }
        if self.n_between < 1 {
            return Err(Error::config("imputation.n_between", "must be at least 1"));
        }
        if self.cluster_column != CLUSTER_COLUMN {
            return Err(Error::config(
                "imputation.cluster_column",
                format!("only `{CLUSTER_COLUMN}` clusters are supported"),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in self.outcome_columns.iter().chain(&self.predictor_columns) {
            if !seen.insert(c) {
                return Err(Error::config(
                    "imputation.columns",
                    format!("`{c}` listed more than once"),
                ));
            }
        }
        let p = self.outcome_columns.len();
        for (field, df, scale) in [
            ("prior_residual", self.prior_df_residual, &self.prior_scale_residual),
            ("prior_random", self.prior_df_random, &self.prior_scale_random),
        ] {
            if let Some(df) = df {
                if p > 0 && !(df >= p as f64) {
                    return Err(Error::config(
                        format!("imputation.{field}_df"),
                        "must be at least the number of imputed columns",
                    ));
                }
            }
            if let Some(s) = scale {
                check_scale(s, p, field)?;
            }
        }
        Ok(())
    }
}

fn check_scale(s: &[Vec<f64>], p: usize, field: &str) -> Result<()> {
    let name = format!("imputation.{field}_scale");
    if s.len() != p || s.iter().any(|r| r.len() != p) {
        return Err(Error::config(name, format!("must be {p} x {p}")));
    }
    for i in 0..p {
        for j in 0..i {
            if (s[i][j] - s[j][i]).abs() > 1e-12 * (1.0 + s[i][j].abs()) {
                return Err(Error::config(name, "must be symmetric"));
            }
        }
    }
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| s[i][j]);
    if m.cholesky().is_none() {
        return Err(Error::config(name, "must be positive definite"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub variance: f64,
    /// Lag-1 autocorrelation over consecutive sweeps.
    pub lag1: Option<f64>,
    /// Lag-1 autocorrelation over the retained (thinned) draws.
    pub lag1_thinned: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPredictor {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub sweeps: usize,
    pub n_burn: usize,
    pub n_between: usize,
    /// Keyed `sigma[col]`, `psi[col]`, `mu[col]` on the original scale.
    pub traces: BTreeMap<String, TraceSummary>,
    pub dropped_predictors: Vec<DroppedPredictor>,
    /// Diagnostics of the predictor-completion step of a two-step run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor_step: Option<Box<ChainDiagnostics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSet {
    pub datasets: Vec<StudyDataset>,
    /// Columns filled by the final imputation step.
    pub imputed_columns: Vec<String>,
    /// Observed flags of every column before imputation, keyed by name.
    pub source_observed: BTreeMap<String, Vec<bool>>,
    pub chain_diagnostics: ChainDiagnostics,
    pub seed: u64,
}

impl ImputationSet {
    pub fn n_imputations(&self) -> usize {
        self.datasets.len()
    }

    /// Was the cell originally missing?
    pub fn was_missing(&self, column: &str, row: usize) -> bool {
        self.source_observed
            .get(column)
            .is_some_and(|o| !o[row])
    }
}
