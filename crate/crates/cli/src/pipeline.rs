//! In-memory stages of one pipeline run and the estimation step.

use serde::{Deserialize, Serialize};
use survey_impute::claims::{self, Beneficiary, ClaimsAggregate};
use survey_impute::estimators::{mi_mean_with, naive_mean_at, weighted_mean_at};
use survey_impute::{
    calibrate_response_model, apply_missingness, correlation_summary, draw_sample,
    efficiency_diagnostic, generate_frame, population_mean, two_step_impute, CorrelationSummary,
    EfficiencyDiagnostic, EstimateReport, Frame, ImputationSet, Level, Method, SampleDraw,
    Scenario, StudyDataset,
};

use crate::config::{ExperimentConfig, StageSeeds};
use crate::error::{HarnessError, Result};

pub fn generate(config: &ExperimentConfig, seeds: &StageSeeds) -> Result<Frame> {
    generate_frame(&config.generator, seeds.frame).map_err(HarnessError::stage("generate"))
}

pub fn sample(config: &ExperimentConfig, frame: &Frame, seeds: &StageSeeds) -> Result<SampleDraw> {
    draw_sample(frame, &config.design, seeds.sample).map_err(HarnessError::stage("sample"))
}

pub struct ClaimsLink {
    pub beneficiaries: Vec<Beneficiary>,
    pub aggregates: Vec<ClaimsAggregate>,
}

pub fn link_claims(config: &ExperimentConfig, frame: &Frame, seeds: &StageSeeds) -> Result<ClaimsLink> {
    let beneficiaries = claims::generate_beneficiaries(
        frame,
        config.claims.per_practice_mean,
        config.claims.aux_outcome_corr,
        seeds.claims,
    )
    .map_err(HarnessError::stage("claims"))?;
    let attribution = claims::attribute(&beneficiaries, frame);
    let aggregates = claims::aggregate(&beneficiaries, &attribution, frame);
    Ok(ClaimsLink {
        beneficiaries,
        aggregates,
    })
}

pub fn respond(
    config: &ExperimentConfig,
    frame: &Frame,
    draw: &SampleDraw,
    aggregates: &[ClaimsAggregate],
    seeds: &StageSeeds,
) -> Result<StudyDataset> {
    let model = calibrate_response_model(frame, draw, &config.response)
        .map_err(HarnessError::stage("missingness"))?;
    apply_missingness(frame, draw, aggregates, &model, seeds.response)
        .map_err(HarnessError::stage("missingness"))
}

pub fn impute(
    config: &ExperimentConfig,
    study: &StudyDataset,
    scenario: Scenario,
    seeds: &StageSeeds,
) -> survey_impute::Result<ImputationSet> {
    let cols = scenario.columns();
    two_step_impute(
        study,
        &cols.frame_covariates,
        &cols.extra_covariates,
        &config.imputation,
        seeds.imputation_seed(scenario),
    )
}

/// Imputation outcome of one scenario; a failure is kept as its message.
#[derive(Debug, Clone)]
pub struct ScenarioImputation {
    pub scenario: Scenario,
    pub result: std::result::Result<ImputationSet, String>,
}

pub fn impute_all(config: &ExperimentConfig, study: &StudyDataset, seeds: &StageSeeds) -> Vec<ScenarioImputation> {
    if !config.methods.contains(&Method::Mi) {
        return Vec::new();
    }
    config
        .scenarios
        .iter()
        .map(|&scenario| ScenarioImputation {
            scenario,
            result: impute(config, study, scenario, seeds).map_err(|e| e.to_string()),
        })
        .collect()
}

/// One requested (method, scenario, outcome, level) estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub scenario: Option<Scenario>,
    pub outcome: String,
    pub level: Level,
    pub truth: f64,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

impl Cell {
    pub fn label(&self) -> String {
        column_label(self.method, self.scenario)
    }

    pub fn is_ok(&self) -> bool {
        self.report.is_some()
    }
}

pub fn column_label(method: Method, scenario: Option<Scenario>) -> String {
    match (method, scenario) {
        (Method::Naive, _) => "Naive".into(),
        (Method::Weighted, _) => "Weighted".into(),
        (Method::Mi, Some(s)) => s.as_str().into(),
        (Method::Mi, None) => "MI".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEntry {
    pub scenario: Scenario,
    pub outcome: String,
    pub diagnostic: Option<EfficiencyDiagnostic>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub scenario: Scenario,
    pub outcome: String,
    pub rows: Option<Vec<CorrelationSummary>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub cells: Vec<Cell>,
    pub efficiency: Vec<EfficiencyEntry>,
    pub correlations: Vec<CorrelationEntry>,
}

impl Estimates {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }

    pub fn status(&self) -> RunStatus {
        match self.n_failed() {
            0 => RunStatus::Success,
            n if n == self.cells.len() => RunStatus::TotalFailure,
            _ => RunStatus::PartialFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    PartialFailure,
    TotalFailure,
}

fn outcome_index(name: &str) -> Option<usize> {
    name.strip_prefix('y')?.parse().ok()
}

fn truth(frame: &Frame, outcome: &str, level: Level) -> f64 {
    outcome_index(outcome)
        .and_then(|k| population_mean(frame, k, level).ok())
        .unwrap_or(f64::NAN)
}

fn cell(
    method: Method,
    scenario: Option<Scenario>,
    outcome: &str,
    level: Level,
    truth: f64,
    result: std::result::Result<EstimateReport, String>,
) -> Cell {
    let (report, error) = match result {
        Ok(mut r) => {
            r.scenario = scenario;
            (Some(r), None)
        }
        Err(e) => (None, Some(e)),
    };
    Cell {
        method,
        scenario,
        outcome: outcome.to_string(),
        level,
        truth,
        report,
        error,
    }
}

/// Every requested estimate, plus efficiency and correlation diagnostics
/// for each scenario that imputed successfully.
pub fn estimate(
    config: &ExperimentConfig,
    frame: &Frame,
    draw: &SampleDraw,
    study: &StudyDataset,
    imputations: &[ScenarioImputation],
) -> Estimates {
    let outcomes = config.outcomes();
    let mut cells = Vec::new();
    for outcome in &outcomes {
        for &level in &config.levels {
            let t = truth(frame, outcome, level);
            for &method in &config.methods {
                match method {
                    Method::Naive => cells.push(cell(
                        method,
                        None,
                        outcome,
                        level,
                        t,
                        naive_mean_at(study, outcome, level).map_err(|e| e.to_string()),
                    )),
                    Method::Weighted => cells.push(cell(
                        method,
                        None,
                        outcome,
                        level,
                        t,
                        weighted_mean_at(study, draw, outcome, level).map_err(|e| e.to_string()),
                    )),
                    Method::Mi => {
                        for imp in imputations {
                            let result = match &imp.result {
                                Ok(set) => mi_mean_with(set, outcome, level, config.fpc)
                                    .map_err(|e| e.to_string()),
                                Err(e) => Err(format!("imputation failed: {e}")),
                            };
                            cells.push(cell(method, Some(imp.scenario), outcome, level, t, result));
                        }
                    }
                }
            }
        }
    }

    let mut efficiency = Vec::new();
    let mut correlations = Vec::new();
    for imp in imputations {
        let Ok(set) = &imp.result else { continue };
        let cols = imp.scenario.columns();
        let mut covariates = cols.frame_covariates.clone();
        covariates.extend(cols.extra_covariates.iter().cloned());
        for outcome in &outcomes {
            let (diagnostic, error) = split(efficiency_diagnostic(set, study, outcome));
            efficiency.push(EfficiencyEntry {
                scenario: imp.scenario,
                outcome: outcome.clone(),
                diagnostic,
                error,
            });
            let (rows, error) = split(correlation_summary(set, &covariates, outcome));
            correlations.push(CorrelationEntry {
                scenario: imp.scenario,
                outcome: outcome.clone(),
                rows,
                error,
            });
        }
    }
    Estimates {
        cells,
        efficiency,
        correlations,
    }
}

fn split<T>(r: survey_impute::Result<T>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Mean / S.E. per requested method column, one row per (outcome, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub config_digest: String,
    pub seeds: StageSeeds,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub outcome: String,
    pub level: Level,
    pub truth: f64,
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub error: Option<String>,
}

impl ComparisonTable {
    pub fn build(
        config: &ExperimentConfig,
        estimates: &Estimates,
        seeds: &StageSeeds,
        runtime_seconds: f64,
    ) -> Self {
        let mut columns = Vec::new();
        for &m in &config.methods {
            match m {
                Method::Mi => columns.extend(config.scenarios.iter().map(|&s| column_label(m, Some(s)))),
                _ => columns.push(column_label(m, None)),
            }
        }
        let mut rows = Vec::new();
        for outcome in config.outcomes() {
            for &level in &config.levels {
                let mine: Vec<&Cell> = estimates
                    .cells
                    .iter()
                    .filter(|c| c.outcome == outcome && c.level == level)
                    .collect();
                let cells = columns
                    .iter()
                    .map(|col| match mine.iter().find(|c| &c.label() == col) {
                        Some(c) => ComparisonCell {
                            mean: c.report.as_ref().map(|r| r.mean),
                            se: c.report.as_ref().map(|r| r.se),
                            error: c.error.clone(),
                        },
                        None => ComparisonCell {
                            mean: None,
                            se: None,
                            error: Some("not computed".into()),
                        },
                    })
                    .collect();
                rows.push(ComparisonRow {
                    truth: mine.first().map(|c| c.truth).unwrap_or(f64::NAN),
                    outcome: outcome.clone(),
                    level,
                    cells,
                });
            }
        }
        Self {
            columns,
            rows,
            config_digest: config.digest(),
            seeds: seeds.clone(),
            runtime_seconds,
        }
    }

    pub fn cell(&self, outcome: &str, level: Level, column: &str) -> Option<&ComparisonCell> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows
            .iter()
            .find(|r| r.outcome == outcome && r.level == level)
            .map(|r| &r.cells[j])
    }
}
