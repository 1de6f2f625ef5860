//! Survey inference for clustered health-organization frames.
//!
//! The crate covers the full path from a synthetic three-level sampling
//! frame to finite-population mean estimates:
//!
//! - [`frame`]: the parent / subsidiary / practice hierarchy and its generator
//! - [`sampling`]: multi-stage cluster designs, inclusion probabilities, weights
//! - [`claims`]: beneficiary claims, plurality attribution, practice aggregates
//! - [`missingness`]: calibrated MAR unit non-response and the study dataset
//! - [`impute`]: multilevel joint-model multiple imputation (Gibbs sampler)
//! - [`estimators`]: naive, design-weighted, and multiply-imputed means
//! - [`io`]: CSV / JSON file formats for every artifact

pub mod claims;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod frame;
pub mod impute;
pub mod io;
pub mod missingness;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use frame::{
    generate_frame, population_mean, CorporateParent, Frame, GeneratorConfig, Level,
    OwnerSubsidiary, ParentId, Practice, PracticeId, SubsidiaryId, FRAME_COVARIATES,
};
pub use sampling::{
    compute_stage_probabilities, draw_sample, draw_sample_with_probabilities, DesignKind,
    DesignSpec, SampleDraw, SelectedPractice, StageMethod, StageProbabilities,
    StageProbabilitySpec, Unit,
};
pub use dataset::{Column, ColumnRole, LevelResponses, StudyDataset};
pub use missingness::{apply_missingness, calibrate_response_model, ResponseModel};
pub use impute::{
    gibbs_impute, two_step_impute, ImputationModelSpec, ImputationSet, Scenario,
};
pub use estimators::{
    correlation_summary, efficiency_diagnostic, mi_mean, naive_mean, pool_rubin, weighted_mean,
    CorrelationSummary, EfficiencyDiagnostic, EstimateReport, Method, PoolComponents,
};
