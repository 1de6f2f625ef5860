//! Config-driven pipeline and Monte Carlo harness over `survey-impute`.
//!
//! One TOML document ([`ExperimentConfig`]) fixes an experiment. The
//! pipeline runs generate, sample, claims, missingness, impute, and
//! estimate in order, persisting each stage under the output directory.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod replicate;
pub mod run;

pub use config::{ClaimsConfig, ExperimentConfig, StageSeeds};
pub use error::{HarnessError, Result};
pub use pipeline::{Cell, ComparisonTable, Estimates, RunStatus};
pub use replicate::{replicate_study, ReplicateStudy, SummaryRow};
pub use run::{run_pipeline, PipelineOutcome};
