//! Stage commands that persist their outputs, and the full pipeline.
//!
//! Each stage reads what earlier stages wrote under the output directory,
//! so running the stages one by one gives the same files as `run_pipeline`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use survey_impute::{io, Frame, ImputationSet, SampleDraw, Scenario, StudyDataset};

use crate::artifacts::{self, *};
use crate::config::{ExperimentConfig, StageSeeds};
use crate::error::{HarnessError, Result};
use crate::pipeline::{self, ComparisonTable, Estimates, RunStatus, ScenarioImputation};

fn write_err() -> impl FnOnce(survey_impute::Error) -> HarnessError {
    HarnessError::stage("write")
}

fn read_err() -> impl FnOnce(survey_impute::Error) -> HarnessError {
    HarnessError::stage("read")
}

fn seeds_of(config: &ExperimentConfig) -> StageSeeds {
    StageSeeds::new(config.base_seed, 0)
}

fn manifest(dir: &Path, command: &str, config: &ExperimentConfig, started: Instant) -> Result<()> {
    artifacts::write_manifest(
        dir,
        command,
        config,
        vec![seeds_of(config)],
        started.elapsed().as_secs_f64(),
    )
    .map(|_| ())
}

pub fn run_generate(config: &ExperimentConfig, out: &Path) -> Result<Frame> {
    let t = Instant::now();
    let frame = pipeline::generate(config, &seeds_of(config))?;
    let dir = out.join(FRAME_DIR);
    io::write_frame(&dir, &frame).map_err(write_err())?;
    manifest(&dir, "generate", config, t)?;
    Ok(frame)
}

fn load_frame(out: &Path) -> Result<Frame> {
    io::read_frame(&out.join(FRAME_DIR)).map_err(read_err())
}

pub fn run_sample(config: &ExperimentConfig, out: &Path) -> Result<SampleDraw> {
    let t = Instant::now();
    let frame = load_frame(out)?;
    let draw = pipeline::sample(config, &frame, &seeds_of(config))?;
    let dir = out.join(SAMPLE_DIR);
    io::write_sample(&dir, &draw).map_err(write_err())?;
    manifest(&dir, "sample", config, t)?;
    Ok(draw)
}

pub fn run_claims(config: &ExperimentConfig, out: &Path) -> Result<pipeline::ClaimsLink> {
    let t = Instant::now();
    let frame = load_frame(out)?;
    let link = pipeline::link_claims(config, &frame, &seeds_of(config))?;
    let dir = out.join(CLAIMS_DIR);
    io::write_beneficiaries(&dir.join(io::BENEFICIARIES_CSV), &link.beneficiaries)
        .map_err(write_err())?;
    io::write_aggregates(&dir.join(io::AGGREGATES_CSV), &link.aggregates).map_err(write_err())?;
    manifest(&dir, "claims", config, t)?;
    Ok(link)
}

pub fn run_missingness(config: &ExperimentConfig, out: &Path) -> Result<StudyDataset> {
    let t = Instant::now();
    let frame = load_frame(out)?;
    let draw = io::read_sample(&out.join(SAMPLE_DIR), &frame).map_err(read_err())?;
    let aggregates =
        io::read_aggregates(&out.join(CLAIMS_DIR).join(io::AGGREGATES_CSV)).map_err(read_err())?;
    let study = pipeline::respond(config, &frame, &draw, &aggregates, &seeds_of(config))?;
    let dir = out.join(STUDY_DIR);
    io::write_study(&dir, &study).map_err(write_err())?;
    manifest(&dir, "missingness", config, t)?;
    Ok(study)
}

fn persist_imputation(config: &ExperimentConfig, out: &Path, imp: &ScenarioImputation, t: Instant) -> Result<()> {
    let dir = imputation_dir(out, imp.scenario);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    match &imp.result {
        Ok(set) => io::write_imputations(&dir, set).map_err(write_err())?,
        Err(e) => {
            let path = dir.join(IMPUTATION_ERROR_TXT);
            fs::write(&path, format!("{e}\n")).map_err(HarnessError::io(path))?
        }
    }
    manifest(&dir, "impute", config, t)
}

/// Imputes every configured scenario. A failed scenario leaves an error
/// file instead of datasets and does not stop the others.
pub fn run_impute(config: &ExperimentConfig, out: &Path) -> Result<Vec<ScenarioImputation>> {
    let study = io::read_study(&out.join(STUDY_DIR)).map_err(read_err())?;
    let seeds = seeds_of(config);
    let mut all = Vec::new();
    if !config.methods.contains(&survey_impute::Method::Mi) {
        return Ok(all);
    }
    for &scenario in &config.scenarios {
        let t = Instant::now();
        let imp = ScenarioImputation {
            scenario,
            result: pipeline::impute(config, &study, scenario, &seeds).map_err(|e| e.to_string()),
        };
        persist_imputation(config, out, &imp, t)?;
        all.push(imp);
    }
    Ok(all)
}

fn load_imputation(out: &Path, scenario: Scenario, study: &StudyDataset) -> Result<ScenarioImputation> {
    let dir = imputation_dir(out, scenario);
    let err_path = dir.join(IMPUTATION_ERROR_TXT);
    let result = if err_path.exists() {
        let msg = fs::read_to_string(&err_path).map_err(HarnessError::io(&err_path))?;
        Err(msg.trim_end().to_string())
    } else {
        Ok::<ImputationSet, String>(io::read_imputations(&dir, study).map_err(read_err())?)
    };
    Ok(ScenarioImputation { scenario, result })
}

/// Outcome of an estimation: the table, every cell, and the run status.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub table: ComparisonTable,
    pub estimates: Estimates,
    pub status: RunStatus,
}

fn finish_estimates(
    config: &ExperimentConfig,
    out: &Path,
    estimates: Estimates,
    command: &str,
    t: Instant,
) -> Result<PipelineOutcome> {
    let seeds = seeds_of(config);
    let table = ComparisonTable::build(config, &estimates, &seeds, t.elapsed().as_secs_f64());
    write_reports(out, &estimates, &table)?;
    manifest(out, command, config, t)?;
    Ok(PipelineOutcome {
        status: estimates.status(),
        table,
        estimates,
    })
}

pub fn run_estimate(config: &ExperimentConfig, out: &Path) -> Result<PipelineOutcome> {
    let t = Instant::now();
    let frame = load_frame(out)?;
    let draw = io::read_sample(&out.join(SAMPLE_DIR), &frame).map_err(read_err())?;
    let study = io::read_study(&out.join(STUDY_DIR)).map_err(read_err())?;
    let mut imputations = Vec::new();
    if config.methods.contains(&survey_impute::Method::Mi) {
        for &s in &config.scenarios {
            imputations.push(load_imputation(out, s, &study)?);
        }
    }
    let estimates = pipeline::estimate(config, &frame, &draw, &study, &imputations);
    finish_estimates(config, out, estimates, "estimate", t)
}

/// Runs every stage in order under `config.output_dir`, persisting each
/// intermediate dataset, and writes the reports at its root.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let t = Instant::now();
    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let seeds = seeds_of(config);

    let frame = pipeline::generate(config, &seeds)?;
    let dir = out.join(FRAME_DIR);
    io::write_frame(&dir, &frame).map_err(write_err())?;
    manifest(&dir, "run", config, t)?;

    let draw = pipeline::sample(config, &frame, &seeds)?;
    let dir = out.join(SAMPLE_DIR);
    io::write_sample(&dir, &draw).map_err(write_err())?;
    manifest(&dir, "run", config, t)?;

    let link = pipeline::link_claims(config, &frame, &seeds)?;
    let dir = out.join(CLAIMS_DIR);
    io::write_beneficiaries(&dir.join(io::BENEFICIARIES_CSV), &link.beneficiaries)
        .map_err(write_err())?;
    io::write_aggregates(&dir.join(io::AGGREGATES_CSV), &link.aggregates).map_err(write_err())?;
    manifest(&dir, "run", config, t)?;

    let study = pipeline::respond(config, &frame, &draw, &link.aggregates, &seeds)?;
    let dir = out.join(STUDY_DIR);
    io::write_study(&dir, &study).map_err(write_err())?;
    manifest(&dir, "run", config, t)?;

    let imputations = pipeline::impute_all(config, &study, &seeds);
    for imp in &imputations {
        persist_imputation(config, out, imp, t)?;
    }

    let estimates = pipeline::estimate(config, &frame, &draw, &study, &imputations);
    finish_estimates(config, out, estimates, "run", t)
}
