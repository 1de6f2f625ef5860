//! Monte Carlo replication over a fixed population.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use survey_impute::claims::ClaimsAggregate;
use survey_impute::io::{self, fmt_f64};
use survey_impute::{Frame, Level, Method, Scenario};

use crate::artifacts::{self, *};
use crate::config::{ExperimentConfig, StageSeeds};
use crate::error::{HarnessError, Result};
use crate::pipeline::{self, Cell, ComparisonTable, Estimates};

/// Fewest replicates for which the summary statistics are reported.
pub const MIN_REPLICATES: usize = 30;

pub const REPLICATES_DIR: &str = "replicates";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const EFFICIENCY_SUMMARY_CSV: &str = "efficiency_summary.csv";
pub const REPLICATES_CSV: &str = "replicates.csv";

pub fn replicate_dir(out: &Path, replicate: usize) -> PathBuf {
    out.join(REPLICATES_DIR).join(format!("rep_{replicate:04}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seeds: StageSeeds,
    /// Empty when the replicate failed before estimation.
    pub estimates: Option<Estimates>,
    pub error: Option<String>,
}

/// Accuracy of one (method, scenario, outcome, level) across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub scenario: Option<Scenario>,
    pub outcome: String,
    pub level: Level,
    pub truth: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Standard deviation of the estimates across replicates.
    pub empirical_se: f64,
    pub mean_se: f64,
    pub median_se: f64,
    /// Share of replicates with |estimate - truth| <= 2 se.
    pub coverage: f64,
}

/// How often every per-dataset ratio fell below the size ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummaryRow {
    pub scenario: Scenario,
    pub outcome: String,
    pub n_ok: usize,
    pub all_below_rate: f64,
    pub mean_size_ratio: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateStudy {
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
    pub efficiency: Vec<EfficiencySummaryRow>,
}

impl ReplicateStudy {
    pub fn row(&self, method: Method, scenario: Option<Scenario>, outcome: &str, level: Level) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.method == method && r.scenario == scenario && r.outcome == outcome && r.level == level
        })
    }

    pub fn n_failed_replicates(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

type CellKey = (Method, Option<Scenario>, String, Level);

fn key(c: &Cell) -> CellKey {
    (c.method, c.scenario, c.outcome.clone(), c.level)
}

/// Reduces replicate records to one row per cell key, in first-seen order.
/// A replicate that failed outright counts as failed for every key.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(CellKey, f64)> = Vec::new();
    for r in records {
        for c in r.estimates.iter().flat_map(|e| &e.cells) {
            let k = key(c);
            if !keys.iter().any(|(x, _)| x == &k) {
                keys.push((k, c.truth));
            }
        }
    }
    keys.into_iter()
        .map(|(k, truth)| {
            let mut est = Vec::new();
            let mut ses = Vec::new();
            let mut covered = 0;
            for r in records {
                let found = r
                    .estimates
                    .iter()
                    .flat_map(|e| &e.cells)
                    .find(|c| key(c) == k)
                    .and_then(|c| c.report.as_ref());
                if let Some(rep) = found {
                    est.push(rep.mean);
                    ses.push(rep.se);
                    if (rep.mean - truth).abs() <= 2.0 * rep.se {
                        covered += 1;
                    }
                }
            }
            let m = mean(&est);
            SummaryRow {
                method: k.0,
                scenario: k.1,
                outcome: k.2,
                level: k.3,
                truth,
                n_ok: est.len(),
                n_failed: records.len() - est.len(),
                mean_estimate: m,
                bias: m - truth,
                empirical_se: sd(&est),
                mean_se: mean(&ses),
                median_se: median(&ses),
                coverage: if est.is_empty() {
                    f64::NAN
                } else {
                    covered as f64 / est.len() as f64
                },
            }
        })
        .collect()
}

pub fn summarize_efficiency(records: &[ReplicateRecord]) -> Vec<EfficiencySummaryRow> {
    let mut keys: Vec<(Scenario, String)> = Vec::new();
    for r in records {
        for e in r.estimates.iter().flat_map(|e| &e.efficiency) {
            let k = (e.scenario, e.outcome.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.into_iter()
        .map(|(scenario, outcome)| {
            let diags: Vec<_> = records
                .iter()
                .flat_map(|r| r.estimates.iter().flat_map(|e| &e.efficiency))
                .filter(|e| e.scenario == scenario && e.outcome == outcome)
                .filter_map(|e| e.diagnostic.as_ref())
                .collect();
            let n = diags.len();
            let below = diags.iter().filter(|d| d.all_below_size_ratio()).count();
            let ratios: Vec<f64> = diags.iter().flat_map(|d| d.per_imputation_ratio.iter().copied()).collect();
            EfficiencySummaryRow {
                scenario,
                outcome,
                n_ok: n,
                all_below_rate: if n == 0 { f64::NAN } else { below as f64 / n as f64 },
                mean_size_ratio: mean(&diags.iter().map(|d| d.size_ratio).collect::<Vec<_>>()),
                mean_ratio: mean(&ratios),
                max_ratio: ratios.iter().copied().fold(f64::NAN, f64::max),
            }
        })
        .collect()
}

/// The population shared by every replicate.
struct Population {
    frame: Frame,
    beneficiaries: Vec<survey_impute::claims::Beneficiary>,
    aggregates: Vec<ClaimsAggregate>,
}

fn run_one(config: &ExperimentConfig, pop: &Population, replicate: usize, out: &Path) -> Result<Estimates> {
    let t = Instant::now();
    let seeds = StageSeeds::new(config.base_seed, replicate);
    let draw = pipeline::sample(config, &pop.frame, &seeds)?;
    let study = pipeline::respond(config, &pop.frame, &draw, &pop.aggregates, &seeds)?;
    let imputations = pipeline::impute_all(config, &study, &seeds);
    let estimates = pipeline::estimate(config, &pop.frame, &draw, &study, &imputations);

    let dir = replicate_dir(out, replicate);
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let write = || HarnessError::stage("write");
    if config.keep_replicate_artifacts {
        io::write_sample(&dir.join(SAMPLE_DIR), &draw).map_err(write())?;
        io::write_study(&dir.join(STUDY_DIR), &study).map_err(write())?;
        for imp in &imputations {
            if let Ok(set) = &imp.result {
                io::write_imputations(&imputation_dir(&dir, imp.scenario), set).map_err(write())?;
            }
        }
        let table = ComparisonTable::build(config, &estimates, &seeds, t.elapsed().as_secs_f64());
        write_reports(&dir, &estimates, &table)?;
    } else {
        write_estimates_csv(&dir.join(ESTIMATES_CSV), &estimates)?;
    }
    artifacts::write_manifest(&dir, "replicate", config, vec![seeds], t.elapsed().as_secs_f64())?;
    Ok(estimates)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "replicate panicked".into()
    }
}

/// Runs `config.replicates` replicates on `workers` threads under
/// `config.output_dir`. The frame and claims population are built once;
/// each replicate draws its own sample, response, and imputations from
/// `hash(base_seed, replicate)`. A failing or panicking replicate is
/// recorded and the others continue.
pub fn replicate_study(config: &ExperimentConfig, workers: usize) -> Result<ReplicateStudy> {
    config.validate()?;
    if config.replicates < MIN_REPLICATES {
        return Err(HarnessError::Config(format!(
            "`replicates` must be at least {MIN_REPLICATES} for a replication study"
        )));
    }
    if workers < 1 {
        return Err(HarnessError::Config("`workers` must be at least 1".into()));
    }
    let t = Instant::now();
    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;

    let seeds0 = StageSeeds::new(config.base_seed, 0);
    let frame = pipeline::generate(config, &seeds0)?;
    let link = pipeline::link_claims(config, &frame, &seeds0)?;
    let pop = Population {
        frame,
        beneficiaries: link.beneficiaries,
        aggregates: link.aggregates,
    };
    io::write_frame(&out.join(FRAME_DIR), &pop.frame).map_err(HarnessError::stage("write"))?;
    if config.keep_replicate_artifacts {
        let dir = out.join(CLAIMS_DIR);
        io::write_beneficiaries(&dir.join(io::BENEFICIARIES_CSV), &pop.beneficiaries)
            .map_err(HarnessError::stage("write"))?;
        io::write_aggregates(&dir.join(io::AGGREGATES_CSV), &pop.aggregates)
            .map_err(HarnessError::stage("write"))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|replicate| {
                let seeds = StageSeeds::new(config.base_seed, replicate);
                let outcome = catch_unwind(AssertUnwindSafe(|| run_one(config, &pop, replicate, out)));
                let (estimates, error) = match outcome {
                    Ok(Ok(e)) => (Some(e), None),
                    Ok(Err(e)) => (None, Some(e.to_string())),
                    Err(p) => (None, Some(format!("panic: {}", panic_message(p)))),
                };
                ReplicateRecord {
                    replicate,
                    seeds,
                    estimates,
                    error,
                }
            })
            .collect()
    });

    let study = ReplicateStudy {
        summary: summarize(&records),
        efficiency: summarize_efficiency(&records),
        records,
    };
    write_summary(out, &study)?;
    let seeds = study.records.iter().map(|r| r.seeds.clone()).collect();
    artifacts::write_manifest(out, "replicate", config, seeds, t.elapsed().as_secs_f64())?;
    Ok(study)
}

fn write_summary(out: &Path, study: &ReplicateStudy) -> Result<()> {
    let err = |e: csv::Error| HarnessError::Stage {
        stage: "write",
        source: e.into(),
    };
    let path = out.join(SUMMARY_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record([
        "method", "scenario", "outcome", "level", "truth", "n_ok", "n_failed", "mean_estimate",
        "bias", "empirical_se", "mean_se", "median_se", "coverage",
    ])
    .map_err(err)?;
    for r in &study.summary {
        w.write_record([
            r.method.as_str().to_string(),
            r.scenario.map(|s| s.as_str().to_string()).unwrap_or_default(),
            r.outcome.clone(),
            r.level.as_str().to_string(),
            fmt_f64(r.truth),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            fmt_f64(r.mean_estimate),
            fmt_f64(r.bias),
            fmt_f64(r.empirical_se),
            fmt_f64(r.mean_se),
            fmt_f64(r.median_se),
            fmt_f64(r.coverage),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(HarnessError::io(&path))?;

    let path = out.join(EFFICIENCY_SUMMARY_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record([
        "scenario", "outcome", "n_ok", "all_below_rate", "mean_size_ratio", "mean_ratio", "max_ratio",
    ])
    .map_err(err)?;
    for r in &study.efficiency {
        w.write_record([
            r.scenario.as_str().to_string(),
            r.outcome.clone(),
            r.n_ok.to_string(),
            fmt_f64(r.all_below_rate),
            fmt_f64(r.mean_size_ratio),
            fmt_f64(r.mean_ratio),
            fmt_f64(r.max_ratio),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(HarnessError::io(&path))?;

    let path = out.join(REPLICATES_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(["replicate", "seed", "status", "failed_cells", "error"])
        .map_err(err)?;
    for r in &study.records {
        let (status, failed) = match (&r.estimates, &r.error) {
            (Some(e), _) => (format!("{:?}", e.status()), e.n_failed().to_string()),
            (None, _) => ("Error".to_string(), String::new()),
        };
        w.write_record([
            r.replicate.to_string(),
            r.seeds.replicate_seed.to_string(),
            status,
            failed,
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(HarnessError::io(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use survey_impute::EstimateReport;

    fn record(replicate: usize, mean: f64, se: f64, truth: f64) -> ReplicateRecord {
        let report = EstimateReport {
            method: Method::Naive,
            scenario: None,
            outcome: "y0".into(),
            level: Level::Practice,
            mean,
            se,
            n_used: 10,
            components: None,
        };
        ReplicateRecord {
            replicate,
            seeds: StageSeeds::new(1, replicate),
            estimates: Some(Estimates {
                cells: vec![Cell {
                    method: Method::Naive,
                    scenario: None,
                    outcome: "y0".into(),
                    level: Level::Practice,
                    truth,
                    report: Some(report),
                    error: None,
                }],
                efficiency: vec![],
                correlations: vec![],
            }),
            error: None,
        }
    }

    #[test]
    fn oracle_estimator_has_no_bias_and_full_coverage() {
        let records: Vec<_> = (0..40).map(|r| record(r, 2.5, 0.1, 2.5)).collect();
        let s = summarize(&records);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].bias, 0.0);
        assert_eq!(s[0].coverage, 1.0);
        assert_eq!(s[0].empirical_se, 0.0);
        assert_eq!(s[0].n_ok, 40);
    }

    #[test]
    fn failed_replicates_count_against_every_cell() {
        let mut records: Vec<_> = (0..3).map(|r| record(r, 1.0 + r as f64, 0.5, 2.0)).collect();
        records.push(ReplicateRecord {
            replicate: 3,
            seeds: StageSeeds::new(1, 3),
            estimates: None,
            error: Some("boom".into()),
        });
        let s = &summarize(&records)[0];
        assert_eq!(s.n_ok, 3);
        assert_eq!(s.n_failed, 1);
        assert_eq!(s.mean_estimate, 2.0);
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.empirical_se, 1.0);
        // |1 - 2| <= 1 and |3 - 2| <= 1 cover, 2 covers
        assert_eq!(s.coverage, 1.0);
        assert_eq!(s.median_se, 0.5);
    }

    #[test]
    fn too_few_replicates_is_a_config_error() {
        let config = ExperimentConfig {
            replicates: 5,
            ..ExperimentConfig::default()
        };
        assert!(replicate_study(&config, 1).unwrap_err().is_config());
    }
}
