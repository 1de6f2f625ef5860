use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survey_impute_cli::{run, ExperimentConfig, HarnessError, RunStatus};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_TOTAL: u8 = 3;

#[derive(Parser)]
#[command(name = "survey-impute", version, about = "Survey mean estimation with multilevel multiple imputation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic frame.
    Generate(Common),
    /// Draw the multi-stage sample from the frame.
    Sample(Common),
    /// Generate beneficiaries and practice-level claims aggregates.
    Claims(Common),
    /// Apply calibrated unit non-response to build the study dataset.
    Missingness(Common),
    /// Impute every configured scenario.
    Impute(Common),
    /// Estimate means from the persisted stages.
    Estimate(Common),
    /// Run every stage in order.
    Run(Common),
    /// Monte Carlo replication over one population.
    Replicate(Common),
    /// Print the effective config as TOML.
    Config(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.base_seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    config.validate()?;
    Ok(config)
}

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Success => 0,
        RunStatus::PartialFailure => EXIT_PARTIAL,
        RunStatus::TotalFailure => EXIT_TOTAL,
    }
}

fn print_table(outcome: &run::PipelineOutcome) {
    let t = &outcome.table;
    print!("{:<8}{:<12}{:>12}", "outcome", "level", "truth");
    for c in &t.columns {
        print!("{:>24}", c);
    }
    println!();
    for r in &t.rows {
        print!("{:<8}{:<12}{:>12.4}", r.outcome, r.level.as_str(), r.truth);
        for c in &r.cells {
            match (c.mean, c.se) {
                (Some(m), Some(s)) => print!("{:>24}", format!("{m:.4} ({s:.4})")),
                _ => print!("{:>24}", "FAILED"),
            }
        }
        println!();
    }
    for c in outcome.estimates.cells.iter().filter(|c| !c.is_ok()) {
        eprintln!(
            "failed {} {} {}: {}",
            c.label(),
            c.outcome,
            c.level.as_str(),
            c.error.as_deref().unwrap_or("")
        );
    }
}

fn execute(command: Command) -> anyhow::Result<u8> {
    let common = match &command {
        Command::Generate(c)
        | Command::Sample(c)
        | Command::Claims(c)
        | Command::Missingness(c)
        | Command::Impute(c)
        | Command::Estimate(c)
        | Command::Run(c)
        | Command::Replicate(c)
        | Command::Config(c) => c.clone(),
    };
    let config = match load(&common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let out = config.output_dir.clone();
    match command {
        Command::Generate(_) => {
            let frame = run::run_generate(&config, &out)?;
            println!(
                "frame: {} parents, {} subsidiaries, {} practices",
                frame.parents.len(),
                frame.subsidiaries.len(),
                frame.practices.len()
            );
        }
        Command::Sample(_) => {
            let draw = run::run_sample(&config, &out)?;
            println!("sample: {} practices", draw.practices.len());
        }
        Command::Claims(_) => {
            let link = run::run_claims(&config, &out)?;
            println!("claims: {} beneficiaries", link.beneficiaries.len());
        }
        Command::Missingness(_) => {
            let study = run::run_missingness(&config, &out)?;
            println!("study: {} rows, {} missing cells", study.n_rows(), study.missing_cells());
        }
        Command::Impute(_) => {
            let mut failed = 0;
            for imp in run::run_impute(&config, &out)? {
                match &imp.result {
                    Ok(set) => println!("{}: {} datasets", imp.scenario, set.n_imputations()),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: failed: {e}", imp.scenario);
                    }
                }
            }
            if failed > 0 {
                return Ok(if failed == config.scenarios.len() { EXIT_TOTAL } else { EXIT_PARTIAL });
            }
        }
        Command::Estimate(_) => {
            let outcome = run::run_estimate(&config, &out)?;
            print_table(&outcome);
            return Ok(status_code(outcome.status));
        }
        Command::Run(_) => {
            let outcome = survey_impute_cli::run_pipeline(&config)?;
            print_table(&outcome);
            return Ok(status_code(outcome.status));
        }
        Command::Replicate(_) => {
            let study = survey_impute_cli::replicate_study(&config, config.workers)?;
            println!(
                "{:<10}{:<6}{:<8}{:<12}{:>6}{:>12}{:>12}{:>12}{:>10}",
                "method", "scen", "outcome", "level", "n_ok", "bias", "emp_se", "mean_se", "coverage"
            );
            for r in &study.summary {
                println!(
                    "{:<10}{:<6}{:<8}{:<12}{:>6}{:>12.5}{:>12.5}{:>12.5}{:>10.3}",
                    r.method.as_str(),
                    r.scenario.map(|s| s.as_str()).unwrap_or("-"),
                    r.outcome,
                    r.level.as_str(),
                    r.n_ok,
                    r.bias,
                    r.empirical_se,
                    r.mean_se,
                    r.coverage
                );
            }
            let failed = study.n_failed_replicates();
            if failed == study.records.len() {
                return Ok(EXIT_TOTAL);
            }
            if failed > 0 || study.summary.iter().any(|r| r.n_failed > 0) {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Config(_) => {
            print!("{}", config.to_toml()?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_TOTAL)
        }
    }
}
