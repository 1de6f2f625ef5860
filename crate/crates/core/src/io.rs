//! File formats. Tables are CSV with headers; metadata is JSON.
//!
//! Missing numeric cells are written as empty fields. Floats use the
//! shortest representation that parses back to the same value, so a
//! write/read round trip is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::claims::{Beneficiary, ClaimsAggregate, TinVisits};
use crate::dataset::{Column, ColumnRole, LevelResponses, StudyDataset};
use crate::error::{Error, Result};
use crate::estimators::{CorrelationSummary, EfficiencyDiagnostic, EstimateReport};
use crate::frame::{
    CorporateParent, Frame, GeneratorConfig, OwnerSubsidiary, ParentId, Practice, PracticeId,
    SubsidiaryId,
};
use crate::impute::{ChainDiagnostics, ImputationSet};
use crate::sampling::{DesignKind, SampleDraw, SelectedPractice, Unit};

pub const PARENTS_CSV: &str = "parents.csv";
pub const SUBSIDIARIES_CSV: &str = "subsidiaries.csv";
pub const PRACTICES_CSV: &str = "practices.csv";
pub const FRAME_META_JSON: &str = "frame_meta.json";
pub const SAMPLE_CSV: &str = "sample.csv";
pub const SAMPLE_UNITS_CSV: &str = "sample_units.csv";
pub const SAMPLE_META_JSON: &str = "sample_meta.json";
pub const BENEFICIARIES_CSV: &str = "beneficiaries.csv";
pub const AGGREGATES_CSV: &str = "claims_aggregates.csv";
pub const STUDY_CSV: &str = "study.csv";
pub const MASK_CSV: &str = "mask.csv";
pub const STUDY_META_JSON: &str = "study_meta.json";
pub const IMPUTATION_META_JSON: &str = "diagnostics.json";

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what} `{field}`")))
}

fn parse_opt<T: std::str::FromStr>(field: &str, what: &str) -> Result<Option<T>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse(field, what).map(Some)
    }
}

fn parse_bool01(field: &str, what: &str) -> Result<bool> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Parse(format!("bad {what} `{other}` (expected 0 or 1)"))),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Parse(format!("cannot open {}: {e}", path.display())),
        _ => Error::Csv(e),
    })
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| Error::Parse(format!("row has {} fields, need {}", rec.len(), i + 1)))
}

fn expect_header(rdr: &mut csv::Reader<fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let h = rdr.headers()?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            h.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&s)?)
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    seed: u64,
    generation_config: GeneratorConfig,
}

pub fn write_frame(dir: &Path, frame: &Frame) -> Result<()> {
    let mut w = writer(&dir.join(PARENTS_CSV))?;
    w.write_record(["id", "nach", "nmg", "nos", "pertot"])?;
    for p in &frame.parents {
        w.write_record([
            p.id.to_string(),
            p.nach.to_string(),
            p.nmg.to_string(),
            p.nos.to_string(),
            fmt_f64(p.pertot),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(SUBSIDIARIES_CSV))?;
    w.write_record(["id", "parent_id", "latent_trait"])?;
    for s in &frame.subsidiaries {
        w.write_record([s.id.to_string(), s.parent_id.to_string(), fmt_f64(s.latent_trait)])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(PRACTICES_CSV))?;
    w.write_record(["id", "os_id", "np", "npcp", "tin", "true_outcomes"])?;
    for p in &frame.practices {
        let outcomes: Vec<String> = p.true_outcomes.iter().map(|v| fmt_f64(*v)).collect();
        w.write_record([
            p.id.to_string(),
            fmt_opt(p.os_id),
            p.np.to_string(),
            p.npcp.to_string(),
            p.tin.clone(),
            outcomes.join(";"),
        ])?;
    }
    w.flush()?;

    write_json(
        &dir.join(FRAME_META_JSON),
        &FrameMeta {
            seed: frame.seed,
            generation_config: frame.generation_config.clone(),
        },
    )
}

pub fn read_frame(dir: &Path) -> Result<Frame> {
    let meta: FrameMeta = read_json(&dir.join(FRAME_META_JSON))?;

    let path = dir.join(PARENTS_CSV);
    let mut r = reader(&path)?;
    expect_header(&mut r, &["id", "nach", "nmg", "nos", "pertot"], &path)?;
    let mut parents = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        parents.push(CorporateParent {
            id: ParentId(parse(field(&rec, 0)?, "parent id")?),
            nach: parse(field(&rec, 1)?, "nach")?,
            nmg: parse(field(&rec, 2)?, "nmg")?,
            nos: parse(field(&rec, 3)?, "nos")?,
            pertot: parse(field(&rec, 4)?, "pertot")?,
        });
    }

    let path = dir.join(SUBSIDIARIES_CSV);
    let mut r = reader(&path)?;
    expect_header(&mut r, &["id", "parent_id", "latent_trait"], &path)?;
    let mut subsidiaries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        subsidiaries.push(OwnerSubsidiary {
            id: SubsidiaryId(parse(field(&rec, 0)?, "subsidiary id")?),
            parent_id: ParentId(parse(field(&rec, 1)?, "parent id")?),
            latent_trait: parse(field(&rec, 2)?, "latent_trait")?,
        });
    }

    let path = dir.join(PRACTICES_CSV);
    let mut r = reader(&path)?;
    expect_header(&mut r, &["id", "os_id", "np", "npcp", "tin", "true_outcomes"], &path)?;
    let mut practices = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let outcomes = field(&rec, 5)?;
        let true_outcomes = if outcomes.is_empty() {
            Vec::new()
        } else {
            outcomes
                .split(';')
                .map(|v| parse(v, "outcome"))
                .collect::<Result<_>>()?
        };
        practices.push(Practice {
            id: PracticeId(parse(field(&rec, 0)?, "practice id")?),
            os_id: parse_opt::<u32>(field(&rec, 1)?, "os_id")?.map(SubsidiaryId),
            np: parse(field(&rec, 2)?, "np")?,
            npcp: parse(field(&rec, 3)?, "npcp")?,
            tin: field(&rec, 4)?.to_string(),
            true_outcomes,
        });
    }
    let frame = Frame {
        parents,
        subsidiaries,
        practices,
        generation_config: meta.generation_config,
        seed: meta.seed,
    };
    frame.validate()?;
    Ok(frame)
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    design: DesignKind,
    n_selected: usize,
}

/// Writes `sample.csv` (probabilities and weights) and `sample_units.csv`
/// (stratum and first-stage unit of each selected practice).
pub fn write_sample(dir: &Path, draw: &SampleDraw) -> Result<()> {
    let mut w = writer(&dir.join(SAMPLE_CSV))?;
    w.write_record(["practice_id", "pi1", "pi2", "pi3", "pi_final", "weight"])?;
    for r in &draw.practices {
        w.write_record([
            r.practice_id.to_string(),
            fmt_f64(r.pi1),
            fmt_f64(r.pi2),
            fmt_f64(r.pi3),
            fmt_f64(r.pi_final),
            fmt_f64(r.weight),
        ])?;
    }
    w.flush()?;
    let mut w = writer(&dir.join(SAMPLE_UNITS_CSV))?;
    w.write_record(["practice_id", "stratum", "psu_level", "psu_id"])?;
    for r in &draw.practices {
        w.write_record([
            r.practice_id.to_string(),
            r.stratum.to_string(),
            r.psu.level_name().to_string(),
            r.psu.raw_id().to_string(),
        ])?;
    }
    w.flush()?;
    write_json(
        &dir.join(SAMPLE_META_JSON),
        &SampleMeta {
            design: draw.design,
            n_selected: draw.practices.len(),
        },
    )
}

pub fn read_sample(dir: &Path, frame: &Frame) -> Result<SampleDraw> {
    let meta: SampleMeta = read_json(&dir.join(SAMPLE_META_JSON))?;
    let path = dir.join(SAMPLE_UNITS_CSV);
    let mut r = reader(&path)?;
    expect_header(&mut r, &["practice_id", "stratum", "psu_level", "psu_id"], &path)?;
    let mut units: BTreeMap<u32, (u32, Unit)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id: u32 = parse(field(&rec, 0)?, "practice id")?;
        let psu = Unit::from_parts(field(&rec, 2)?, parse(field(&rec, 3)?, "psu id")?)?;
        units.insert(id, (parse(field(&rec, 1)?, "stratum")?, psu));
    }
    let path = dir.join(SAMPLE_CSV);
    let mut r = reader(&path)?;
    expect_header(
        &mut r,
        &["practice_id", "pi1", "pi2", "pi3", "pi_final", "weight"],
        &path,
    )?;
    let mut records = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id: u32 = parse(field(&rec, 0)?, "practice id")?;
        let (stratum, psu) = units
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Parse(format!("practice {id} missing from {SAMPLE_UNITS_CSV}")))?;
        records.push(SelectedPractice {
            practice_id: PracticeId(id),
            pi1: parse(field(&rec, 1)?, "pi1")?,
            pi2: parse(field(&rec, 2)?, "pi2")?,
            pi3: parse(field(&rec, 3)?, "pi3")?,
            pi_final: parse(field(&rec, 4)?, "pi_final")?,
            weight: parse(field(&rec, 5)?, "weight")?,
            stratum,
            psu,
        });
    }
    if records.len() != meta.n_selected {
        return Err(Error::Parse(format!(
            "{SAMPLE_CSV} has {} rows, metadata says {}",
            records.len(),
            meta.n_selected
        )));
    }
    let mut draw = SampleDraw::from_records(meta.design, records);
    draw.restore_unit_maps(frame)?;
    Ok(draw)
}

const BENEFICIARY_HEADER: [&str; 14] = [
    "id",
    "age",
    "female",
    "income",
    "race",
    "rural",
    "partial_dual",
    "full_dual",
    "hcc_count",
    "admissions",
    "depression",
    "smi",
    "region",
    "visit_tins",
];

fn enum_str<T: Serialize>(v: &T) -> Result<String> {
    match serde_json::to_value(v)? {
        serde_json::Value::String(s) => Ok(s),
        other => Err(Error::Parse(format!("unexpected enum encoding {other}"))),
    }
}

fn enum_parse<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

/// Visits are encoded as `tin:count` pairs joined by `;`.
pub fn write_beneficiaries(path: &Path, beneficiaries: &[Beneficiary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENEFICIARY_HEADER)?;
    for b in beneficiaries {
        let visits: Vec<String> = b
            .visit_tins
            .iter()
            .map(|v| format!("{}:{}", v.tin, v.count))
            .collect();
        w.write_record([
            b.id.to_string(),
            fmt_f64(b.age),
            b.female.to_string(),
            fmt_f64(b.income),
            enum_str(&b.race)?,
            b.rural.to_string(),
            b.partial_dual.to_string(),
            b.full_dual.to_string(),
            b.hcc_count.to_string(),
            b.admissions.to_string(),
            b.depression.to_string(),
            b.smi.to_string(),
            enum_str(&b.region)?,
            visits.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beneficiaries(path: &Path) -> Result<Vec<Beneficiary>> {
    let mut r = reader(path)?;
    expect_header(&mut r, &BENEFICIARY_HEADER, path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let visits = field(&rec, 13)?;
        let visit_tins = if visits.is_empty() {
            Vec::new()
        } else {
            visits
                .split(';')
                .map(|v| {
                    let (tin, count) = v
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("bad visit `{v}`")))?;
                    Ok(TinVisits {
                        tin: tin.to_string(),
                        count: parse(count, "visit count")?,
                    })
                })
                .collect::<Result<_>>()?
        };
        out.push(Beneficiary {
            id: parse(field(&rec, 0)?, "beneficiary id")?,
            age: parse(field(&rec, 1)?, "age")?,
            female: parse(field(&rec, 2)?, "female")?,
            income: parse(field(&rec, 3)?, "income")?,
            race: enum_parse(field(&rec, 4)?, "race")?,
            rural: parse(field(&rec, 5)?, "rural")?,
            partial_dual: parse(field(&rec, 6)?, "partial_dual")?,
            full_dual: parse(field(&rec, 7)?, "full_dual")?,
            hcc_count: parse(field(&rec, 8)?, "hcc_count")?,
            admissions: parse(field(&rec, 9)?, "admissions")?,
            depression: parse(field(&rec, 10)?, "depression")?,
            smi: parse(field(&rec, 11)?, "smi")?,
            region: enum_parse(field(&rec, 12)?, "region")?,
            visit_tins,
        });
    }
    Ok(out)
}

pub fn write_aggregates(path: &Path, aggregates: &[ClaimsAggregate]) -> Result<()> {
    let mut w = writer(path)?;
    for a in aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregates(path: &Path) -> Result<Vec<ClaimsAggregate>> {
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ColumnMeta {
    name: String,
    role: ColumnRole,
}

#[derive(Serialize, Deserialize)]
struct StudyMeta {
    columns: Vec<ColumnMeta>,
    level_responses: LevelResponses,
}

const STUDY_KEYS: [&str; 5] = ["practice_id", "os_id", "parent_id", "selected", "responded"];

fn write_study_values(path: &Path, ds: &StudyDataset) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = STUDY_KEYS.to_vec();
    header.extend(ds.columns.iter().map(|c| c.name.as_str()));
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let mut row = vec![
            ds.practice_ids[i].to_string(),
            fmt_opt(ds.cluster_id[i]),
            fmt_opt(ds.parent_id[i]),
            u8::from(ds.selected[i]).to_string(),
            u8::from(ds.responded[i]).to_string(),
        ];
        for c in &ds.columns {
            row.push(if c.observed[i] { fmt_f64(c.values[i]) } else { String::new() });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `study.csv`, the companion `mask.csv` (`obs` / `mis` per cell),
/// and `study_meta.json` (column roles and unit-level responses).
pub fn write_study(dir: &Path, ds: &StudyDataset) -> Result<()> {
    write_study_values(&dir.join(STUDY_CSV), ds)?;
    let mut w = writer(&dir.join(MASK_CSV))?;
    let mut header = vec!["practice_id"];
    header.extend(ds.columns.iter().map(|c| c.name.as_str()));
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let mut row = vec![ds.practice_ids[i].to_string()];
        for c in &ds.columns {
            row.push(if c.observed[i] { "obs" } else { "mis" }.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(
        &dir.join(STUDY_META_JSON),
        &StudyMeta {
            columns: ds
                .columns
                .iter()
                .map(|c| ColumnMeta {
                    name: c.name.clone(),
                    role: c.role,
                })
                .collect(),
            level_responses: ds.level_responses.clone(),
        },
    )
}

fn read_study_values(path: &Path, columns: &[ColumnMeta]) -> Result<StudyDataset> {
    let mut r = reader(path)?;
    let mut header: Vec<&str> = STUDY_KEYS.to_vec();
    header.extend(columns.iter().map(|c| c.name.as_str()));
    expect_header(&mut r, &header, path)?;
    let (mut ids, mut clusters, mut parents, mut selected, mut responded) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); columns.len()];
    for rec in r.records() {
        let rec = rec?;
        ids.push(PracticeId(parse(field(&rec, 0)?, "practice id")?));
        clusters.push(parse_opt::<u32>(field(&rec, 1)?, "os_id")?.map(SubsidiaryId));
        parents.push(parse_opt::<u32>(field(&rec, 2)?, "parent_id")?.map(ParentId));
        selected.push(parse_bool01(field(&rec, 3)?, "selected")?);
        responded.push(parse_bool01(field(&rec, 4)?, "responded")?);
        for (j, v) in values.iter_mut().enumerate() {
            v.push(parse_opt(field(&rec, 5 + j)?, &columns[j].name)?);
        }
    }
    let cols = columns
        .iter()
        .zip(values)
        .map(|(m, v)| Column::new(m.name.clone(), m.role, v))
        .collect();
    StudyDataset::new(ids, clusters, parents, selected, responded, cols)
}

pub fn read_study(dir: &Path) -> Result<StudyDataset> {
    let meta: StudyMeta = read_json(&dir.join(STUDY_META_JSON))?;
    let mut ds = read_study_values(&dir.join(STUDY_CSV), &meta.columns)?;
    ds.level_responses = meta.level_responses;

    let path = dir.join(MASK_CSV);
    let mut r = reader(&path)?;
    let mut header = vec!["practice_id"];
    header.extend(meta.columns.iter().map(|c| c.name.as_str()));
    expect_header(&mut r, &header, &path)?;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (j, c) in ds.columns.iter().enumerate() {
            let flag = field(&rec, 1 + j)?;
            let expected = if c.observed.get(i).copied().unwrap_or(false) { "obs" } else { "mis" };
            if flag != expected {
                return Err(Error::Parse(format!(
                    "{MASK_CSV} row {i} column `{}` says `{flag}` but {STUDY_CSV} disagrees",
                    c.name
                )));
            }
        }
    }
    Ok(ds)
}

#[derive(Serialize, Deserialize)]
struct ImputationMeta {
    seed: u64,
    n_imputations: usize,
    imputed_columns: Vec<String>,
    chain_diagnostics: ChainDiagnostics,
}

pub fn imputation_file_name(d: usize) -> String {
    format!("imputation_{:02}.csv", d + 1)
}

/// Writes one CSV per completed dataset plus `diagnostics.json`.
pub fn write_imputations(dir: &Path, set: &ImputationSet) -> Result<()> {
    for (d, ds) in set.datasets.iter().enumerate() {
        write_study_values(&dir.join(imputation_file_name(d)), ds)?;
    }
    write_json(
        &dir.join(IMPUTATION_META_JSON),
        &ImputationMeta {
            seed: set.seed,
            n_imputations: set.datasets.len(),
            imputed_columns: set.imputed_columns.clone(),
            chain_diagnostics: set.chain_diagnostics.clone(),
        },
    )
}

/// Reads completed datasets written by [`write_imputations`]; `original`
/// supplies column roles, unit responses, and the pre-imputation mask.
pub fn read_imputations(dir: &Path, original: &StudyDataset) -> Result<ImputationSet> {
    let meta: ImputationMeta = read_json(&dir.join(IMPUTATION_META_JSON))?;
    let columns: Vec<ColumnMeta> = original
        .columns
        .iter()
        .map(|c| ColumnMeta {
            name: c.name.clone(),
            role: c.role,
        })
        .collect();
    let mut datasets = Vec::with_capacity(meta.n_imputations);
    for d in 0..meta.n_imputations {
        let mut ds = read_study_values(&dir.join(imputation_file_name(d)), &columns)?;
        ds.level_responses = original.level_responses.clone();
        if ds.practice_ids != original.practice_ids {
            return Err(Error::Parse(format!(
                "{} rows do not match the study dataset",
                imputation_file_name(d)
            )));
        }
        datasets.push(ds);
    }
    Ok(ImputationSet {
        datasets,
        imputed_columns: meta.imputed_columns,
        source_observed: original
            .columns
            .iter()
            .map(|c| (c.name.clone(), c.observed.clone()))
            .collect(),
        chain_diagnostics: meta.chain_diagnostics,
        seed: meta.seed,
    })
}

pub const ESTIMATE_HEADER: [&str; 12] = [
    "method",
    "scenario",
    "outcome",
    "level",
    "mean",
    "se",
    "n_used",
    "var_within",
    "var_between",
    "D",
    "status",
    "error",
];

/// One estimate row; `Err` cells keep their identifying columns and carry
/// the error message.
pub fn estimate_record(
    method: &str,
    scenario: Option<&str>,
    outcome: &str,
    level: &str,
    result: std::result::Result<&EstimateReport, &str>,
) -> Vec<String> {
    let mut row = vec![
        method.to_string(),
        scenario.unwrap_or("").to_string(),
        outcome.to_string(),
        level.to_string(),
    ];
    match result {
        Ok(r) => {
            row.push(fmt_f64(r.mean));
            row.push(fmt_f64(r.se));
            row.push(r.n_used.to_string());
            match r.components {
                Some(c) => {
                    row.push(fmt_f64(c.var_within));
                    row.push(fmt_f64(c.var_between));
                    row.push(c.d.to_string());
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            row.push("ok".into());
            row.push(String::new());
        }
        Err(msg) => {
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.push("failed".into());
            row.push(msg.to_string());
        }
    }
    row
}

pub fn write_estimates(path: &Path, reports: &[EstimateReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ESTIMATE_HEADER)?;
    for r in reports {
        w.write_record(estimate_record(
            r.method.as_str(),
            r.scenario.map(|s| s.as_str()),
            &r.outcome,
            r.level.as_str(),
            Ok(r),
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `Mean`, `S.E.`, `Ratio`; one column per completed dataset.
pub fn write_efficiency_table(path: &Path, diag: &EfficiencyDiagnostic) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![String::new()];
    header.extend((1..=diag.per_imputation_ratio.len()).map(|d| format!("Y_{d}")));
    w.write_record(&header)?;
    for (label, vals) in [
        ("Mean", &diag.per_imputation_mean),
        ("S.E.", &diag.per_imputation_se),
        ("Ratio", &diag.per_imputation_ratio),
    ] {
        let mut row = vec![label.to_string()];
        row.extend(vals.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_table(path: &Path, rows: &[CorrelationSummary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["covariate", "Y", "Minimum", "Mean", "Maximum", "St. Dev"])?;
    let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.covariate.clone(),
            f(r.y),
            f(r.minimum),
            f(r.mean),
            f(r.maximum),
            f(r.st_dev),
        ])?;
    }
    w.flush()?;
    Ok(())
}
