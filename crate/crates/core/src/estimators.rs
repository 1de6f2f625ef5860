//! Finite-population mean estimators and their variance estimators.
//!
//! - [`naive_mean`]: complete-case mean with the simple random sampling
//!   standard error.
//! - [`weighted_mean`]: design-weighted ratio mean with a stratified
//!   ultimate-cluster (with-replacement) linearization variance.
//! - [`mi_mean`]: full-frame mean on each completed dataset, pooled with
//!   Rubin's rules ([`pool_rubin`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::frame::Level;
use crate::impute::{ImputationSet, Scenario};
use crate::sampling::{DesignKind, SampleDraw, Unit};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Weighted,
    Mi,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Weighted => "weighted",
            Method::Mi => "mi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "weighted" => Ok(Method::Weighted),
            "mi" => Ok(Method::Mi),
            other => Err(Error::config("methods", format!("unknown method `{other}`"))),
        }
    }
}

/// Within / between decomposition of a pooled variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolComponents {
    pub var_within: f64,
    pub var_between: f64,
    #[serde(rename = "D")]
    pub d: usize,
}

impl PoolComponents {
    pub fn var_total(&self) -> f64 {
        self.var_within + (1.0 + 1.0 / self.d as f64) * self.var_between
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub scenario: Option<Scenario>,
    pub outcome: String,
    pub level: Level,
    pub mean: f64,
    pub se: f64,
    pub n_used: usize,
    pub components: Option<PoolComponents>,
}

impl EstimateReport {
    /// `se^2 - var_total` for pooled reports, `None` otherwise.
    pub fn pooling_residual(&self) -> Option<f64> {
        self.components.map(|c| self.se * self.se - c.var_total())
    }
}

/// Rubin's-rules pooling of `(mean_d, var_d)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pooled {
    pub mean: f64,
    pub se: f64,
    pub components: PoolComponents,
}

pub fn pool_rubin(estimates: &[(f64, f64)]) -> Result<Pooled> {
    let d = estimates.len();
    if d < 2 {
        return Err(Error::Pooling(format!("need at least 2 estimates, got {d}")));
    }
    if estimates.iter().any(|(m, v)| !m.is_finite() || !v.is_finite() || *v < 0.0) {
        return Err(Error::Pooling("non-finite estimate or negative variance".into()));
    }
    let df = d as f64;
    // deviations from the first estimate keep identical inputs exact
    let (m0, v0) = estimates[0];
    let mean = m0 + estimates.iter().map(|e| e.0 - m0).sum::<f64>() / df;
    let var_within = v0 + estimates.iter().map(|e| e.1 - v0).sum::<f64>() / df;
    let var_between = estimates.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (df - 1.0);
    let components = PoolComponents {
        var_within,
        var_between,
        d,
    };
    Ok(Pooled {
        mean,
        se: components.var_total().sqrt(),
        components,
    })
}

struct LevelUnit {
    value: f64,
    /// A representative row of the unit.
    row: usize,
}

/// Units at `level` with their values: practices are rows; subsidiaries
/// and parents average their rows with observed `outcome`. When
/// `respondents_only`, units whose own questionnaire was not returned are
/// skipped (only where unit-level responses were simulated).
fn level_units(
    data: &StudyDataset,
    outcome: &str,
    level: Level,
    respondents_only: bool,
) -> Result<Vec<LevelUnit>> {
    let col = data.column(outcome)?;
    if level == Level::Practice {
        return Ok((0..data.n_rows())
            .filter(|&i| col.observed[i])
            .map(|i| LevelUnit {
                value: col.values[i],
                row: i,
            })
            .collect());
    }
    let mut groups: BTreeMap<u32, (f64, usize, usize)> = BTreeMap::new();
    for i in 0..data.n_rows() {
        if !col.observed[i] {
            continue;
        }
        let id = match level {
            Level::Subsidiary => data.cluster_id[i].map(|s| s.0),
            Level::Parent => data.parent_id[i].map(|p| p.0),
            Level::Practice => unreachable!(),
        };
        if let Some(id) = id {
            let e = groups.entry(id).or_insert((0.0, 0, i));
            e.0 += col.values[i];
            e.1 += 1;
        }
    }
    let responded = |id: u32| -> bool {
        if !respondents_only {
            return true;
        }
        match level {
            Level::Subsidiary if !data.level_responses.subsidiaries.is_empty() => data
                .level_responses
                .subsidiaries
                .get(&crate::frame::SubsidiaryId(id))
                .copied()
                .unwrap_or(false),
            Level::Parent if !data.level_responses.parents.is_empty() => data
                .level_responses
                .parents
                .get(&crate::frame::ParentId(id))
                .copied()
                .unwrap_or(false),
            _ => true,
        }
    };
    Ok(groups
        .into_iter()
        .filter(|(id, _)| responded(*id))
        .map(|(_, (sum, n, row))| LevelUnit {
            value: sum / n as f64,
            row,
        })
        .collect())
}

fn srs_report(method: Method, outcome: &str, level: Level, values: &[f64]) -> Result<EstimateReport> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "`{outcome}` has {} observed value(s) at the {} level",
            values.len(),
            level.as_str()
        )));
    }
    let n = values.len() as f64;
    Ok(EstimateReport {
        method,
        scenario: None,
        outcome: outcome.to_string(),
        level,
        mean: stats::mean(values).unwrap_or(f64::NAN),
        se: (stats::sample_variance(values).unwrap_or(0.0) / n).sqrt(),
        n_used: values.len(),
        components: None,
    })
}

/// Complete-case practice-level mean.
pub fn naive_mean(data: &StudyDataset, outcome: &str) -> Result<EstimateReport> {
    naive_mean_at(data, outcome, Level::Practice)
}

pub fn naive_mean_at(data: &StudyDataset, outcome: &str, level: Level) -> Result<EstimateReport> {
    let values: Vec<f64> = level_units(data, outcome, level, true)?
        .into_iter()
        .map(|u| u.value)
        .collect();
    srs_report(Method::Naive, outcome, level, &values)
}

/// Design-weighted practice-level mean over responding sampled practices.
pub fn weighted_mean(data: &StudyDataset, draw: &SampleDraw, outcome: &str) -> Result<EstimateReport> {
    weighted_mean_at(data, draw, outcome, Level::Practice)
}

pub fn weighted_mean_at(
    data: &StudyDataset,
    draw: &SampleDraw,
    outcome: &str,
    level: Level,
) -> Result<EstimateReport> {
    let units = level_units(data, outcome, level, true)?;
    // (stratum, psu) -> weighted values
    let mut obs: Vec<(u32, Unit, f64, f64)> = Vec::with_capacity(units.len());
    for u in &units {
        let id = data.practice_ids[u.row];
        let rec = draw.record(id).ok_or_else(|| {
            Error::Design(format!("responding practice {id} has no design weight"))
        })?;
        let pi = match (level, draw.design) {
            (Level::Practice, _) => rec.pi_final,
            (_, DesignKind::SingleLevel) => {
                return Err(Error::Design(format!(
                    "{}-level weights need a clustered design",
                    level.as_str()
                )))
            }
            // independent practices are their own subsidiary and parent
            _ if matches!(rec.psu, Unit::Practice(_)) => rec.pi_final,
            (Level::Subsidiary, DesignKind::ThreeLevel) => rec.pi1 * rec.pi2,
            (Level::Subsidiary, DesignKind::TwoLevel) => rec.pi1,
            (Level::Parent, DesignKind::ThreeLevel) => rec.pi1,
            (Level::Parent, DesignKind::TwoLevel) => {
                return Err(Error::Design(
                    "parent-level weights need a three-level design".into(),
                ))
            }
        };
        obs.push((rec.stratum, rec.psu, 1.0 / pi, u.value));
    }
    if obs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "`{outcome}` has {} responding unit(s) at the {} level",
            obs.len(),
            level.as_str()
        )));
    }
    // the ratio is scale free; relative weights make equal weights exactly 1
    let w_ref = obs[0].2;
    for o in &mut obs {
        o.2 /= w_ref;
    }
    let w_total: f64 = obs.iter().map(|o| o.2).sum();
    let mean = obs.iter().map(|o| o.2 * o.3).sum::<f64>() / w_total;

    let mut scores: BTreeMap<u32, BTreeMap<Unit, f64>> = BTreeMap::new();
    for &(h, psu, w, y) in &obs {
        *scores.entry(h).or_default().entry(psu).or_insert(0.0) += w * (y - mean) / w_total;
    }
    let mut var = 0.0;
    for (h, z) in &scores {
        let n_h = z.len();
        if n_h == 1 {
            return Err(Error::VarianceUndefined(format!(
                "stratum {h} has a single responding primary unit"
            )));
        }
        let zbar = z.values().sum::<f64>() / n_h as f64;
        let ss: f64 = z.values().map(|v| (v - zbar).powi(2)).sum();
        var += n_h as f64 / (n_h as f64 - 1.0) * ss;
    }
    Ok(EstimateReport {
        method: Method::Weighted,
        scenario: None,
        outcome: outcome.to_string(),
        level,
        mean,
        se: var.sqrt(),
        n_used: obs.len(),
        components: None,
    })
}

fn completed_level_values(ds: &StudyDataset, outcome: &str, level: Level) -> Result<Vec<f64>> {
    let col = ds.column(outcome)?;
    if !col.is_complete() {
        return Err(Error::InsufficientData(format!(
            "`{outcome}` is not complete in an imputed dataset"
        )));
    }
    Ok(level_units(ds, outcome, level, false)?
        .into_iter()
        .map(|u| u.value)
        .collect())
}

/// Full-frame mean on each completed dataset, pooled by Rubin's rules.
pub fn mi_mean(set: &ImputationSet, outcome: &str, level: Level) -> Result<EstimateReport> {
    mi_mean_with(set, outcome, level, false)
}

/// As [`mi_mean`]; with `finite_population_correction` the per-dataset
/// variance is scaled by `1 - n/N`, which is zero on a completed frame.
pub fn mi_mean_with(
    set: &ImputationSet,
    outcome: &str,
    level: Level,
    finite_population_correction: bool,
) -> Result<EstimateReport> {
    let mut per = Vec::with_capacity(set.datasets.len());
    let mut n_used = 0;
    for ds in &set.datasets {
        let values = completed_level_values(ds, outcome, level)?;
        let r = srs_report(Method::Mi, outcome, level, &values)?;
        let fpc = if finite_population_correction { 0.0 } else { 1.0 };
        per.push((r.mean, r.se * r.se * fpc));
        n_used = values.len();
    }
    let pooled = pool_rubin(&per)?;
    Ok(EstimateReport {
        method: Method::Mi,
        scenario: None,
        outcome: outcome.to_string(),
        level,
        mean: pooled.mean,
        se: pooled.se,
        n_used,
        components: Some(pooled.components),
    })
}

/// `sqrt(n_original / n_imputed)`.
pub fn size_ratio(n_original: usize, n_imputed: usize) -> f64 {
    (n_original as f64 / n_imputed as f64).sqrt()
}

/// Standard error of each completed dataset relative to the respondent-only
/// standard error, next to the ratio expected from sample size alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyDiagnostic {
    pub outcome: String,
    pub per_imputation_mean: Vec<f64>,
    pub per_imputation_se: Vec<f64>,
    pub per_imputation_ratio: Vec<f64>,
    pub size_ratio: f64,
    pub original_se: f64,
    pub n_original: usize,
    pub n_imputed: usize,
}

impl EfficiencyDiagnostic {
    pub fn all_below_size_ratio(&self) -> bool {
        self.per_imputation_ratio.iter().all(|&r| r < self.size_ratio)
    }
}

pub fn efficiency_diagnostic(
    set: &ImputationSet,
    data: &StudyDataset,
    outcome: &str,
) -> Result<EfficiencyDiagnostic> {
    let original = naive_mean(data, outcome)?;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut n_imputed = 0;
    for ds in &set.datasets {
        let values = completed_level_values(ds, outcome, Level::Practice)?;
        let r = srs_report(Method::Mi, outcome, Level::Practice, &values)?;
        means.push(r.mean);
        ses.push(r.se);
        n_imputed = values.len();
    }
    if original.se <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "`{outcome}` has zero observed variance"
        )));
    }
    Ok(EfficiencyDiagnostic {
        outcome: outcome.to_string(),
        per_imputation_ratio: ses.iter().map(|s| s / original.se).collect(),
        per_imputation_mean: means,
        per_imputation_se: ses,
        size_ratio: size_ratio(original.n_used, n_imputed),
        original_se: original.se,
        n_original: original.n_used,
        n_imputed,
    })
}

/// Magnitude of a covariate's correlation with an outcome: on the rows
/// where both were originally observed (`y`), and across the completed
/// datasets (absolute values). `None` where a correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub covariate: String,
    pub y: Option<f64>,
    pub minimum: Option<f64>,
    pub mean: Option<f64>,
    pub maximum: Option<f64>,
    pub st_dev: Option<f64>,
}

pub fn correlation_summary(
    set: &ImputationSet,
    covariates: &[String],
    outcome: &str,
) -> Result<Vec<CorrelationSummary>> {
    let first = set
        .datasets
        .first()
        .ok_or_else(|| Error::Pooling("imputation set is empty".into()))?;
    let observed = |name: &str| -> Result<Vec<bool>> {
        match set.source_observed.get(name) {
            Some(o) => Ok(o.clone()),
            None => Ok(first.column(name)?.observed.clone()),
        }
    };
    let y_obs = observed(outcome)?;
    let mut out = Vec::with_capacity(covariates.len());
    for cov in covariates {
        let c_obs = observed(cov)?;
        let rows: Vec<usize> = (0..first.n_rows()).filter(|&i| y_obs[i] && c_obs[i]).collect();
        let xs: Vec<f64> = rows.iter().map(|&i| first.column(cov).map(|c| c.values[i])).collect::<Result<_>>()?;
        let ys: Vec<f64> = rows
            .iter()
            .map(|&i| first.column(outcome).map(|c| c.values[i]))
            .collect::<Result<_>>()?;
        let y = stats::correlation(&xs, &ys);
        let mut mags = Vec::with_capacity(set.datasets.len());
        let mut defined = true;
        for ds in &set.datasets {
            match stats::correlation(&ds.column(cov)?.values, &ds.column(outcome)?.values) {
                Some(r) => mags.push(r.abs()),
                None => defined = false,
            }
        }
        let (minimum, mean, maximum, st_dev) = if defined && !mags.is_empty() {
            (
                mags.iter().copied().reduce(f64::min),
                stats::mean(&mags),
                mags.iter().copied().reduce(f64::max),
                Some(stats::sample_variance(&mags).unwrap_or(0.0).sqrt()),
            )
        } else {
            (None, None, None, None)
        };
        out.push(CorrelationSummary {
            covariate: cov.clone(),
            y,
            minimum,
            mean,
            maximum,
            st_dev,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnRole};
    use crate::frame::{PracticeId, SubsidiaryId};
    use crate::impute::ChainDiagnostics;
    use crate::sampling::SelectedPractice;

    fn dataset(values: Vec<Option<f64>>, clusters: Vec<Option<u32>>) -> StudyDataset {
        let n = values.len();
        StudyDataset::new(
            (0..n as u32).map(PracticeId).collect(),
            clusters.into_iter().map(|c| c.map(SubsidiaryId)).collect(),
            vec![None; n],
            vec![true; n],
            vec![true; n],
            vec![Column::new("y0", ColumnRole::Outcome, values)],
        )
        .unwrap()
    }

    fn single_level_draw(weights: &[f64], strata: &[u32]) -> SampleDraw {
        let recs = weights
            .iter()
            .zip(strata)
            .enumerate()
            .map(|(k, (&w, &h))| SelectedPractice {
                practice_id: PracticeId(k as u32),
                pi1: 1.0 / w,
                pi2: 1.0,
                pi3: 1.0,
                pi_final: 1.0 / w,
                weight: w,
                stratum: h,
                psu: Unit::Practice(PracticeId(k as u32)),
            })
            .collect();
        SampleDraw::from_records(DesignKind::SingleLevel, recs)
    }

    fn set_of(datasets: Vec<StudyDataset>) -> ImputationSet {
        ImputationSet {
            datasets,
            imputed_columns: vec!["y0".into()],
            source_observed: BTreeMap::new(),
            chain_diagnostics: ChainDiagnostics::default(),
            seed: 0,
        }
    }

    #[test]
    fn naive_hand_arithmetic() {
        let ds = dataset(vec![Some(1.0), Some(2.0), None, Some(3.0)], vec![None; 4]);
        let r = naive_mean(&ds, "y0").unwrap();
        assert_eq!(r.mean, 2.0);
        assert!((r.se - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.n_used, 3);
        assert!(r.components.is_none());
    }

    #[test]
    fn naive_needs_two_values() {
        let ds = dataset(vec![None, Some(2.0), None], vec![None; 3]);
        assert!(matches!(
            naive_mean(&ds, "y0").unwrap_err(),
            Error::InsufficientData(_)
        ));
        let ds = dataset(vec![None, None], vec![None; 2]);
        assert!(naive_mean(&ds, "y0").is_err());
    }

    #[test]
    fn weighted_hand_arithmetic() {
        let ds = dataset(vec![Some(1.0), Some(3.0)], vec![None; 2]);
        let r = weighted_mean(&ds, &single_level_draw(&[3.0, 1.0], &[0, 0]), "y0").unwrap();
        assert_eq!(r.mean, 1.5);
        // scores 3(1-1.5)/4 and (3-1.5)/4 -> 2 * ((-0.375-0)^2 + (0.375)^2)
        assert!((r.se - (2.0f64 * 2.0 * 0.375 * 0.375).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_match_naive_exactly() {
        let vals: Vec<Option<f64>> = (0..40)
            .map(|k| (k % 5 != 0).then_some((k as f64 * 0.37).sin() * 4.0))
            .collect();
        let ds = dataset(vals, vec![None; 40]);
        let d = single_level_draw(&[2.5; 40], &[0; 40]);
        let w = weighted_mean(&ds, &d, "y0").unwrap();
        let n = naive_mean(&ds, "y0").unwrap();
        assert!((w.mean - n.mean).abs() <= 4.0 * f64::EPSILON * n.mean.abs().max(1.0));
        assert_eq!(w.n_used, n.n_used);
    }

    #[test]
    fn single_psu_stratum_is_undefined() {
        let ds = dataset(vec![Some(1.0), Some(3.0), Some(2.0)], vec![None; 3]);
        let d = single_level_draw(&[1.0, 1.0, 1.0], &[0, 0, 1]);
        assert!(matches!(
            weighted_mean(&ds, &d, "y0").unwrap_err(),
            Error::VarianceUndefined(_)
        ));
    }

    #[test]
    fn respondent_without_weight_is_an_error() {
        let ds = dataset(vec![Some(1.0), Some(3.0), Some(2.0)], vec![None; 3]);
        let d = single_level_draw(&[1.0, 1.0], &[0, 0]);
        assert!(matches!(weighted_mean(&ds, &d, "y0").unwrap_err(), Error::Design(_)));
    }

    #[test]
    fn rubin_reference_values() {
        let p = pool_rubin(&[(0.0, 0.006f64.powi(2)), (0.0, 0.006f64.powi(2))]).unwrap();
        assert!((p.se - 0.006).abs() < 1e-15);
        assert_eq!(p.components.var_between, 0.0);

        let r = pool_rubin(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]).unwrap();
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.components.var_between, 1.0);
        assert!((r.se - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pooling_rejects_single_estimate() {
        assert!(matches!(pool_rubin(&[(1.0, 1.0)]).unwrap_err(), Error::Pooling(_)));
    }

    #[test]
    fn mi_on_complete_data_equals_complete_mean() {
        let ds = dataset((0..30).map(|k| Some(k as f64 * 0.5)).collect(), vec![None; 30]);
        let r = mi_mean(&set_of(vec![ds.clone(); 10]), "y0", Level::Practice).unwrap();
        let n = naive_mean(&ds, "y0").unwrap();
        assert_eq!(r.mean, n.mean);
        let c = r.components.unwrap();
        assert_eq!(c.var_between, 0.0);
        assert!((r.se - n.se).abs() < 1e-15);
        assert!(r.pooling_residual().unwrap().abs() < 1e-12);
        assert_eq!(r.n_used, 30);

        let fpc = mi_mean_with(&set_of(vec![ds; 3]), "y0", Level::Practice, true).unwrap();
        assert_eq!(fpc.se, 0.0);
    }

    #[test]
    fn mi_rejects_incomplete_dataset() {
        let ds = dataset(vec![Some(1.0), None, Some(2.0)], vec![None; 3]);
        assert!(mi_mean(&set_of(vec![ds.clone(), ds]), "y0", Level::Practice).is_err());
    }

    #[test]
    fn level_values_average_practices() {
        let ds = dataset(
            vec![Some(1.0), Some(3.0), Some(10.0), Some(20.0), Some(5.0)],
            vec![Some(0), Some(0), Some(1), Some(1), None],
        );
        let r = mi_mean(&set_of(vec![ds.clone(), ds]), "y0", Level::Subsidiary).unwrap();
        // subsidiaries: means 2 and 15
        assert_eq!(r.mean, 8.5);
        assert_eq!(r.n_used, 2);
    }

    #[test]
    fn size_ratio_reference_value() {
        assert!((size_ratio(1208, 2702) - 0.669).abs() < 0.001);
        assert_eq!(size_ratio(50, 50), 1.0);
    }

    #[test]
    fn efficiency_on_respondent_census_is_one() {
        let ds = dataset((0..20).map(|k| Some((k * k) as f64)).collect(), vec![None; 20]);
        let e = efficiency_diagnostic(&set_of(vec![ds.clone(); 4]), &ds, "y0").unwrap();
        assert_eq!(e.size_ratio, 1.0);
        assert!(e.per_imputation_ratio.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert_eq!(e.per_imputation_ratio.len(), 4);
    }

    #[test]
    fn correlation_of_outcome_with_itself() {
        let mut ds = dataset((0..20).map(|k| Some((k as f64).sqrt())).collect(), vec![None; 20]);
        let y = ds.column("y0").unwrap().values.clone();
        ds.columns.push(Column::complete("c", ColumnRole::FrameCovariate, y));
        ds.columns
            .push(Column::complete("k", ColumnRole::FrameCovariate, vec![1.0; 20]));
        let s = correlation_summary(&set_of(vec![ds.clone(); 3]), &["c".into(), "k".into()], "y0")
            .unwrap();
        assert!((s[0].y.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s[0].st_dev, Some(0.0));
        assert!((s[0].maximum.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s[1].y, None);
        assert_eq!(s[1].mean, None);
    }
}
