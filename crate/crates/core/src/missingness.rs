//! Missing-at-random unit non-response and composition of the study dataset.
//!
//! Response probabilities are logistic in always-observed frame covariates,
//! never in outcomes. The intercept of each level is calibrated so that the
//! expected response rate among selected units hits the level's target.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::claims::{ClaimsAggregate, CLAIMS_COVARIATES};
use crate::dataset::{outcome_name, Column, ColumnRole, LevelResponses, StudyDataset};
use crate::error::{Error, Result};
use crate::frame::{Frame, Level, FRAME_COVARIATES};
use crate::rng;
use crate::sampling::{unit_measure, SampleDraw, Unit};
use crate::stats::{logistic, logit};

/// Tolerance on |expected rate - target| after calibration.
pub const CALIBRATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseModel {
    pub level_targets: BTreeMap<Level, f64>,
    /// Log-odds slopes on raw covariate values.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Set by [`calibrate_response_model`]; `+inf` encodes a target of 1.
    #[serde(default)]
    pub intercepts: BTreeMap<Level, f64>,
}

impl Default for ResponseModel {
    /// Response rates of the systems, owner subsidiaries, and practices
    /// surveyed in the original study.
    fn default() -> Self {
        Self {
            level_targets: BTreeMap::from([
                (Level::Parent, 0.598),
                (Level::Subsidiary, 0.482),
                (Level::Practice, 0.469),
            ]),
            coefficients: BTreeMap::from([("npcp".to_string(), 0.05)]),
            intercepts: BTreeMap::new(),
        }
    }
}

impl ResponseModel {
    pub fn validate(&self) -> Result<()> {
        for (level, &t) in &self.level_targets {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::config(
                    format!("level_targets.{}", level.as_str()),
                    "must lie in (0, 1]",
                ));
            }
        }
        for (name, slope) in &self.coefficients {
            if !FRAME_COVARIATES.contains(&name.as_str()) {
                return Err(Error::config(
                    format!("coefficients.{name}"),
                    "is not a frame covariate",
                ));
            }
            if !slope.is_finite() {
                return Err(Error::config(format!("coefficients.{name}"), "must be finite"));
            }
        }
        Ok(())
    }

    fn linear_predictor(&self, frame: &Frame, unit: Unit) -> Result<f64> {
        let mut eta = 0.0;
        for (name, slope) in &self.coefficients {
            eta += slope * unit_measure(frame, unit, name)?;
        }
        Ok(eta)
    }

    /// Response probability of a selected unit at a calibrated level.
    pub fn probability(&self, frame: &Frame, level: Level, unit: Unit) -> Result<f64> {
        let a = *self.intercepts.get(&level).ok_or_else(|| Error::Calibration {
            level: level.as_str().into(),
            reason: "model not calibrated".into(),
        })?;
        if a == f64::INFINITY {
            return Ok(1.0);
        }
        Ok(logistic(a + self.linear_predictor(frame, unit)?))
    }
}

fn selected_units(draw: &SampleDraw, level: Level) -> Vec<Unit> {
    match level {
        Level::Practice => draw
            .practices
            .iter()
            .map(|r| Unit::Practice(r.practice_id))
            .collect(),
        Level::Subsidiary => draw
            .selected_subsidiaries()
            .into_iter()
            .map(Unit::Subsidiary)
            .collect(),
        Level::Parent => draw
            .selected_parents()
            .into_iter()
            .map(Unit::Parent)
            .collect(),
    }
}

/// Expected response rate of units with linear predictors `etas` at
/// intercept `a`.
pub fn expected_rate(a: f64, etas: &[f64]) -> f64 {
    etas.iter().map(|&e| logistic(a + e)).sum::<f64>() / etas.len() as f64
}

fn solve_intercept(target: f64, etas: &[f64]) -> Option<f64> {
    let t = logit(target);
    let (lo_eta, hi_eta) = etas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
    // rate(a) is increasing; at a = t - hi every unit is at or below target,
    // at a = t - lo every unit is at or above it.
    let (mut lo, mut hi) = (t - hi_eta, t - lo_eta);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if expected_rate(mid, etas) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    ((expected_rate(a, etas) - target).abs() < CALIBRATION_TOLERANCE).then_some(a)
}

/// Sets each level's intercept so the expected response rate among the
/// draw's selected units equals the target.
pub fn calibrate_response_model(
    frame: &Frame,
    draw: &SampleDraw,
    model: &ResponseModel,
) -> Result<ResponseModel> {
    model.validate()?;
    let mut out = model.clone();
    out.intercepts.clear();
    for (&level, &target) in &model.level_targets {
        if target == 1.0 {
            out.intercepts.insert(level, f64::INFINITY);
            continue;
        }
        let units = selected_units(draw, level);
        if units.is_empty() {
            out.intercepts.insert(level, logit(target));
            continue;
        }
        let etas = units
            .iter()
            .map(|&u| model.linear_predictor(frame, u))
            .collect::<Result<Vec<_>>>()?;
        if etas.iter().any(|e| !e.is_finite()) {
            return Err(Error::Calibration {
                level: level.as_str().into(),
                reason: "slopes overflow the linear predictor".into(),
            });
        }
        let a = solve_intercept(target, &etas).ok_or_else(|| Error::Calibration {
            level: level.as_str().into(),
            reason: format!("target {target} unreachable with the given slopes"),
        })?;
        out.intercepts.insert(level, a);
    }
    Ok(out)
}

/// Composes selection and calibrated non-response into the study dataset.
///
/// Outcome cells are observed iff the practice was selected and responded.
/// Frame covariates are always observed. Claims covariates are observed iff
/// the practice has at least one attributed beneficiary; pass an empty
/// slice to omit claims columns.
pub fn apply_missingness(
    frame: &Frame,
    draw: &SampleDraw,
    claims_aggregates: &[ClaimsAggregate],
    model: &ResponseModel,
    seed: u64,
) -> Result<StudyDataset> {
    if !claims_aggregates.is_empty() && claims_aggregates.len() != frame.practices.len() {
        return Err(Error::Parse(format!(
            "{} claims aggregates for {} practices",
            claims_aggregates.len(),
            frame.practices.len()
        )));
    }
    let mut rng = rng::stream(seed);
    let n = frame.practices.len();
    let mut selected = vec![false; n];
    let mut responded = vec![false; n];
    let mut level_responses = LevelResponses::default();

    for (&level, _) in &model.level_targets {
        for unit in selected_units(draw, level) {
            let p = model.probability(frame, level, unit)?;
            let r = rng.random::<f64>() < p;
            match unit {
                Unit::Practice(k) => responded[k.index()] = r,
                Unit::Subsidiary(s) => {
                    level_responses.subsidiaries.insert(s, r);
                }
                Unit::Parent(pid) => {
                    level_responses.parents.insert(pid, r);
                }
            }
        }
    }
    for r in &draw.practices {
        selected[r.practice_id.index()] = true;
    }
    if !model.level_targets.contains_key(&Level::Practice) {
        // no practice-level non-response modeled: every selected unit responds
        responded.clone_from(&selected);
    }
    for k in 0..n {
        responded[k] &= selected[k];
    }

    let mut columns = Vec::new();
    for m in 0..frame.outcome_count() {
        let values = frame
            .practices
            .iter()
            .enumerate()
            .map(|(k, p)| (selected[k] && responded[k]).then_some(p.true_outcomes[m]))
            .collect();
        columns.push(Column::new(outcome_name(m), ColumnRole::Outcome, values));
    }
    let covs: Vec<[f64; 6]> = frame
        .practices
        .iter()
        .map(|p| frame.frame_covariates(p))
        .collect();
    for (j, name) in FRAME_COVARIATES.iter().enumerate() {
        columns.push(Column::complete(
            *name,
            ColumnRole::FrameCovariate,
            covs.iter().map(|c| c[j]).collect(),
        ));
    }
    if !claims_aggregates.is_empty() {
        let rows: Vec<Option<[f64; 13]>> = claims_aggregates
            .iter()
            .map(ClaimsAggregate::covariate_values)
            .collect();
        for (j, name) in CLAIMS_COVARIATES.iter().enumerate() {
            columns.push(Column::new(
                *name,
                ColumnRole::ClaimsCovariate,
                rows.iter().map(|r| r.map(|v| v[j])).collect(),
            ));
        }
    }

    let mut ds = StudyDataset::new(
        frame.practices.iter().map(|p| p.id).collect(),
        frame.practices.iter().map(|p| p.os_id).collect(),
        frame
            .practices
            .iter()
            .map(|p| frame.parent_of_practice(p).map(|c| c.id))
            .collect(),
        selected,
        responded,
        columns,
    )?;
    ds.level_responses = level_responses;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{generate_frame, GeneratorConfig};
    use crate::sampling::{draw_sample, DesignKind, DesignSpec, StageProbabilitySpec};

    fn frame() -> Frame {
        generate_frame(
            &GeneratorConfig {
                n_parents: 80,
                mean_subsidiaries_per_parent: 2.0,
                mean_practices_per_subsidiary: 5.0,
                n_independent_practices: 50,
                outcome_count: 2,
                cluster_icc: 0.2,
                covariate_outcome_corr: 0.3,
                binary_outcomes: vec![],
            },
            17,
        )
        .unwrap()
    }

    fn census(f: &Frame) -> DesignSpec {
        DesignSpec {
            design: DesignKind::SingleLevel,
            stage_specs: vec![StageProbabilitySpec::srs(f.practices.len())],
            strata_by: None,
            independent_sample_size: None,
        }
    }

    fn practice_only(target: f64, slopes: &[(&str, f64)]) -> ResponseModel {
        ResponseModel {
            level_targets: BTreeMap::from([(Level::Practice, target)]),
            coefficients: slopes.iter().map(|&(n, s)| (n.to_string(), s)).collect(),
            intercepts: BTreeMap::new(),
        }
    }

    #[test]
    fn zero_slopes_give_logit_intercept() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        let m = calibrate_response_model(&f, &d, &practice_only(0.469, &[])).unwrap();
        let a = m.intercepts[&Level::Practice];
        assert!((a - logit(0.469)).abs() < 1e-9, "{a}");
        let p = m
            .probability(&f, Level::Practice, Unit::Practice(f.practices[0].id))
            .unwrap();
        assert!((p - 0.469).abs() < 1e-9);
    }

    #[test]
    fn target_one_is_infinite_and_everyone_responds() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        let m = calibrate_response_model(&f, &d, &practice_only(1.0, &[("npcp", 0.3)])).unwrap();
        assert_eq!(m.intercepts[&Level::Practice], f64::INFINITY);
        let ds = apply_missingness(&f, &d, &[], &m, 3).unwrap();
        assert_eq!(ds.missing_cells(), 0);
    }

    #[test]
    fn slope_calibration_matches_direct_expectation() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        let m = calibrate_response_model(&f, &d, &practice_only(0.5, &[("npcp", 0.1)])).unwrap();
        let a = m.intercepts[&Level::Practice];
        // direct summation over the sample
        let total: f64 = d
            .practices
            .iter()
            .map(|r| {
                let x = f64::from(f.practices[r.practice_id.index()].npcp);
                1.0 / (1.0 + (-(a + 0.1 * x)).exp())
            })
            .sum();
        let rate = total / d.practices.len() as f64;
        assert!((rate - 0.5).abs() < 1e-6, "{rate}");
    }

    #[test]
    fn nothing_selected_means_all_outcomes_missing() {
        let f = frame();
        let d = SampleDraw::from_records(DesignKind::SingleLevel, vec![]);
        let m = calibrate_response_model(&f, &d, &practice_only(0.7, &[])).unwrap();
        let ds = apply_missingness(&f, &d, &[], &m, 3).unwrap();
        for name in ds.outcome_names() {
            assert_eq!(ds.column(&name).unwrap().n_observed(), 0);
        }
        assert!(ds
            .names_with_role(ColumnRole::FrameCovariate)
            .iter()
            .all(|c| ds.column(c).unwrap().is_complete()));
    }

    #[test]
    fn uncalibrated_model_is_rejected() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        let err = apply_missingness(&f, &d, &[], &practice_only(0.5, &[]), 1).unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }));
    }

    #[test]
    fn unknown_covariate_and_bad_target_are_config_errors() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        assert!(calibrate_response_model(&f, &d, &practice_only(0.5, &[("y0", 1.0)])).is_err());
        assert!(calibrate_response_model(&f, &d, &practice_only(0.0, &[])).is_err());
    }

    #[test]
    fn unreachable_target_reports_calibration_error() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 1).unwrap();
        let m = practice_only(0.5, &[("npcp", 1e308)]);
        let err = calibrate_response_model(&f, &d, &m).unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }), "{err}");
    }

    #[test]
    fn response_ignores_outcome_values() {
        let f = frame();
        let d = draw_sample(&f, &census(&f), 2).unwrap();
        let m = calibrate_response_model(&f, &d, &practice_only(0.4, &[("np", 0.05)])).unwrap();
        let a = apply_missingness(&f, &d, &[], &m, 9).unwrap();
        let mut g = f.clone();
        for p in g.practices.iter_mut() {
            for y in p.true_outcomes.iter_mut() {
                *y = -*y * 10.0 + 3.0;
            }
        }
        let b = apply_missingness(&g, &d, &[], &m, 9).unwrap();
        assert_eq!(a.responded, b.responded);
    }

    #[test]
    fn mask_is_selection_and_response() {
        let f = frame();
        let spec = DesignSpec {
            design: DesignKind::ThreeLevel,
            stage_specs: vec![
                StageProbabilitySpec::srs(30),
                StageProbabilitySpec::srs(1),
                StageProbabilitySpec::srs(3),
            ],
            strata_by: None,
            independent_sample_size: Some(10),
        };
        let d = draw_sample(&f, &spec, 5).unwrap();
        let m = calibrate_response_model(&f, &d, &ResponseModel::default()).unwrap();
        let ds = apply_missingness(&f, &d, &[], &m, 5).unwrap();
        let y = ds.column("y0").unwrap();
        for k in 0..ds.n_rows() {
            assert_eq!(y.observed[k], ds.selected[k] && ds.responded[k]);
        }
        assert_eq!(ds.level_responses.parents.len(), d.selected_parents().len());
        assert_eq!(
            ds.level_responses.subsidiaries.len(),
            d.selected_subsidiaries().len()
        );
    }

    #[test]
    fn realized_rate_tracks_target() {
        let f = generate_frame(
            &GeneratorConfig {
                n_parents: 200,
                mean_subsidiaries_per_parent: 2.0,
                mean_practices_per_subsidiary: 6.0,
                n_independent_practices: 100,
                ..GeneratorConfig::default()
            },
            4,
        )
        .unwrap();
        let d = draw_sample(&f, &census(&f), 0).unwrap();
        assert!(d.practices.len() >= 2000);
        let m = calibrate_response_model(&f, &d, &practice_only(0.469, &[("npcp", 0.1)])).unwrap();
        let mut rates = Vec::new();
        for seed in 0..200 {
            let ds = apply_missingness(&f, &d, &[], &m, seed).unwrap();
            let n_resp = ds.responded.iter().filter(|&&r| r).count();
            rates.push(n_resp as f64 / d.practices.len() as f64);
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!((mean - 0.469).abs() <= 0.02, "{mean}");
    }
}
