//! Three-level organizational frame: corporate parents, owner subsidiaries,
//! and physician practices, plus the synthetic population generator.
//!
//! Identifiers are dense: `parents[i].id == ParentId(i)` and likewise for the
//! other two levels. [`Frame::validate`] enforces this together with
//! referential integrity, so lookups elsewhere index directly.

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(ParentId);
id_newtype!(SubsidiaryId);
id_newtype!(PracticeId);

/// The six covariates known for every practice in the frame.
pub const FRAME_COVARIATES: [&str; 6] = ["np", "npcp", "nach", "nmg", "nos", "pertot"];

/// Smallest primary-care headcount for a practice to be eligible.
pub const MIN_PRIMARY_CARE: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorporateParent {
    pub id: ParentId,
    /// Hospitals in the system (at least one for generated frames).
    pub nach: u32,
    /// Medical groups in the system.
    pub nmg: u32,
    /// Owner subsidiaries in the system.
    pub nos: u32,
    /// Share of hospitals and groups under local ownership.
    pub pertot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnerSubsidiary {
    pub id: SubsidiaryId,
    pub parent_id: ParentId,
    pub latent_trait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Practice {
    pub id: PracticeId,
    /// `None` for independent practices.
    pub os_id: Option<SubsidiaryId>,
    pub np: u32,
    pub npcp: u32,
    pub tin: String,
    /// Ground truth for the survey items; never visible to estimators except
    /// through the response mask.
    pub true_outcomes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Practice,
    Subsidiary,
    Parent,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Practice => "practice",
            Level::Subsidiary => "subsidiary",
            Level::Parent => "parent",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "practice" => Ok(Level::Practice),
            "subsidiary" => Ok(Level::Subsidiary),
            "parent" => Ok(Level::Parent),
            other => Err(Error::config("level", format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_parents: usize,
    pub mean_subsidiaries_per_parent: f64,
    pub mean_practices_per_subsidiary: f64,
    pub n_independent_practices: usize,
    pub outcome_count: usize,
    pub cluster_icc: f64,
    pub covariate_outcome_corr: f64,
    /// Outcomes generated as 0/1 by thresholding their latent value at zero.
    #[serde(default)]
    pub binary_outcomes: Vec<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_parents: 570,
            mean_subsidiaries_per_parent: 1.5,
            mean_practices_per_subsidiary: 7.0,
            n_independent_practices: 400,
            outcome_count: 3,
            cluster_icc: 0.3,
            covariate_outcome_corr: 0.15,
            binary_outcomes: vec![2],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_parents == 0 {
            return Err(Error::config("n_parents", "must be positive"));
        }
        if !(self.mean_subsidiaries_per_parent.is_finite()
            && self.mean_subsidiaries_per_parent >= 0.0)
        {
            return Err(Error::config(
                "mean_subsidiaries_per_parent",
                "must be finite and non-negative",
            ));
        }
        if !(self.mean_practices_per_subsidiary.is_finite()
            && self.mean_practices_per_subsidiary >= 1.0)
        {
            return Err(Error::config(
                "mean_practices_per_subsidiary",
                "must be finite and at least 1",
            ));
        }
        if self.mean_subsidiaries_per_parent == 0.0 && self.n_independent_practices == 0 {
            return Err(Error::config(
                "n_independent_practices",
                "must be positive when parents have no subsidiaries",
            ));
        }
        if self.outcome_count == 0 {
            return Err(Error::config("outcome_count", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.cluster_icc) {
            return Err(Error::config("cluster_icc", "must lie in [0, 1)"));
        }
        if !(self.covariate_outcome_corr > -1.0 && self.covariate_outcome_corr < 1.0) {
            return Err(Error::config(
                "covariate_outcome_corr",
                "must lie in (-1, 1)",
            ));
        }
        if let Some(&bad) = self
            .binary_outcomes
            .iter()
            .find(|&&b| b >= self.outcome_count)
        {
            return Err(Error::config(
                "binary_outcomes",
                format!("index {bad} exceeds outcome_count {}", self.outcome_count),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub parents: Vec<CorporateParent>,
    pub subsidiaries: Vec<OwnerSubsidiary>,
    pub practices: Vec<Practice>,
    pub generation_config: GeneratorConfig,
    pub seed: u64,
}

/// Draws a count with the given mean: Poisson, or zero when the mean is zero.
fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let v: f64 = d.sample(rng);
    v as u32
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a synthetic frame.
///
/// Hierarchy sizes are Poisson (subsidiaries per parent) and zero-truncated
/// shifted Poisson (practices per subsidiary, at least one). Primary-care
/// headcounts are shifted log-normal with a cluster component, floored at
/// [`MIN_PRIMARY_CARE`]. Each outcome is
///
/// `c * z(npcp) + sqrt(1 - c^2) * (sqrt(icc) * u_cluster + sqrt(1 - icc) * e)`
///
/// where `z` standardizes `npcp` over the frame, `u_cluster` is the owner
/// subsidiary's latent trait (a fresh draw for independent practices), and
/// `c = covariate_outcome_corr`. Total latent variance is one, so the
/// subsidiary-level ICC equals `cluster_icc` in expectation.
pub fn generate_frame(config: &GeneratorConfig, seed: u64) -> Result<Frame> {
    config.validate()?;
    let mut rng = rng::stream(seed);

    let beta_pertot = Beta::new(2.0, 3.0).expect("valid beta parameters");
    let mut parents = Vec::with_capacity(config.n_parents);
    let mut subsidiaries = Vec::new();
    let mut practice_slots: Vec<(Option<SubsidiaryId>, f64, f64)> = Vec::new();

    for p in 0..config.n_parents {
        let id = ParentId(p as u32);
        let nos = poisson_count(&mut rng, config.mean_subsidiaries_per_parent);
        let nach = 1 + poisson_count(&mut rng, 1.5 * f64::from(nos));
        let nmg = poisson_count(&mut rng, 0.5 + f64::from(nos));
        let pertot: f64 = beta_pertot.sample(&mut rng);
        parents.push(CorporateParent {
            id,
            nach,
            nmg,
            nos,
            pertot,
        });
        for _ in 0..nos {
            let sid = SubsidiaryId(subsidiaries.len() as u32);
            let latent_trait = std_normal(&mut rng);
            // separate cluster component for the headcount so that the
            // outcome's residual stays independent of the covariate
            let size_effect = std_normal(&mut rng);
            subsidiaries.push(OwnerSubsidiary {
                id: sid,
                parent_id: id,
                latent_trait,
            });
            let n_practices =
                1 + poisson_count(&mut rng, config.mean_practices_per_subsidiary - 1.0);
            for _ in 0..n_practices {
                practice_slots.push((Some(sid), latent_trait, size_effect));
            }
        }
    }
    for _ in 0..config.n_independent_practices {
        let u = std_normal(&mut rng);
        let a = std_normal(&mut rng);
        practice_slots.push((None, u, a));
    }

    let icc = config.cluster_icc;
    let (w_between, w_within) = (icc.sqrt(), (1.0 - icc).sqrt());
    let mut headcounts = Vec::with_capacity(practice_slots.len());
    for &(_, _, size_effect) in &practice_slots {
        let g = w_between * size_effect + w_within * std_normal(&mut rng);
        let npcp = (MIN_PRIMARY_CARE - 1) + (4.0f64.ln() + 0.7 * g).exp().ceil() as u32;
        let others = (3.0f64.ln() + 0.8 * std_normal(&mut rng)).exp().floor() as u32;
        headcounts.push((npcp + others, npcp));
    }

    let npcp_values: Vec<f64> = headcounts.iter().map(|&(_, c)| f64::from(c)).collect();
    let npcp_mean = crate::stats::mean(&npcp_values).unwrap_or(0.0);
    let npcp_sd = crate::stats::sample_variance(&npcp_values)
        .map(f64::sqrt)
        .unwrap_or(0.0);

    let c = config.covariate_outcome_corr;
    let resid_scale = (1.0 - c * c).sqrt();
    let mut practices = Vec::with_capacity(practice_slots.len());
    for (k, (&(os_id, cluster_effect, _), &(np, npcp))) in
        practice_slots.iter().zip(&headcounts).enumerate()
    {
        let z = if npcp_sd > 0.0 {
            (f64::from(npcp) - npcp_mean) / npcp_sd
        } else {
            0.0
        };
        let true_outcomes = (0..config.outcome_count)
            .map(|m| {
                let e = std_normal(&mut rng);
                let latent = c * z + resid_scale * (w_between * cluster_effect + w_within * e);
                if config.binary_outcomes.contains(&m) {
                    if latent > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    latent
                }
            })
            .collect();
        practices.push(Practice {
            id: PracticeId(k as u32),
            os_id,
            np,
            npcp,
            tin: format!("{:09}", 100_000_000 + k),
            true_outcomes,
        });
    }

    let frame = Frame {
        parents,
        subsidiaries,
        practices,
        generation_config: config.clone(),
        seed,
    };
    debug_assert!(frame.validate().is_ok());
    Ok(frame)
}

impl Frame {
    /// Checks dense ids, referential integrity, headcount constraints, TIN
    /// uniqueness, and outcome vector lengths.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parse(what.to_string()));
        for (i, p) in self.parents.iter().enumerate() {
            if p.id.index() != i {
                return bad(&format!("parent at row {i} has id {}", p.id));
            }
            if !(0.0..=1.0).contains(&p.pertot) {
                return bad(&format!("parent {} pertot outside [0, 1]", p.id));
            }
        }
        let mut nos = vec![0u32; self.parents.len()];
        for (j, s) in self.subsidiaries.iter().enumerate() {
            if s.id.index() != j {
                return bad(&format!("subsidiary at row {j} has id {}", s.id));
            }
            match nos.get_mut(s.parent_id.index()) {
                Some(n) => *n += 1,
                None => return bad(&format!("subsidiary {} references missing parent", s.id)),
            }
        }
        for p in &self.parents {
            if nos[p.id.index()] != p.nos {
                return bad(&format!("parent {} nos does not match its subsidiaries", p.id));
            }
        }
        let mut tins = std::collections::HashSet::new();
        let outcome_count = self.generation_config.outcome_count;
        for (k, pr) in self.practices.iter().enumerate() {
            if pr.id.index() != k {
                return bad(&format!("practice at row {k} has id {}", pr.id));
            }
            if let Some(os) = pr.os_id {
                if os.index() >= self.subsidiaries.len() {
                    return bad(&format!("practice {} references missing subsidiary", pr.id));
                }
            }
            if pr.npcp > pr.np || pr.npcp < MIN_PRIMARY_CARE {
                return bad(&format!("practice {} violates headcount constraints", pr.id));
            }
            if !tins.insert(pr.tin.as_str()) {
                return bad(&format!("duplicate tin {}", pr.tin));
            }
            if pr.true_outcomes.len() != outcome_count {
                return bad(&format!("practice {} has wrong outcome count", pr.id));
            }
        }
        Ok(())
    }

    pub fn outcome_count(&self) -> usize {
        self.generation_config.outcome_count
    }

    pub fn parent_of_practice(&self, practice: &Practice) -> Option<&CorporateParent> {
        practice
            .os_id
            .map(|s| &self.parents[self.subsidiaries[s.index()].parent_id.index()])
    }

    /// Always-observed frame covariates for one practice, in [`FRAME_COVARIATES`] order.
    /// Independent practices carry zero system counts and zero local share.
    pub fn frame_covariates(&self, practice: &Practice) -> [f64; 6] {
        let (nach, nmg, nos, pertot) = match self.parent_of_practice(practice) {
            Some(p) => (
                f64::from(p.nach),
                f64::from(p.nmg),
                f64::from(p.nos),
                p.pertot,
            ),
            None => (0.0, 0.0, 0.0, 0.0),
        };
        [
            f64::from(practice.np),
            f64::from(practice.npcp),
            nach,
            nmg,
            nos,
            pertot,
        ]
    }

    /// Practice indices grouped by owner subsidiary.
    pub fn practices_by_subsidiary(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.subsidiaries.len()];
        for (k, pr) in self.practices.iter().enumerate() {
            if let Some(s) = pr.os_id {
                groups[s.index()].push(k);
            }
        }
        groups
    }

    /// Subsidiary indices grouped by corporate parent.
    pub fn subsidiaries_by_parent(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.parents.len()];
        for s in &self.subsidiaries {
            groups[s.parent_id.index()].push(s.id.index());
        }
        groups
    }

    pub fn independent_practices(&self) -> Vec<usize> {
        self.practices
            .iter()
            .enumerate()
            .filter(|(_, p)| p.os_id.is_none())
            .map(|(k, _)| k)
            .collect()
    }

    fn check_outcome(&self, outcome_index: usize) -> Result<()> {
        if outcome_index >= self.outcome_count() {
            return Err(Error::OutOfRange {
                what: "outcome index",
                index: outcome_index,
                limit: self.outcome_count(),
            });
        }
        Ok(())
    }

    /// Unit-level values of one outcome at the requested level.
    ///
    /// Subsidiary and parent values are the means of their practices'
    /// outcomes; units without practices are skipped.
    pub fn level_values(&self, outcome_index: usize, level: Level) -> Result<Vec<f64>> {
        self.check_outcome(outcome_index)?;
        let y = |k: usize| self.practices[k].true_outcomes[outcome_index];
        Ok(match level {
            Level::Practice => (0..self.practices.len()).map(y).collect(),
            Level::Subsidiary => self
                .practices_by_subsidiary()
                .iter()
                .filter(|g| !g.is_empty())
                .map(|g| g.iter().map(|&k| y(k)).sum::<f64>() / g.len() as f64)
                .collect(),
            Level::Parent => {
                let mut sums = vec![(0.0, 0usize); self.parents.len()];
                for (k, pr) in self.practices.iter().enumerate() {
                    if let Some(p) = self.parent_of_practice(pr) {
                        let e = &mut sums[p.id.index()];
                        e.0 += y(k);
                        e.1 += 1;
                    }
                }
                sums.into_iter()
                    .filter(|&(_, n)| n > 0)
                    .map(|(s, n)| s / n as f64)
                    .collect()
            }
        })
    }
}

/// Finite-population mean of an outcome at a level: the estimand every
/// estimator is compared against.
pub fn population_mean(frame: &Frame, outcome_index: usize, level: Level) -> Result<f64> {
    let values = frame.level_values(outcome_index, level)?;
    crate::stats::mean(&values)
        .ok_or_else(|| Error::InsufficientData(format!("no units at level {}", level.as_str())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            n_parents: 40,
            mean_subsidiaries_per_parent: 2.0,
            mean_practices_per_subsidiary: 5.0,
            n_independent_practices: 30,
            outcome_count: 2,
            cluster_icc: 0.3,
            covariate_outcome_corr: 0.2,
            binary_outcomes: vec![],
        }
    }

    #[test]
    fn degenerate_sizes() {
        let cfg = GeneratorConfig {
            n_parents: 1,
            mean_subsidiaries_per_parent: 0.0,
            n_independent_practices: 5,
            ..small_config()
        };
        let f = generate_frame(&cfg, 3).unwrap();
        assert_eq!(f.parents.len(), 1);
        assert_eq!(f.subsidiaries.len(), 0);
        assert_eq!(f.practices.len(), 5);
        assert!(f.practices.iter().all(|p| p.os_id.is_none()));
    }

    #[test]
    fn same_seed_same_frame() {
        let a = generate_frame(&small_config(), 11).unwrap();
        let b = generate_frame(&small_config(), 11).unwrap();
        assert_eq!(a, b);
        let c = generate_frame(&small_config(), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = GeneratorConfig {
            cluster_icc: 1.0,
            ..small_config()
        };
        let err = generate_frame(&cfg, 1).unwrap_err().to_string();
        assert!(err.contains("cluster_icc"), "{err}");
        let cfg = GeneratorConfig {
            covariate_outcome_corr: -1.0,
            ..small_config()
        };
        let err = generate_frame(&cfg, 1).unwrap_err().to_string();
        assert!(err.contains("covariate_outcome_corr"), "{err}");
        let cfg = GeneratorConfig {
            outcome_count: 0,
            ..small_config()
        };
        assert!(generate_frame(&cfg, 1).unwrap_err().to_string().contains("outcome_count"));
    }

    #[test]
    fn population_mean_small_cases() {
        let mut f = generate_frame(
            &GeneratorConfig {
                n_parents: 1,
                mean_subsidiaries_per_parent: 0.0,
                n_independent_practices: 3,
                outcome_count: 1,
                ..small_config()
            },
            5,
        )
        .unwrap();
        for (k, p) in f.practices.iter_mut().enumerate() {
            p.true_outcomes[0] = k as f64;
        }
        assert_eq!(population_mean(&f, 0, Level::Practice).unwrap(), 1.0);
        for p in f.practices.iter_mut() {
            p.true_outcomes[0] = 4.25;
        }
        assert_eq!(population_mean(&f, 0, Level::Practice).unwrap(), 4.25);
        assert!(matches!(
            population_mean(&f, 1, Level::Practice),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn binary_outcomes_are_zero_one() {
        let cfg = GeneratorConfig {
            binary_outcomes: vec![1],
            ..small_config()
        };
        let f = generate_frame(&cfg, 2).unwrap();
        assert!(f
            .practices
            .iter()
            .all(|p| p.true_outcomes[1] == 0.0 || p.true_outcomes[1] == 1.0));
    }

    #[test]
    fn nos_matches_subsidiary_records() {
        let f = generate_frame(&small_config(), 9).unwrap();
        let groups = f.subsidiaries_by_parent();
        for p in &f.parents {
            assert_eq!(p.nos as usize, groups[p.id.index()].len());
        }
        f.validate().unwrap();
    }

    fn large_frame(icc: f64, corr: f64) -> Frame {
        let f = generate_frame(
            &GeneratorConfig {
                n_parents: 700,
                mean_subsidiaries_per_parent: 2.0,
                mean_practices_per_subsidiary: 5.0,
                n_independent_practices: 300,
                outcome_count: 1,
                cluster_icc: icc,
                covariate_outcome_corr: corr,
                binary_outcomes: vec![],
            },
            31,
        )
        .unwrap();
        assert!(f.practices.len() >= 5000, "{}", f.practices.len());
        f
    }

    #[test]
    fn subsidiary_icc_matches_config() {
        for icc in [0.1, 0.3, 0.5] {
            let f = large_frame(icc, 0.15);
            let groups: Vec<Vec<f64>> = f
                .practices_by_subsidiary()
                .iter()
                .map(|g| g.iter().map(|&k| f.practices[k].true_outcomes[0]).collect())
                .collect();
            let est = crate::stats::anova_icc(&groups).unwrap();
            assert!((est - icc).abs() <= 0.05, "icc {icc}: estimated {est}");
        }
    }

    #[test]
    fn outcome_tracks_primary_care_headcount() {
        for corr in [0.0, 0.15, 0.5] {
            let f = large_frame(0.3, corr);
            let y: Vec<f64> = f.practices.iter().map(|p| p.true_outcomes[0]).collect();
            let x: Vec<f64> = f.practices.iter().map(|p| f64::from(p.npcp)).collect();
            let r = crate::stats::correlation(&x, &y).unwrap();
            assert!((r - corr).abs() <= 0.05, "corr {corr}: estimated {r}");
        }
    }
}
