//! Multi-stage cluster sampling: per-stage inclusion probabilities, design
//! weights, and seeded draws for three-, two-, and single-level designs.
//!
//! Stage units follow the hierarchy. In a three-level design the first stage
//! selects corporate parents, the second owner subsidiaries within selected
//! parents, the third practices within selected subsidiaries. A two-level
//! design starts at subsidiaries; a single-level design samples practices
//! directly. Independent practices have no parent or subsidiary, so in the
//! multi-level designs they form their own first-stage stratum of singleton
//! PSUs drawn by simple random sampling.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, ParentId, PracticeId, SubsidiaryId};
use crate::rng;

/// Stratum label used for independent practices in multi-level designs.
pub const INDEPENDENT_STRATUM: u32 = u32::MAX;

/// Units are settled as selected/rejected once this close to 1 or 0.
const SETTLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMethod {
    SimpleRandomWithoutReplacement,
    ProbabilityProportionalToSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageProbabilitySpec {
    pub method: StageMethod,
    /// Units drawn per stratum (first stage) or per selected cluster.
    pub sample_size: usize,
    #[serde(default)]
    pub size_measure: Option<String>,
}

impl StageProbabilitySpec {
    pub fn srs(sample_size: usize) -> Self {
        Self {
            method: StageMethod::SimpleRandomWithoutReplacement,
            sample_size,
            size_measure: None,
        }
    }

    pub fn pps(sample_size: usize, size_measure: &str) -> Self {
        Self {
            method: StageMethod::ProbabilityProportionalToSize,
            sample_size,
            size_measure: Some(size_measure.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    ThreeLevel,
    TwoLevel,
    SingleLevel,
}

impl DesignKind {
    pub fn stages(self) -> usize {
        match self {
            DesignKind::ThreeLevel => 3,
            DesignKind::TwoLevel => 2,
            DesignKind::SingleLevel => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    pub design: DesignKind,
    pub stage_specs: Vec<StageProbabilitySpec>,
    /// First-stage stratification covariate; units are split into terciles.
    #[serde(default)]
    pub strata_by: Option<String>,
    /// Independent practices drawn in multi-level designs. When unset, the
    /// first-stage sampling fraction is applied (at least two).
    #[serde(default)]
    pub independent_sample_size: Option<usize>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            design: DesignKind::ThreeLevel,
            stage_specs: vec![
                StageProbabilitySpec::pps(160, "nach"),
                StageProbabilitySpec::srs(3),
                StageProbabilitySpec::srs(12),
            ],
            strata_by: Some("nach".to_string()),
            independent_sample_size: None,
        }
    }
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stage_specs.len() != self.design.stages() {
            return Err(Error::config(
                "stage_specs",
                format!(
                    "design needs {} stage specs, got {}",
                    self.design.stages(),
                    self.stage_specs.len()
                ),
            ));
        }
        for (i, s) in self.stage_specs.iter().enumerate() {
            if s.sample_size == 0 {
                return Err(Error::config(
                    format!("stage_specs[{i}].sample_size"),
                    "must be at least 1",
                ));
            }
            if s.method == StageMethod::ProbabilityProportionalToSize && s.size_measure.is_none() {
                return Err(Error::config(
                    format!("stage_specs[{i}].size_measure"),
                    "required for probability_proportional_to_size",
                ));
            }
        }
        Ok(())
    }
}

/// A sampling unit at any stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "level", content = "id", rename_all = "snake_case")]
pub enum Unit {
    Parent(ParentId),
    Subsidiary(SubsidiaryId),
    Practice(PracticeId),
}

impl Unit {
    pub fn level_name(self) -> &'static str {
        match self {
            Unit::Parent(_) => "parent",
            Unit::Subsidiary(_) => "subsidiary",
            Unit::Practice(_) => "practice",
        }
    }

    pub fn raw_id(self) -> u32 {
        match self {
            Unit::Parent(p) => p.0,
            Unit::Subsidiary(s) => s.0,
            Unit::Practice(k) => k.0,
        }
    }

    pub fn from_parts(level: &str, id: u32) -> Result<Self> {
        match level {
            "parent" => Ok(Unit::Parent(ParentId(id))),
            "subsidiary" => Ok(Unit::Subsidiary(SubsidiaryId(id))),
            "practice" => Ok(Unit::Practice(PracticeId(id))),
            other => Err(Error::Parse(format!("unknown unit level `{other}`"))),
        }
    }
}

/// Covariate value of a unit, used for size measures, strata, and response
/// models. Subsidiaries and parents inherit system counts and total the
/// practice headcounts beneath them.
pub(crate) fn unit_measure(frame: &Frame, unit: Unit, name: &str) -> Result<f64> {
    let practice_totals = |ks: &mut dyn Iterator<Item = usize>| -> Result<f64> {
        let mut total = 0.0;
        for k in ks {
            let pr = &frame.practices[k];
            total += match name {
                "n_practices" => 1.0,
                "np" => f64::from(pr.np),
                "npcp" => f64::from(pr.npcp),
                other => return Err(Error::UnknownColumn(other.to_string())),
            };
        }
        Ok(total)
    };
    match unit {
        Unit::Practice(k) => {
            let pr = &frame.practices[k.index()];
            if name == "n_practices" {
                return Ok(1.0);
            }
            let covs = frame.frame_covariates(pr);
            crate::frame::FRAME_COVARIATES
                .iter()
                .position(|c| *c == name)
                .map(|i| covs[i])
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))
        }
        Unit::Subsidiary(s) => {
            let parent = &frame.parents[frame.subsidiaries[s.index()].parent_id.index()];
            match name {
                "nach" => Ok(f64::from(parent.nach)),
                "nmg" => Ok(f64::from(parent.nmg)),
                "nos" => Ok(f64::from(parent.nos)),
                "pertot" => Ok(parent.pertot),
                _ => practice_totals(
                    &mut frame
                        .practices
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.os_id == Some(s))
                        .map(|(k, _)| k),
                ),
            }
        }
        Unit::Parent(p) => {
            let parent = &frame.parents[p.index()];
            match name {
                "nach" => Ok(f64::from(parent.nach)),
                "nmg" => Ok(f64::from(parent.nmg)),
                "nos" => Ok(f64::from(parent.nos)),
                "pertot" => Ok(parent.pertot),
                _ => practice_totals(
                    &mut frame
                        .practices
                        .iter()
                        .enumerate()
                        .filter(|(_, pr)| {
                            pr.os_id
                                .map(|s| frame.subsidiaries[s.index()].parent_id == p)
                                .unwrap_or(false)
                        })
                        .map(|(k, _)| k),
                ),
            }
        }
    }
}

/// One block of units sampled together: a first-stage stratum, or the
/// children of one selected cluster.
#[derive(Debug, Clone)]
struct Group {
    units: Vec<Unit>,
    method: StageMethod,
    n: usize,
    stratum: u32,
}

#[derive(Debug, Clone)]
struct Layout {
    stage1: Vec<Group>,
    /// Child groups keyed by their parent unit (stage 2 then stage 3).
    children: BTreeMap<Unit, Group>,
    size_measures: Vec<Option<String>>,
}

fn tercile_strata(frame: &Frame, units: &[Unit], by: &str) -> Result<Vec<(u32, Vec<Unit>)>> {
    let mut keyed = Vec::with_capacity(units.len());
    for &u in units {
        keyed.push((unit_measure(frame, u, by)?, u));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = keyed.len();
    let (base, extra) = (n / 3, n % 3);
    let mut out = Vec::new();
    let mut start = 0;
    for h in 0..3 {
        let len = base + usize::from(h < extra);
        let members: Vec<Unit> = keyed[start..start + len].iter().map(|&(_, u)| u).collect();
        start += len;
        if !members.is_empty() {
            out.push((h as u32, members));
        }
    }
    Ok(out)
}

fn build_layout(frame: &Frame, spec: &DesignSpec) -> Result<Layout> {
    spec.validate()?;
    let subs_by_parent = frame.subsidiaries_by_parent();
    let practices_by_sub = frame.practices_by_subsidiary();
    let independents = frame.independent_practices();

    let first_units: Vec<Unit> = match spec.design {
        DesignKind::ThreeLevel => frame.parents.iter().map(|p| Unit::Parent(p.id)).collect(),
        DesignKind::TwoLevel => frame
            .subsidiaries
            .iter()
            .map(|s| Unit::Subsidiary(s.id))
            .collect(),
        DesignKind::SingleLevel => frame
            .practices
            .iter()
            .map(|p| Unit::Practice(p.id))
            .collect(),
    };
    let first = &spec.stage_specs[0];
    let strata = match &spec.strata_by {
        Some(by) => tercile_strata(frame, &first_units, by)?,
        None if first_units.is_empty() => Vec::new(),
        None => vec![(0, first_units.clone())],
    };
    let mut stage1 = Vec::new();
    for (h, units) in strata {
        if units.len() < first.sample_size {
            return Err(Error::Design(format!(
                "stratum {h} has {} first-stage units but sample size {} was requested",
                units.len(),
                first.sample_size
            )));
        }
        stage1.push(Group {
            units,
            method: first.method,
            n: first.sample_size,
            stratum: h,
        });
    }

    if spec.design != DesignKind::SingleLevel && !independents.is_empty() {
        let n_first: usize = stage1.iter().map(|g| g.units.len()).sum();
        let n_drawn: usize = stage1.iter().map(|g| g.n).sum();
        let n = match spec.independent_sample_size {
            Some(n) => n,
            None => {
                let frac = if n_first == 0 {
                    1.0
                } else {
                    n_drawn as f64 / n_first as f64
                };
                ((independents.len() as f64 * frac).round() as usize)
                    .max(2)
                    .min(independents.len())
            }
        };
        if n > independents.len() {
            return Err(Error::Design(format!(
                "independent stratum has {} practices but sample size {n} was requested",
                independents.len()
            )));
        }
        if n > 0 {
            stage1.push(Group {
                units: independents
                    .iter()
                    .map(|&k| Unit::Practice(frame.practices[k].id))
                    .collect(),
                method: StageMethod::SimpleRandomWithoutReplacement,
                n,
                stratum: INDEPENDENT_STRATUM,
            });
        }
    }

    let mut children = BTreeMap::new();
    let child_group = |units: Vec<Unit>, stage: &StageProbabilitySpec| Group {
        n: stage.sample_size.min(units.len()),
        units,
        method: stage.method,
        stratum: 0,
    };
    match spec.design {
        DesignKind::ThreeLevel => {
            for p in &frame.parents {
                let subs: Vec<Unit> = subs_by_parent[p.id.index()]
                    .iter()
                    .map(|&j| Unit::Subsidiary(frame.subsidiaries[j].id))
                    .collect();
                if !subs.is_empty() {
                    children.insert(Unit::Parent(p.id), child_group(subs, &spec.stage_specs[1]));
                }
            }
            for s in &frame.subsidiaries {
                let prs: Vec<Unit> = practices_by_sub[s.id.index()]
                    .iter()
                    .map(|&k| Unit::Practice(frame.practices[k].id))
                    .collect();
                if !prs.is_empty() {
                    children.insert(
                        Unit::Subsidiary(s.id),
                        child_group(prs, &spec.stage_specs[2]),
                    );
                }
            }
        }
        DesignKind::TwoLevel => {
            for s in &frame.subsidiaries {
                let prs: Vec<Unit> = practices_by_sub[s.id.index()]
                    .iter()
                    .map(|&k| Unit::Practice(frame.practices[k].id))
                    .collect();
                if !prs.is_empty() {
                    children.insert(
                        Unit::Subsidiary(s.id),
                        child_group(prs, &spec.stage_specs[1]),
                    );
                }
            }
        }
        DesignKind::SingleLevel => {}
    }

    Ok(Layout {
        stage1,
        children,
        size_measures: spec
            .stage_specs
            .iter()
            .map(|s| s.size_measure.clone())
            .collect(),
    })
}

/// Inclusion probabilities for a fixed-size PPS draw of `n` units.
///
/// Each unit gets `n * s_i / sum(s)`; any unit reaching 1 becomes a
/// certainty selection and the rest are rescaled over the remaining sample
/// size, repeating until no probability exceeds 1.
pub fn pps_inclusion_probabilities(sizes: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > sizes.len() {
        return Err(Error::Design(format!(
            "sample size {n} exceeds {} units",
            sizes.len()
        )));
    }
    if let Some(bad) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Design(format!(
            "size measure must be strictly positive, found {bad}"
        )));
    }
    let mut pi = vec![0.0; sizes.len()];
    let mut certain = vec![false; sizes.len()];
    loop {
        let n_certain = certain.iter().filter(|&&c| c).count();
        let remaining = n - n_certain.min(n);
        let total: f64 = sizes
            .iter()
            .zip(&certain)
            .filter(|(_, &c)| !c)
            .map(|(s, _)| s)
            .sum();
        let mut promoted = false;
        for i in 0..sizes.len() {
            if certain[i] {
                pi[i] = 1.0;
                continue;
            }
            let p = if total > 0.0 {
                remaining as f64 * sizes[i] / total
            } else {
                0.0
            };
            if p >= 1.0 {
                certain[i] = true;
                promoted = true;
            }
            pi[i] = p.min(1.0);
        }
        if !promoted {
            return Ok(pi);
        }
    }
}

fn group_probabilities(
    frame: &Frame,
    group: &Group,
    size_measure: Option<&str>,
) -> Result<Vec<f64>> {
    let big_n = group.units.len();
    match group.method {
        StageMethod::SimpleRandomWithoutReplacement => {
            Ok(vec![group.n as f64 / big_n as f64; big_n])
        }
        StageMethod::ProbabilityProportionalToSize => {
            let name = size_measure.expect("validated: PPS has a size measure");
            let sizes = group
                .units
                .iter()
                .map(|&u| unit_measure(frame, u, name))
                .collect::<Result<Vec<_>>>()?;
            pps_inclusion_probabilities(&sizes, group.n).map_err(|e| match e {
                Error::Design(msg) => Error::Design(format!("size measure `{name}`: {msg}")),
                other => other,
            })
        }
    }
}

/// Per-stage inclusion probabilities for every unit in the frame.
///
/// Second- and third-stage values are conditional on the enclosing cluster
/// having been selected. Stages that do not apply to a unit are absent and
/// count as 1 in products.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageProbabilities {
    pub first: BTreeMap<Unit, f64>,
    pub second_given_first: BTreeMap<Unit, f64>,
    pub third_given_first_second: BTreeMap<Unit, f64>,
    pub stratum: BTreeMap<Unit, u32>,
}

pub fn compute_stage_probabilities(frame: &Frame, spec: &DesignSpec) -> Result<StageProbabilities> {
    let layout = build_layout(frame, spec)?;
    probabilities_for_layout(frame, spec, &layout)
}

fn probabilities_for_layout(
    frame: &Frame,
    spec: &DesignSpec,
    layout: &Layout,
) -> Result<StageProbabilities> {
    let mut out = StageProbabilities::default();
    for g in &layout.stage1 {
        let measure = if g.stratum == INDEPENDENT_STRATUM {
            None
        } else {
            layout.size_measures[0].as_deref()
        };
        let pis = group_probabilities(frame, g, measure)?;
        for (&u, p) in g.units.iter().zip(pis) {
            out.first.insert(u, p);
            out.stratum.insert(u, g.stratum);
        }
    }
    for (parent, g) in &layout.children {
        let stage = match (spec.design, parent) {
            (DesignKind::ThreeLevel, Unit::Parent(_)) => 1,
            (DesignKind::ThreeLevel, _) => 2,
            _ => 1,
        };
        let pis = group_probabilities(frame, g, layout.size_measures[stage].as_deref())?;
        let target = if stage == 1 {
            &mut out.second_given_first
        } else {
            &mut out.third_given_first_second
        };
        for (&u, p) in g.units.iter().zip(pis) {
            target.insert(u, p);
        }
    }
    Ok(out)
}

/// One selected practice with its stage probabilities and design weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPractice {
    pub practice_id: PracticeId,
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    pub pi_final: f64,
    pub weight: f64,
    pub stratum: u32,
    /// First-stage unit containing the practice.
    pub psu: Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub design: DesignKind,
    pub selected_practice_ids: Vec<PracticeId>,
    /// Selected first-stage units and their probabilities.
    pub pi_first: BTreeMap<Unit, f64>,
    pub pi_second_given_first: BTreeMap<Unit, f64>,
    pub pi_third_given_first_second: BTreeMap<Unit, f64>,
    pub pi_final: BTreeMap<PracticeId, f64>,
    pub weight: BTreeMap<PracticeId, f64>,
    pub practices: Vec<SelectedPractice>,
}

impl SampleDraw {
    pub fn selected_parents(&self) -> Vec<ParentId> {
        self.pi_first
            .keys()
            .filter_map(|u| match u {
                Unit::Parent(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn selected_subsidiaries(&self) -> Vec<SubsidiaryId> {
        self.pi_first
            .keys()
            .chain(self.pi_second_given_first.keys())
            .filter_map(|u| match u {
                Unit::Subsidiary(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    pub fn record(&self, id: PracticeId) -> Option<&SelectedPractice> {
        self.practices
            .binary_search_by_key(&id, |r| r.practice_id)
            .ok()
            .map(|i| &self.practices[i])
    }

    /// Assembles a draw from per-practice records, rebuilding the maps.
    pub fn from_records(design: DesignKind, mut practices: Vec<SelectedPractice>) -> Self {
        practices.sort_by_key(|r| r.practice_id);
        Self {
            design,
            selected_practice_ids: practices.iter().map(|r| r.practice_id).collect(),
            pi_first: BTreeMap::new(),
            pi_second_given_first: BTreeMap::new(),
            pi_third_given_first_second: BTreeMap::new(),
            pi_final: practices.iter().map(|r| (r.practice_id, r.pi_final)).collect(),
            weight: practices.iter().map(|r| (r.practice_id, r.weight)).collect(),
            practices,
        }
    }
}

impl SampleDraw {
    /// Rebuilds the per-stage unit maps from the practice records, e.g.
    /// after reading a draw back from disk. Selected clusters that yielded
    /// no practice cannot be recovered.
    pub fn restore_unit_maps(&mut self, frame: &Frame) -> Result<()> {
        self.pi_first.clear();
        self.pi_second_given_first.clear();
        self.pi_third_given_first_second.clear();
        for r in &self.practices {
            let practice = frame.practices.get(r.practice_id.index()).ok_or(Error::OutOfRange {
                what: "practice",
                index: r.practice_id.index(),
                limit: frame.practices.len(),
            })?;
            self.pi_first.insert(r.psu, r.pi1);
            if matches!(r.psu, Unit::Practice(_)) {
                continue;
            }
            let leaf = Unit::Practice(r.practice_id);
            match self.design {
                DesignKind::ThreeLevel => {
                    let os = practice.os_id.ok_or_else(|| {
                        Error::Design(format!("practice {} has no subsidiary", r.practice_id))
                    })?;
                    self.pi_second_given_first.insert(Unit::Subsidiary(os), r.pi2);
                    self.pi_third_given_first_second.insert(leaf, r.pi3);
                }
                DesignKind::TwoLevel => {
                    self.pi_second_given_first.insert(leaf, r.pi2);
                }
                DesignKind::SingleLevel => {}
            }
        }
        Ok(())
    }
}

/// Splitting (pivotal) draw with exact first-order inclusion probabilities.
///
/// Units are visited in random order; each duel between two fractional
/// units settles at least one of them at 0 or 1 while preserving both
/// expectations. A leftover fractional unit (non-integer total) is settled
/// by a final Bernoulli draw.
pub fn pivotal_draw<R: Rng + ?Sized>(rng: &mut R, probabilities: &[f64]) -> Vec<bool> {
    let mut p: Vec<f64> = probabilities.to_vec();
    let settled = |x: f64| !(SETTLE_EPS..=1.0 - SETTLE_EPS).contains(&x);
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| !settled(p[i])).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut current: Option<usize> = None;
    for b in order {
        let Some(a) = current else {
            current = Some(b);
            continue;
        };
        let (pa, pb) = (p[a], p[b]);
        let s = pa + pb;
        let u: f64 = rng.random();
        let survivor = if s < 1.0 {
            if u < pb / s {
                p[a] = 0.0;
                p[b] = s;
                b
            } else {
                p[b] = 0.0;
                p[a] = s;
                a
            }
        } else if u < (1.0 - pb) / (2.0 - s) {
            p[a] = 1.0;
            p[b] = s - 1.0;
            b
        } else {
            p[b] = 1.0;
            p[a] = s - 1.0;
            a
        };
        current = if settled(p[survivor]) {
            None
        } else {
            Some(survivor)
        };
    }
    if let Some(c) = current {
        let u: f64 = rng.random();
        p[c] = if u < p[c] { 1.0 } else { 0.0 };
    }
    p.into_iter().map(|x| x > 0.5).collect()
}

fn draw_group<R: Rng + ?Sized>(rng: &mut R, group: &Group, pis: &[f64]) -> Vec<Unit> {
    match group.method {
        StageMethod::SimpleRandomWithoutReplacement if group.n == group.units.len() => {
            group.units.clone()
        }
        StageMethod::SimpleRandomWithoutReplacement => {
            let mut idx = index::sample(rng, group.units.len(), group.n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| group.units[i]).collect()
        }
        StageMethod::ProbabilityProportionalToSize => pivotal_draw(rng, pis)
            .into_iter()
            .zip(&group.units)
            .filter(|(sel, _)| *sel)
            .map(|(_, &u)| u)
            .collect(),
    }
}

/// Draws a sample stage by stage.
pub fn draw_sample(frame: &Frame, spec: &DesignSpec, seed: u64) -> Result<SampleDraw> {
    let layout = build_layout(frame, spec)?;
    let probs = probabilities_for_layout(frame, spec, &layout)?;
    draw_with_layout(spec, &layout, &probs, seed, false)
}

/// Draws a sample using externally supplied stage probabilities.
///
/// The design's structure (stages, strata, clusters) is taken from `spec`;
/// every group is drawn by the pivotal method with the supplied
/// probabilities, which must cover every unit and lie in (0, 1].
pub fn draw_sample_with_probabilities(
    frame: &Frame,
    spec: &DesignSpec,
    probabilities: &StageProbabilities,
    seed: u64,
) -> Result<SampleDraw> {
    let layout = build_layout(frame, spec)?;
    let all = probabilities
        .first
        .values()
        .chain(probabilities.second_given_first.values())
        .chain(probabilities.third_given_first_second.values());
    for &p in all {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Design(format!(
                "supplied probability {p} outside (0, 1]"
            )));
        }
    }
    draw_with_layout(spec, &layout, probabilities, seed, true)
}

fn lookup(map: &BTreeMap<Unit, f64>, u: Unit) -> Result<f64> {
    map.get(&u)
        .copied()
        .ok_or_else(|| Error::Design(format!("no probability for {} {}", u.level_name(), u.raw_id())))
}

fn draw_with_layout(
    spec: &DesignSpec,
    layout: &Layout,
    probs: &StageProbabilities,
    seed: u64,
    force_pivotal: bool,
) -> Result<SampleDraw> {
    let mut rng = rng::stream(seed);
    let draw_one = |rng: &mut rng::StreamRng,
                        group: &Group,
                        map: &BTreeMap<Unit, f64>|
     -> Result<Vec<Unit>> {
        let pis = group
            .units
            .iter()
            .map(|&u| lookup(map, u))
            .collect::<Result<Vec<_>>>()?;
        if force_pivotal {
            let g = Group {
                method: StageMethod::ProbabilityProportionalToSize,
                ..group.clone()
            };
            Ok(draw_group(rng, &g, &pis))
        } else {
            Ok(draw_group(rng, group, &pis))
        }
    };

    let mut pi_first = BTreeMap::new();
    let mut pi_second = BTreeMap::new();
    let mut pi_third = BTreeMap::new();
    let mut records = Vec::new();

    let mut push_practice = |unit: Unit, pi1: f64, pi2: f64, pi3: f64, stratum: u32, psu: Unit| {
        let Unit::Practice(id) = unit else {
            unreachable!("leaf units are practices")
        };
        let pi_final = pi1 * pi2 * pi3;
        records.push(SelectedPractice {
            practice_id: id,
            pi1,
            pi2,
            pi3,
            pi_final,
            weight: 1.0 / pi_final,
            stratum,
            psu,
        });
    };

    for g in &layout.stage1 {
        for u1 in draw_one(&mut rng, g, &probs.first)? {
            let p1 = probs.first[&u1];
            pi_first.insert(u1, p1);
            match u1 {
                Unit::Practice(_) => push_practice(u1, p1, 1.0, 1.0, g.stratum, u1),
                _ => {
                    let Some(g2) = layout.children.get(&u1) else {
                        continue;
                    };
                    for u2 in draw_one(&mut rng, g2, &probs.second_given_first)? {
                        let p2 = probs.second_given_first[&u2];
                        pi_second.insert(u2, p2);
                        match (spec.design, u2) {
                            (_, Unit::Practice(_)) => {
                                push_practice(u2, p1, p2, 1.0, g.stratum, u1)
                            }
                            (DesignKind::ThreeLevel, _) => {
                                let Some(g3) = layout.children.get(&u2) else {
                                    continue;
                                };
                                for u3 in draw_one(&mut rng, g3, &probs.third_given_first_second)?
                                {
                                    let p3 = probs.third_given_first_second[&u3];
                                    pi_third.insert(u3, p3);
                                    push_practice(u3, p1, p2, p3, g.stratum, u1);
                                }
                            }
                            _ => unreachable!("two-level children are practices"),
                        }
                    }
                }
            }
        }
    }

    let mut draw = SampleDraw::from_records(spec.design, records);
    draw.pi_first = pi_first;
    draw.pi_second_given_first = pi_second;
    draw.pi_third_given_first_second = pi_third;
    Ok(draw)
}
