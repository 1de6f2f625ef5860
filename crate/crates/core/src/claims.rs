//! Synthetic beneficiary claims, plurality-of-care attribution, and
//! practice-level aggregation into auxiliary covariates.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, PracticeId};
use crate::rng;

/// Practice-level claims covariates used as imputation predictors, in the
/// order written to the study dataset. Region enters as three indicators
/// against the Midwest reference.
pub const CLAIMS_COVARIATES: [&str; 13] = [
    "practice_size",
    "region_northeast",
    "region_south",
    "region_west",
    "pct_rural",
    "mean_age",
    "pct_female",
    "mean_income",
    "system_size",
    "pct_white",
    "pct_black",
    "pct_hispanic",
    "pct_other",
];

/// Aggregate whose practice-level signal is tied to outcome 0.
pub const DRIVER_COVARIATE: &str = "mean_age";

const AGE_CENTER: f64 = 72.0;
const AGE_PRACTICE_SD: f64 = 4.0;
const AGE_BENEFICIARY_SD: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    White,
    Black,
    Hispanic,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Midwest,
    Northeast,
    South,
    West,
}

impl Region {
    const ALL: [Region; 4] = [
        Region::Midwest,
        Region::Northeast,
        Region::South,
        Region::West,
    ];
}

/// Visits to one billing TIN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinVisits {
    pub tin: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beneficiary {
    pub id: u64,
    pub age: f64,
    pub female: u8,
    /// Median household income of the beneficiary's zip code.
    pub income: f64,
    pub race: Race,
    pub rural: u8,
    pub partial_dual: u8,
    pub full_dual: u8,
    pub hcc_count: u32,
    pub admissions: u32,
    pub depression: u8,
    pub smi: u8,
    pub region: Region,
    pub visit_tins: Vec<TinVisits>,
}

/// Practice-level means and proportions over attributed beneficiaries.
/// Rate fields are `None` when no beneficiary was attributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsAggregate {
    pub practice_id: PracticeId,
    pub practice_size: u32,
    pub region: Option<Region>,
    pub pct_rural: Option<f64>,
    pub pct_female: Option<f64>,
    pub pct_white: Option<f64>,
    pub pct_black: Option<f64>,
    pub pct_hispanic: Option<f64>,
    pub pct_other: Option<f64>,
    pub pct_partial_dual: Option<f64>,
    pub pct_full_dual: Option<f64>,
    pub pct_depression: Option<f64>,
    pub pct_smi: Option<f64>,
    pub mean_age: Option<f64>,
    pub mean_income: Option<f64>,
    pub mean_hcc: Option<f64>,
    pub admissions_per_100: Option<f64>,
    /// Hospitals in the owning system; zero for independent practices.
    pub system_size: u32,
}

impl ClaimsAggregate {
    /// Values in [`CLAIMS_COVARIATES`] order, or `None` for an unlinked
    /// practice.
    pub fn covariate_values(&self) -> Option<[f64; 13]> {
        if self.practice_size == 0 {
            return None;
        }
        let region = self.region?;
        let ind = |r: Region| if region == r { 1.0 } else { 0.0 };
        Some([
            f64::from(self.practice_size),
            ind(Region::Northeast),
            ind(Region::South),
            ind(Region::West),
            self.pct_rural?,
            self.mean_age?,
            self.pct_female?,
            self.mean_income?,
            f64::from(self.system_size),
            self.pct_white?,
            self.pct_black?,
            self.pct_hispanic?,
            self.pct_other?,
        ])
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    let v: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    v as u32
}

/// Practice-level traits from which beneficiaries are drawn.
struct PracticeProfile {
    region: Region,
    age_mean: f64,
    female: f64,
    income: f64,
    race_probs: [f64; 4],
    rural: f64,
    partial_dual: f64,
    full_dual: f64,
}

fn softmax(logits: [f64; 4]) -> [f64; 4] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

/// Generates beneficiaries for every practice in the frame.
///
/// The practice-level mean age is
/// `AGE_CENTER + AGE_PRACTICE_SD * (r * z_k + sqrt(1 - r^2) * xi_k)` with
/// `z_k` the standardized outcome 0 of practice `k`. `r` is the requested
/// correlation divided by the reliability of a practice mean over
/// `per_practice_mean` beneficiaries, so the aggregated `mean_age` lands near
/// `aux_outcome_corr`. Each beneficiary's home TIN receives strictly more
/// visits than any noise TIN.
pub fn generate_beneficiaries(
    frame: &Frame,
    per_practice_mean: f64,
    aux_outcome_corr: f64,
    seed: u64,
) -> Result<Vec<Beneficiary>> {
    if frame.practices.is_empty() {
        return Err(Error::InsufficientData("frame has no practices".into()));
    }
    if !(per_practice_mean.is_finite() && per_practice_mean > 0.0) {
        return Err(Error::config("per_practice_mean", "must be positive"));
    }
    if !(aux_outcome_corr > -1.0 && aux_outcome_corr < 1.0) {
        return Err(Error::config("aux_outcome_corr", "must lie in (-1, 1)"));
    }
    let mut rng = rng::stream(seed);

    let parent_regions: Vec<Region> = frame
        .parents
        .iter()
        .map(|_| Region::ALL[rng.random_range(0..4)])
        .collect();

    let y0: Vec<f64> = frame.practices.iter().map(|p| p.true_outcomes[0]).collect();
    let y_mean = crate::stats::mean(&y0).unwrap_or(0.0);
    let y_sd = crate::stats::sample_variance(&y0)
        .map(f64::sqrt)
        .unwrap_or(0.0);

    let noise_var = AGE_BENEFICIARY_SD.powi(2) / per_practice_mean;
    let reliability = (AGE_PRACTICE_SD.powi(2) / (AGE_PRACTICE_SD.powi(2) + noise_var)).sqrt();
    let r = (aux_outcome_corr / reliability).clamp(-0.999, 0.999);
    let r_comp = (1.0 - r * r).sqrt();

    let mut out = Vec::new();
    let n_practices = frame.practices.len();
    for (k, practice) in frame.practices.iter().enumerate() {
        let z = if y_sd > 0.0 {
            (y0[k] - y_mean) / y_sd
        } else {
            0.0
        };
        let region = match frame.parent_of_practice(practice) {
            Some(p) => parent_regions[p.id.index()],
            None => Region::ALL[rng.random_range(0..4)],
        };
        let profile = PracticeProfile {
            region,
            age_mean: AGE_CENTER + AGE_PRACTICE_SD * (r * z + r_comp * std_normal(&mut rng)),
            female: (0.55 + 0.06 * std_normal(&mut rng)).clamp(0.05, 0.95),
            income: (58_000.0 + 14_000.0 * std_normal(&mut rng)).max(15_000.0),
            race_probs: softmax([
                1.5 + 0.5 * std_normal(&mut rng),
                0.5 * std_normal(&mut rng),
                -0.3 + 0.6 * std_normal(&mut rng),
                -0.8 + 0.4 * std_normal(&mut rng),
            ]),
            rural: crate::stats::logistic(-1.2 + 1.0 * std_normal(&mut rng)),
            partial_dual: crate::stats::logistic(-3.0 + 0.4 * std_normal(&mut rng)),
            full_dual: crate::stats::logistic(-1.5 + 0.4 * std_normal(&mut rng)),
        };

        let count = poisson(&mut rng, per_practice_mean);
        for _ in 0..count {
            out.push(draw_beneficiary(
                &mut rng,
                out.len() as u64,
                &profile,
                frame,
                k,
                n_practices,
            ));
        }
    }
    Ok(out)
}

fn draw_beneficiary<R: Rng + ?Sized>(
    rng: &mut R,
    id: u64,
    profile: &PracticeProfile,
    frame: &Frame,
    home: usize,
    n_practices: usize,
) -> Beneficiary {
    let age = (profile.age_mean + AGE_BENEFICIARY_SD * std_normal(rng)).max(0.0);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut race = Race::Other;
    for (p, r) in profile
        .race_probs
        .iter()
        .zip([Race::White, Race::Black, Race::Hispanic, Race::Other])
    {
        acc += p;
        if u < acc {
            race = r;
            break;
        }
    }
    let dual_u: f64 = rng.random();
    let (partial_dual, full_dual) = if dual_u < profile.partial_dual {
        (1, 0)
    } else if dual_u < profile.partial_dual + profile.full_dual {
        (0, 1)
    } else {
        (0, 0)
    };

    let home_count = 2 + poisson(rng, 3.0);
    let mut visit_tins = vec![TinVisits {
        tin: frame.practices[home].tin.clone(),
        count: home_count,
    }];
    let n_noise = if rng.random::<f64>() < 0.5 {
        rng.random_range(1..=2)
    } else {
        0
    };
    for _ in 0..n_noise {
        let other = rng.random_range(0..n_practices);
        if other != home {
            visit_tins.push(TinVisits {
                tin: frame.practices[other].tin.clone(),
                count: rng.random_range(1..home_count),
            });
        }
    }
    if rng.random::<f64>() < 0.1 {
        visit_tins.push(TinVisits {
            tin: format!("EXT{:06}", rng.random_range(0..1_000_000u32)),
            count: rng.random_range(1..home_count),
        });
    }

    Beneficiary {
        id,
        age,
        female: bernoulli(rng, profile.female),
        income: (profile.income + 5_000.0 * std_normal(rng)).max(10_000.0),
        race,
        rural: bernoulli(rng, profile.rural),
        partial_dual,
        full_dual,
        hcc_count: poisson(rng, 2.4),
        admissions: poisson(rng, 0.8),
        depression: bernoulli(rng, 0.2),
        smi: bernoulli(rng, 0.05),
        region: profile.region,
        visit_tins,
    }
}

/// Plurality rule over one visit multiset, restricted to TINs accepted by
/// `known`. Ties go to the lexicographically smallest TIN.
pub fn plurality_tin<'a>(
    visits: &'a [TinVisits],
    known: impl Fn(&str) -> bool,
) -> Option<&'a str> {
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for v in visits.iter().filter(|v| known(&v.tin)) {
        *totals.entry(v.tin.as_str()).or_default() += u64::from(v.count);
    }
    // BTreeMap iterates in ascending TIN order; keep the first maximum.
    let mut best: Option<(&str, u64)> = None;
    for (tin, count) in totals {
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((tin, count));
        }
    }
    best.map(|(t, _)| t)
}

/// Assigns each beneficiary to the frame practice with the most visits.
/// Beneficiaries without any frame TIN are left out.
pub fn attribute(beneficiaries: &[Beneficiary], frame: &Frame) -> BTreeMap<u64, PracticeId> {
    let by_tin: HashMap<&str, PracticeId> = frame
        .practices
        .iter()
        .map(|p| (p.tin.as_str(), p.id))
        .collect();
    beneficiaries
        .iter()
        .filter_map(|b| {
            plurality_tin(&b.visit_tins, |t| by_tin.contains_key(t)).map(|t| (b.id, by_tin[t]))
        })
        .collect()
}

#[derive(Default)]
struct Accumulator {
    n: u32,
    rural: f64,
    female: f64,
    race: [f64; 4],
    partial_dual: f64,
    full_dual: f64,
    depression: f64,
    smi: f64,
    age: f64,
    income: f64,
    hcc: f64,
    admissions: f64,
    regions: [u32; 4],
}

/// Per-practice means and proportions over attributed beneficiaries, one
/// record per frame practice in frame order.
pub fn aggregate(
    beneficiaries: &[Beneficiary],
    attribution: &BTreeMap<u64, PracticeId>,
    frame: &Frame,
) -> Vec<ClaimsAggregate> {
    let mut acc: Vec<Accumulator> = (0..frame.practices.len())
        .map(|_| Accumulator::default())
        .collect();
    for b in beneficiaries {
        let Some(pid) = attribution.get(&b.id) else {
            continue;
        };
        let a = &mut acc[pid.index()];
        a.n += 1;
        a.rural += f64::from(b.rural);
        a.female += f64::from(b.female);
        a.race[b.race as usize] += 1.0;
        a.partial_dual += f64::from(b.partial_dual);
        a.full_dual += f64::from(b.full_dual);
        a.depression += f64::from(b.depression);
        a.smi += f64::from(b.smi);
        a.age += b.age;
        a.income += b.income;
        a.hcc += f64::from(b.hcc_count);
        a.admissions += f64::from(b.admissions);
        a.regions[b.region as usize] += 1;
    }

    frame
        .practices
        .iter()
        .zip(acc)
        .map(|(practice, a)| {
            let n = f64::from(a.n);
            let rate = |x: f64| (a.n > 0).then(|| x / n);
            let region = (a.n > 0).then(|| {
                // ties resolve to the earlier region in enum order
                let mut best = 0;
                for r in 1..4 {
                    if a.regions[r] > a.regions[best] {
                        best = r;
                    }
                }
                Region::ALL[best]
            });
            ClaimsAggregate {
                practice_id: practice.id,
                practice_size: a.n,
                region,
                pct_rural: rate(a.rural),
                pct_female: rate(a.female),
                pct_white: rate(a.race[Race::White as usize]),
                pct_black: rate(a.race[Race::Black as usize]),
                pct_hispanic: rate(a.race[Race::Hispanic as usize]),
                pct_other: rate(a.race[Race::Other as usize]),
                pct_partial_dual: rate(a.partial_dual),
                pct_full_dual: rate(a.full_dual),
                pct_depression: rate(a.depression),
                pct_smi: rate(a.smi),
                mean_age: rate(a.age),
                mean_income: rate(a.income),
                mean_hcc: rate(a.hcc),
                admissions_per_100: rate(100.0 * a.admissions),
                system_size: frame.parent_of_practice(practice).map_or(0, |p| p.nach),
            }
        })
        .collect()
}
