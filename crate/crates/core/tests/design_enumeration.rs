use survey_impute::dataset::{Column, ColumnRole, StudyDataset};
use survey_impute::estimators::{naive_mean, weighted_mean};
use survey_impute::{DesignKind, ParentId, PracticeId, SampleDraw, SelectedPractice, SubsidiaryId, Unit};

const STRATA: usize = 3;
const PSUS: usize = 4;
const SSUS: usize = 3;
const N_PSU: usize = 2;
const N_SSU: usize = 2;

/// Toy population: the within-PSU spread dominates the between-PSU spread.
fn value(h: usize, i: usize, j: usize) -> f64 {
    let offsets = [-2.0, 0.5, 1.5];
    10.0 * (h + 1) as f64 + 0.25 * i as f64 + offsets[(i + j) % SSUS] * (1.0 + 0.2 * j as f64)
}

fn pairs(n: usize) -> Vec<[usize; 2]> {
    let mut out = vec![];
    for a in 0..n {
        for b in a + 1..n {
            out.push([a, b]);
        }
    }
    out
}

/// Every (PSU pair, SSU pair, SSU pair) choice within one stratum.
fn stratum_paths() -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![];
    for psu in pairs(PSUS) {
        for s0 in pairs(SSUS) {
            for s1 in pairs(SSUS) {
                let mut units = vec![];
                for (i, ss) in [(psu[0], s0), (psu[1], s1)] {
                    units.extend(ss.iter().map(|&j| (i, j)));
                }
                out.push(units);
            }
        }
    }
    out
}

fn estimate(path: &[&Vec<(usize, usize)>]) -> (f64, f64) {
    let pi1 = N_PSU as f64 / PSUS as f64;
    let pi2 = N_SSU as f64 / SSUS as f64;
    let mut records = vec![];
    let (mut ids, mut clusters, mut parents, mut ys) = (vec![], vec![], vec![], vec![]);
    for (h, units) in path.iter().enumerate() {
        for &(i, j) in units.iter() {
            let psu = (h * PSUS + i) as u32;
            let id = PracticeId((psu as usize * SSUS + j) as u32);
            records.push(SelectedPractice {
                practice_id: id,
                pi1,
                pi2,
                pi3: 1.0,
                pi_final: pi1 * pi2,
                weight: 1.0 / (pi1 * pi2),
                stratum: h as u32,
                psu: Unit::Parent(ParentId(psu)),
            });
            ids.push(id);
            clusters.push(Some(SubsidiaryId(id.0)));
            parents.push(Some(ParentId(psu)));
            ys.push(value(h, i, j));
        }
    }
    let n = ids.len();
    let ds = StudyDataset::new(
        ids,
        clusters,
        parents,
        vec![true; n],
        vec![true; n],
        vec![Column::complete("y0", ColumnRole::Outcome, ys)],
    )
    .unwrap();
    let draw = SampleDraw::from_records(DesignKind::TwoLevel, records);
    let r = weighted_mean(&ds, &draw, "y0").unwrap();
    (r.mean, r.se * r.se)
}

#[test]
fn weighted_mean_is_design_unbiased_over_all_samples() {
    let mut total = 0.0;
    for h in 0..STRATA {
        for i in 0..PSUS {
            for j in 0..SSUS {
                total += value(h, i, j);
            }
        }
    }
    let truth = total / (STRATA * PSUS * SSUS) as f64;

    let paths = stratum_paths();
    let (mut n, mut sum, mut sum_sq, mut sum_v) = (0usize, 0.0, 0.0, 0.0);
    for a in &paths {
        for b in &paths {
            for c in &paths {
                let (m, v) = estimate(&[a, b, c]);
                n += 1;
                sum += m;
                sum_sq += m * m;
                sum_v += v;
            }
        }
    }
    assert_eq!(n, 54usize.pow(3));
    let expectation = sum / n as f64;
    let true_var = sum_sq / n as f64 - expectation * expectation;
    let mean_v = sum_v / n as f64;
    assert!((expectation - truth).abs() <= 1e-10, "{expectation} vs {truth}");
    let ratio = mean_v / true_var;
    assert!((ratio - 1.0).abs() <= 0.10, "E[v] / Var = {ratio}");
}

#[test]
fn equal_weights_reduce_to_the_naive_mean() {
    let paths = stratum_paths();
    let (m, _) = estimate(&[&paths[0], &paths[7], &paths[30]]);
    let mut ys = vec![];
    for (h, p) in [&paths[0], &paths[7], &paths[30]].iter().enumerate() {
        ys.extend(p.iter().map(|&(i, j)| value(h, i, j)));
    }
    let n = ys.len();
    let ds = StudyDataset::new(
        (0..n as u32).map(PracticeId).collect(),
        vec![None; n],
        vec![None; n],
        vec![true; n],
        vec![true; n],
        vec![Column::complete("y0", ColumnRole::Outcome, ys)],
    )
    .unwrap();
    assert_eq!(m, naive_mean(&ds, "y0").unwrap().mean);
}
