use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use survey_impute::dataset::{Column, ColumnRole, StudyDataset};
use survey_impute::estimators::{mi_mean, naive_mean};
use survey_impute::impute::{gibbs_impute, two_step_impute, ImputationModelSpec, Scenario};
use survey_impute::rng::{derive_seed, stream};
use survey_impute::stats::{anova_icc, correlation};
use survey_impute::{Level, PracticeId, SubsidiaryId};

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Clustered rows with complete outcome `y0` (ICC `icc`) and predictors.
struct Toy {
    clusters: usize,
    size: usize,
    icc: f64,
}

impl Toy {
    fn build(&self, seed: u64) -> StudyDataset {
        let mut rng = stream(seed);
        let n = self.clusters * self.size;
        let (mut y, mut x1, mut x2, mut cl) = (vec![], vec![], vec![], vec![]);
        for c in 0..self.clusters {
            let u = normal(&mut rng);
            for _ in 0..self.size {
                let a = normal(&mut rng);
                let b = normal(&mut rng);
                x1.push(a);
                x2.push(b);
                y.push(
                    5.0 + 0.3 * a + self.icc.sqrt() * u + (1.0 - self.icc).sqrt() * normal(&mut rng),
                );
                cl.push(Some(SubsidiaryId(c as u32)));
            }
        }
        StudyDataset::new(
            (0..n as u32).map(PracticeId).collect(),
            cl,
            vec![None; n],
            vec![true; n],
            vec![true; n],
            vec![
                Column::complete("y0", ColumnRole::Outcome, y),
                Column::complete("x1", ColumnRole::FrameCovariate, x1),
                Column::complete("x2", ColumnRole::FrameCovariate, x2),
            ],
        )
        .unwrap()
    }
}

fn mask(ds: &mut StudyDataset, column: &str, frac: f64, seed: u64) {
    let mut rng = stream(seed);
    let col = ds.column_mut(column).unwrap();
    for i in 0..col.values.len() {
        if rng.random::<f64>() < frac {
            col.values[i] = f64::NAN;
            col.observed[i] = false;
        }
    }
}

fn spec(outcomes: &[&str], predictors: &[&str]) -> ImputationModelSpec {
    ImputationModelSpec {
        outcome_columns: outcomes.iter().map(|s| s.to_string()).collect(),
        predictor_columns: predictors.iter().map(|s| s.to_string()).collect(),
        ..ImputationModelSpec::default()
    }
}

fn groups(ds: &StudyDataset, column: &str) -> Vec<Vec<f64>> {
    let v = &ds.column(column).unwrap().values;
    ds.cluster_groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| v[i]).collect())
        .collect()
}

#[test]
fn mcar_recovery_with_one_cluster() {
    let mut covered = 0;
    for rep in 0..100u64 {
        let mut rng = stream(derive_seed(7, &[rep]));
        let n = 200;
        let y: Vec<f64> = (0..n).map(|_| 3.0 + 2.0 * normal(&mut rng)).collect();
        let complete_mean = y.iter().sum::<f64>() / n as f64;
        let mut ds = StudyDataset::new(
            (0..n as u32).map(PracticeId).collect(),
            vec![Some(SubsidiaryId(0)); n],
            vec![None; n],
            vec![true; n],
            vec![true; n],
            vec![Column::complete("y0", ColumnRole::Outcome, y)],
        )
        .unwrap();
        mask(&mut ds, "y0", 0.2, derive_seed(8, &[rep]));
        let set = gibbs_impute(&ds, &spec(&["y0"], &[]), derive_seed(9, &[rep])).unwrap();
        let r = mi_mean(&set, "y0", Level::Practice).unwrap();
        if (r.mean - complete_mean).abs() <= 2.0 * r.se {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn completed_datasets_keep_cluster_correlation() {
    let toy = Toy {
        clusters: 200,
        size: 12,
        icc: 0.3,
    };
    for rep in 0..10u64 {
        let complete = toy.build(rep);
        let icc = anova_icc(&groups(&complete, "y0")).unwrap();
        let mut ds = complete.clone();
        mask(&mut ds, "y0", 0.2, 100 + rep);
        let set = gibbs_impute(&ds, &spec(&["y0"], &["x1", "x2"]), 200 + rep).unwrap();
        let per: Vec<f64> = set
            .datasets
            .iter()
            .map(|d| anova_icc(&groups(d, "y0")).unwrap())
            .collect();
        let avg = per.iter().sum::<f64>() / per.len() as f64;
        assert!((avg - icc).abs() <= 0.05, "rep {rep}: {avg} vs {icc}");
        for v in per {
            assert!((v - icc).abs() <= 0.05, "rep {rep}: {v} vs {icc}");
        }
    }
}

#[test]
fn complete_auxiliaries_make_step_one_a_no_op() {
    let toy = Toy {
        clusters: 30,
        size: 6,
        icc: 0.2,
    };
    let mut ds = toy.build(1);
    mask(&mut ds, "y0", 0.3, 2);
    let s = ImputationModelSpec {
        outcome_columns: vec!["y0".into()],
        n_burn: 50,
        n_between: 5,
        n_imputations: 3,
        ..ImputationModelSpec::default()
    };
    let two = two_step_impute(&ds, &["x1".into()], &["x2".into()], &s, 77).unwrap();
    let direct = gibbs_impute(
        &ds,
        &ImputationModelSpec {
            predictor_columns: vec!["x1".into(), "x2".into()],
            ..s.clone()
        },
        77,
    )
    .unwrap();
    assert_eq!(two.datasets, direct.datasets);
    assert!(two.chain_diagnostics.predictor_step.is_none());

    // no auxiliaries at all: the frame-only scenario
    let mi1 = two_step_impute(&ds, &["x1".into()], &[], &s, 78).unwrap();
    let direct = gibbs_impute(
        &ds,
        &ImputationModelSpec {
            predictor_columns: vec!["x1".into()],
            ..s
        },
        78,
    )
    .unwrap();
    assert_eq!(mi1.datasets, direct.datasets);
}

#[test]
fn step_one_recovers_masked_predictor() {
    // aux = linear in frame covariates with R^2 = 0.8
    let toy = Toy {
        clusters: 100,
        size: 8,
        icc: 0.2,
    };
    let mut ds = toy.build(4);
    let mut rng = stream(5);
    let (x1, x2) = (
        ds.column("x1").unwrap().values.clone(),
        ds.column("x2").unwrap().values.clone(),
    );
    let aux: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| {
            let signal = (a + b) / 2f64.sqrt();
            0.8f64.sqrt() * signal + 0.2f64.sqrt() * normal(&mut rng)
        })
        .collect();
    ds.columns
        .push(Column::complete("aux", ColumnRole::ClaimsCovariate, aux.clone()));
    mask(&mut ds, "aux", 0.2, 6);
    mask(&mut ds, "y0", 0.3, 7);
    let s = ImputationModelSpec {
        outcome_columns: vec!["y0".into()],
        ..ImputationModelSpec::default()
    };
    let set = two_step_impute(&ds, &["x1".into(), "x2".into()], &["aux".into()], &s, 8).unwrap();
    let filled = &set.datasets[0].column("aux").unwrap().values;
    let rows: Vec<usize> = (0..aux.len()).filter(|&i| set.was_missing("aux", i)).collect();
    assert!(rows.len() > 100);
    let truth: Vec<f64> = rows.iter().map(|&i| aux[i]).collect();
    let imputed: Vec<f64> = rows.iter().map(|&i| filled[i]).collect();
    let r = correlation(&truth, &imputed).unwrap();
    assert!(r > 0.8, "r = {r}");
    // averaged predictor cells are identical in every completed dataset
    for d in &set.datasets {
        assert_eq!(&d.column("aux").unwrap().values, filled);
    }
    assert!(set.chain_diagnostics.predictor_step.is_some());
}

#[test]
fn step_errors_name_the_step() {
    let toy = Toy {
        clusters: 10,
        size: 4,
        icc: 0.2,
    };
    let mut ds = toy.build(1);
    mask(&mut ds, "y0", 0.3, 1);
    ds.columns.push(Column::new(
        "aux",
        ColumnRole::ClaimsCovariate,
        vec![None; ds.n_rows()],
    ));
    let err = two_step_impute(&ds, &["x1".into()], &["aux".into()], &spec(&["y0"], &[]), 1)
        .unwrap_err();
    assert!(err.to_string().starts_with("predictor imputation:"), "{err}");
}

#[test]
fn scenario_column_sets() {
    let mi1 = Scenario::Mi1.columns();
    assert_eq!(mi1.frame_covariates, ["np", "npcp", "nach", "nmg", "nos", "pertot"]);
    assert!(mi1.extra_covariates.is_empty());
    let mi2 = Scenario::Mi2.columns();
    assert_eq!(mi2.frame_covariates, mi1.frame_covariates);
    assert_eq!(mi2.extra_covariates.len(), 13);
    assert!(mi2.extra_covariates.iter().any(|c| c == "mean_age"));
    assert!("MI3".parse::<Scenario>().is_err());
    assert_eq!("MI2".parse::<Scenario>().unwrap(), Scenario::Mi2);
}

#[test]
fn mi_mean_covers_population_mean() {
    // the full dataset is the population; respondents are an MCAR subset
    let toy = Toy {
        clusters: 60,
        size: 8,
        icc: 0.3,
    };
    let mut covered = 0;
    let reps = 40;
    for rep in 0..reps {
        let complete = toy.build(500 + rep);
        let truth = naive_mean(&complete, "y0").unwrap().mean;
        let mut ds = complete.clone();
        mask(&mut ds, "y0", 0.5, 600 + rep);
        let s = ImputationModelSpec {
            n_burn: 200,
            n_between: 20,
            ..spec(&["y0"], &["x1", "x2"])
        };
        let set = gibbs_impute(&ds, &s, 700 + rep).unwrap();
        let r = mi_mean(&set, "y0", Level::Practice).unwrap();
        if (r.mean - truth).abs() <= 2.0 * r.se {
            covered += 1;
        }
    }
    assert!(covered as f64 >= 0.9 * reps as f64, "{covered} of {reps}");
}
