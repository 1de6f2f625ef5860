use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::wishart::{inverse_wishart, symmetrize};
use super::{ChainDiagnostics, DroppedPredictor, ImputationModelSpec, ImputationSet, TraceSummary};
use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::stats;

const COLLINEAR_TOLERANCE: f64 = 1e-6;
const PRIOR_SCALE_FACTOR: f64 = 0.1;

struct Pattern {
    obs: Vec<usize>,
    mis: Vec<usize>,
    rows: Vec<usize>,
}

/// State of one Gibbs chain. Outcomes and predictors are centered and
/// scaled internally; accessors report the original scale.
pub struct Sampler {
    outcomes: Vec<String>,
    predictors: Vec<String>,
    dropped: Vec<DroppedPredictor>,
    n: usize,
    p: usize,
    x: DMatrix<f64>,
    x_center: Vec<f64>,
    x_scale: Vec<f64>,
    xtx_inv: DMatrix<f64>,
    xtx_inv_chol: DMatrix<f64>,
    y: DMatrix<f64>,
    observed: Vec<bool>,
    y_center: Vec<f64>,
    y_scale: Vec<f64>,
    patterns: Vec<Pattern>,
    clusters: Vec<Vec<usize>>,
    beta: DMatrix<f64>,
    u: DMatrix<f64>,
    sigma: DMatrix<f64>,
    psi: DMatrix<f64>,
    nu0: f64,
    s0: DMatrix<f64>,
    nu1: f64,
    s1: DMatrix<f64>,
    rng: StreamRng,
    sweeps: usize,
}

fn std_normal_matrix(rng: &mut StreamRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn chol_l(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| symmetrize(c.inverse()))
}

fn numerical(columns: &[String], reason: &str) -> Error {
    Error::Numerical {
        columns: columns.to_vec(),
        reason: reason.to_string(),
    }
}

impl Sampler {
    pub fn new(data: &StudyDataset, spec: &ImputationModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let outcomes = if spec.outcome_columns.is_empty() {
            data.outcome_names()
        } else {
            spec.outcome_columns.clone()
        };
        if outcomes.is_empty() {
            return Err(Error::config("imputation.outcome_columns", "no columns to impute"));
        }
        let n = data.n_rows();
        let p = outcomes.len();

        let clusters = data.cluster_groups();
        if !clusters.iter().any(|g| g.len() >= 2) {
            return Err(Error::DegenerateDesign(
                "every cluster has a single row; random intercepts are not identified".into(),
            ));
        }

        // predictors: center, scale, drop constants and collinear columns
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut predictors = Vec::new();
        let mut dropped = Vec::new();
        let mut x_center = Vec::new();
        let mut x_scale = Vec::new();
        let mut x_cols: Vec<Vec<f64>> = Vec::new();
        for name in &spec.predictor_columns {
            if outcomes.contains(name) {
                return Err(Error::config(
                    "imputation.predictor_columns",
                    format!("`{name}` is also an imputed column"),
                ));
            }
            let col = data.column(name)?;
            if !col.is_complete() {
                return Err(Error::InsufficientData(format!(
                    "predictor `{name}` has missing cells"
                )));
            }
            let m = stats::mean(&col.values).unwrap_or(0.0);
            let s = stats::sample_variance(&col.values).unwrap_or(0.0).sqrt();
            if !(s > 0.0) || !s.is_finite() {
                dropped.push(DroppedPredictor {
                    name: name.clone(),
                    reason: "constant".into(),
                });
                continue;
            }
            let z: Vec<f64> = col.values.iter().map(|v| (v - m) / s).collect();
            let mut r = z.clone();
            for _ in 0..2 {
                for b in &basis {
                    let dot: f64 = b.iter().zip(&r).map(|(a, c)| a * c).sum();
                    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= dot * bi);
                }
            }
            let rn: f64 = r.iter().map(|v| v * v).sum();
            let zn: f64 = z.iter().map(|v| v * v).sum();
            if rn < COLLINEAR_TOLERANCE * zn {
                dropped.push(DroppedPredictor {
                    name: name.clone(),
                    reason: "collinear with earlier predictors".into(),
                });
                continue;
            }
            let norm = rn.sqrt();
            basis.push(r.into_iter().map(|v| v / norm).collect());
            predictors.push(name.clone());
            x_center.push(m);
            x_scale.push(s);
            x_cols.push(z);
        }
        let q = 1 + predictors.len();
        let x = DMatrix::from_fn(n, q, |i, j| if j == 0 { 1.0 } else { x_cols[j - 1][i] });
        let xtx = x.transpose() * &x;
        let xtx_inv = spd_inverse(&xtx)
            .ok_or_else(|| numerical(&predictors, "predictor cross-product is singular"))?;
        let xtx_inv_chol = chol_l(&xtx_inv)
            .ok_or_else(|| numerical(&predictors, "predictor cross-product is singular"))?;

        // outcomes: standardize on observed cells, fill missing with the mean
        let mut y = DMatrix::<f64>::zeros(n, p);
        let mut observed = vec![false; n * p];
        let mut y_center = Vec::with_capacity(p);
        let mut y_scale = Vec::with_capacity(p);
        for (j, name) in outcomes.iter().enumerate() {
            let col = data.column(name)?;
            let obs = col.observed_values();
            if obs.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "column `{name}` has no observed values"
                )));
            }
            let m = stats::mean(&obs).unwrap_or(0.0);
            let s = stats::sample_variance(&obs).map(f64::sqrt).unwrap_or(1.0);
            let s = if s > 0.0 && s.is_finite() { s } else { 1.0 };
            y_center.push(m);
            y_scale.push(s);
            for i in 0..n {
                if col.observed[i] {
                    observed[i * p + j] = true;
                    y[(i, j)] = (col.values[i] - m) / s;
                }
            }
        }

        let mut by_pattern: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let mask = observed[i * p..(i + 1) * p].to_vec();
            if mask.iter().any(|o| !o) {
                by_pattern.entry(mask).or_default().push(i);
            }
        }
        let patterns = by_pattern
            .into_iter()
            .map(|(mask, rows)| Pattern {
                obs: (0..p).filter(|&j| mask[j]).collect(),
                mis: (0..p).filter(|&j| !mask[j]).collect(),
                rows,
            })
            .collect();

        // priors
        let empirical = pairwise_covariance(&y, &observed, p)
            .filter(|c| c.clone().cholesky().is_some())
            .unwrap_or_else(|| DMatrix::identity(p, p));
        let to_std = |s: &Vec<Vec<f64>>| {
            DMatrix::from_fn(p, p, |i, j| s[i][j] / (y_scale[i] * y_scale[j]))
        };
        let s0 = spec
            .prior_scale_residual
            .as_ref()
            .map(to_std)
            .unwrap_or_else(|| &empirical * PRIOR_SCALE_FACTOR);
        let s1 = spec
            .prior_scale_random
            .as_ref()
            .map(to_std)
            .unwrap_or_else(|| &empirical * PRIOR_SCALE_FACTOR);
        check_dims(&s0, p, "imputation.prior_residual_scale")?;
        check_dims(&s1, p, "imputation.prior_random_scale")?;
        let nu0 = spec.prior_df_residual.unwrap_or(p as f64 + 1.0);
        let nu1 = spec.prior_df_random.unwrap_or(p as f64 + 1.0);
        if nu0 < p as f64 || nu1 < p as f64 {
            return Err(Error::config(
                "imputation.prior_df",
                "must be at least the number of imputed columns",
            ));
        }

        // starting values from complete cases
        let cc: Vec<usize> = (0..n)
            .filter(|&i| observed[i * p..(i + 1) * p].iter().all(|&o| o))
            .collect();
        let rows: Vec<usize> = if cc.len() >= q + p + 1 { cc } else { (0..n).collect() };
        let xr = x.select_rows(&rows);
        let yr = y.select_rows(&rows);
        let beta = match spd_inverse(&(xr.transpose() * &xr)) {
            Some(inv) => inv * xr.transpose() * &yr,
            None => &xtx_inv * x.transpose() * &y,
        };
        let resid = &yr - &xr * &beta;
        let denom = (rows.len().saturating_sub(q)).max(1) as f64;
        let mut sigma = symmetrize(resid.transpose() * &resid / denom);
        if sigma.clone().cholesky().is_none() {
            sigma = DMatrix::from_diagonal(&DVector::from_fn(p, |j, _| sigma[(j, j)].max(1e-3)));
        }
        let mut in_rows = vec![usize::MAX; n];
        for (k, &i) in rows.iter().enumerate() {
            in_rows[i] = k;
        }
        let mut means = Vec::new();
        for g in &clusters {
            let members: Vec<usize> = g.iter().map(|&i| in_rows[i]).filter(|&k| k != usize::MAX).collect();
            if members.len() >= 2 {
                let mut m = DVector::<f64>::zeros(p);
                for &k in &members {
                    m += resid.row(k).transpose();
                }
                means.push(m / members.len() as f64);
            }
        }
        let psi = if means.len() > p {
            let k = means.len() as f64;
            let mut c = DMatrix::<f64>::zeros(p, p);
            for m in &means {
                c += m * m.transpose();
            }
            Some(symmetrize(c / (k - 1.0)))
        } else {
            None
        }
        .filter(|c| c.clone().cholesky().is_some())
        .unwrap_or_else(|| &sigma * PRIOR_SCALE_FACTOR);
        let m = clusters.len();

        Ok(Self {
            outcomes,
            predictors,
            dropped,
            n,
            p,
            x,
            x_center,
            x_scale,
            xtx_inv,
            xtx_inv_chol,
            y,
            observed,
            y_center,
            y_scale,
            patterns,
            clusters,
            beta,
            u: DMatrix::zeros(m, p),
            sigma,
            psi,
            nu0,
            s0,
            nu1,
            s1,
            rng: rng::stream(seed),
            sweeps: 0,
        })
    }

    /// Runs one full sweep of the five conditional draws.
    pub fn sweep(&mut self) -> Result<()> {
        let fitted = &self.x * &self.beta;
        self.draw_missing(&fitted)?;
        self.draw_random_effects(&fitted)?;
        self.draw_coefficients()?;
        self.draw_residual_covariance()?;
        self.draw_random_covariance()?;
        self.sweeps += 1;
        Ok(())
    }

    fn cluster_effect_rows(&self) -> DMatrix<f64> {
        let mut zu = DMatrix::<f64>::zeros(self.n, self.p);
        for (c, rows) in self.clusters.iter().enumerate() {
            for &i in rows {
                for j in 0..self.p {
                    zu[(i, j)] = self.u[(c, j)];
                }
            }
        }
        zu
    }

    fn draw_missing(&mut self, fitted: &DMatrix<f64>) -> Result<()> {
        if self.patterns.is_empty() {
            return Ok(());
        }
        let zu = self.cluster_effect_rows();
        for pat in &self.patterns {
            let names: Vec<String> = pat.mis.iter().map(|&j| self.outcomes[j].clone()).collect();
            let s_mm = DMatrix::from_fn(pat.mis.len(), pat.mis.len(), |a, b| {
                self.sigma[(pat.mis[a], pat.mis[b])]
            });
            let (reg, cond) = if pat.obs.is_empty() {
                (DMatrix::<f64>::zeros(pat.mis.len(), 0), s_mm)
            } else {
                let s_oo = DMatrix::from_fn(pat.obs.len(), pat.obs.len(), |a, b| {
                    self.sigma[(pat.obs[a], pat.obs[b])]
                });
                let s_om = DMatrix::from_fn(pat.obs.len(), pat.mis.len(), |a, b| {
                    self.sigma[(pat.obs[a], pat.mis[b])]
                });
                let chol = s_oo
                    .cholesky()
                    .ok_or_else(|| numerical(&names, "observed-block covariance is singular"))?;
                let reg = chol.solve(&s_om).transpose();
                let cond = symmetrize(s_mm - &reg * &s_om);
                (reg, cond)
            };
            let l = chol_l(&cond)
                .ok_or_else(|| numerical(&names, "conditional covariance is not positive definite"))?;
            let mut dev = DVector::<f64>::zeros(pat.obs.len());
            for &i in &pat.rows {
                for (a, &j) in pat.obs.iter().enumerate() {
                    dev[a] = self.y[(i, j)] - fitted[(i, j)] - zu[(i, j)];
                }
                let z = DVector::from_fn(pat.mis.len(), |_, _| StandardNormal.sample(&mut self.rng));
                let draw = &reg * &dev + &l * z;
                for (a, &j) in pat.mis.iter().enumerate() {
                    self.y[(i, j)] = fitted[(i, j)] + zu[(i, j)] + draw[a];
                }
            }
        }
        Ok(())
    }

    fn draw_random_effects(&mut self, fitted: &DMatrix<f64>) -> Result<()> {
        let p = self.p;
        let sigma_inv = spd_inverse(&self.sigma)
            .ok_or_else(|| numerical(&self.outcomes, "residual covariance is singular"))?;
        let psi_inv = spd_inverse(&self.psi)
            .ok_or_else(|| numerical(&self.outcomes, "random-intercept covariance is singular"))?;
        let mut cache: BTreeMap<usize, (DMatrix<f64>, DMatrix<f64>)> = BTreeMap::new();
        for c in 0..self.clusters.len() {
            let size = self.clusters[c].len();
            if !cache.contains_key(&size) {
                let prec = &psi_inv + &sigma_inv * size as f64;
                let v = spd_inverse(&prec).ok_or_else(|| {
                    numerical(&self.outcomes, "random-intercept conditional is singular")
                })?;
                let l = chol_l(&v).ok_or_else(|| {
                    numerical(&self.outcomes, "random-intercept conditional is singular")
                })?;
                cache.insert(size, (&v * &sigma_inv, l));
            }
            let (a, l) = &cache[&size];
            let mut sum = DVector::<f64>::zeros(p);
            for &i in &self.clusters[c] {
                for j in 0..p {
                    sum[j] += self.y[(i, j)] - fitted[(i, j)];
                }
            }
            let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut self.rng));
            let draw = a * sum + l * z;
            for j in 0..p {
                self.u[(c, j)] = draw[j];
            }
        }
        Ok(())
    }

    fn draw_coefficients(&mut self) -> Result<()> {
        let target = &self.y - self.cluster_effect_rows();
        let bhat = &self.xtx_inv * (self.x.transpose() * target);
        let ls = chol_l(&self.sigma)
            .ok_or_else(|| numerical(&self.outcomes, "residual covariance is singular"))?;
        let z = std_normal_matrix(&mut self.rng, bhat.nrows(), self.p);
        self.beta = bhat + &self.xtx_inv_chol * z * ls.transpose();
        Ok(())
    }

    fn draw_residual_covariance(&mut self) -> Result<()> {
        let e = &self.y - &self.x * &self.beta - self.cluster_effect_rows();
        let scale = symmetrize(&self.s0 + e.transpose() * e);
        self.sigma = inverse_wishart(&mut self.rng, self.nu0 + self.n as f64, &scale)
            .ok_or_else(|| numerical(&self.outcomes, "residual covariance draw is singular"))?;
        Ok(())
    }

    fn draw_random_covariance(&mut self) -> Result<()> {
        let scale = symmetrize(&self.s1 + self.u.transpose() * &self.u);
        let df = self.nu1 + self.clusters.len() as f64;
        self.psi = inverse_wishart(&mut self.rng, df, &scale)
            .ok_or_else(|| numerical(&self.outcomes, "random-intercept covariance draw is singular"))?;
        Ok(())
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn outcome_columns(&self) -> &[String] {
        &self.outcomes
    }

    /// Predictors kept in the model, in design-matrix order after the intercept.
    pub fn predictor_columns(&self) -> &[String] {
        &self.predictors
    }

    pub fn dropped_predictors(&self) -> &[DroppedPredictor] {
        &self.dropped
    }

    /// Coefficient matrix on the original scale: row 0 is the intercept,
    /// then one row per kept predictor; one column per outcome.
    pub fn coefficients(&self) -> DMatrix<f64> {
        let q = self.beta.nrows();
        let mut b = DMatrix::<f64>::zeros(q, self.p);
        for k in 0..self.p {
            let sk = self.y_scale[k];
            let mut intercept = self.y_center[k] + sk * self.beta[(0, k)];
            for j in 1..q {
                let slope = sk * self.beta[(j, k)] / self.x_scale[j - 1];
                b[(j, k)] = slope;
                intercept -= slope * self.x_center[j - 1];
            }
            b[(0, k)] = intercept;
        }
        b
    }

    fn unscale(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| m[(i, j)] * self.y_scale[i] * self.y_scale[j])
    }

    pub fn residual_covariance(&self) -> DMatrix<f64> {
        self.unscale(&self.sigma)
    }

    pub fn random_covariance(&self) -> DMatrix<f64> {
        self.unscale(&self.psi)
    }

    /// Current random intercepts on the original scale, one row per cluster
    /// in [`StudyDataset::cluster_groups`] order.
    pub fn random_effects(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.u.nrows(), self.p, |c, j| self.u[(c, j)] * self.y_scale[j])
    }

    /// Current value of an outcome cell on the original scale.
    pub fn value(&self, row: usize, outcome: usize) -> f64 {
        self.y_center[outcome] + self.y_scale[outcome] * self.y[(row, outcome)]
    }

    fn trace_point(&self) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(3 * self.p);
        for (k, name) in self.outcomes.iter().enumerate() {
            let s2 = self.y_scale[k] * self.y_scale[k];
            out.push((format!("sigma[{name}]"), self.sigma[(k, k)] * s2));
            out.push((format!("psi[{name}]"), self.psi[(k, k)] * s2));
            out.push((
                format!("mu[{name}]"),
                self.y_center[k] + self.y_scale[k] * self.beta[(0, k)],
            ));
        }
        out
    }

    /// Copies the current draws of the missing cells into `target`.
    /// Observed cells are left untouched.
    pub fn write_completed(&self, target: &mut StudyDataset) -> Result<()> {
        for (k, name) in self.outcomes.iter().enumerate() {
            let col = target.column_mut(name)?;
            for i in 0..self.n {
                if !self.observed[i * self.p + k] {
                    col.values[i] = self.y_center[k] + self.y_scale[k] * self.y[(i, k)];
                    col.observed[i] = true;
                }
            }
        }
        Ok(())
    }
}

fn check_dims(m: &DMatrix<f64>, p: usize, field: &str) -> Result<()> {
    if m.nrows() != p || m.ncols() != p {
        return Err(Error::config(field, format!("must be {p} x {p}")));
    }
    Ok(())
}

fn pairwise_covariance(y: &DMatrix<f64>, observed: &[bool], p: usize) -> Option<DMatrix<f64>> {
    let n = y.nrows();
    let mut c = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let rows: Vec<usize> = (0..n)
                .filter(|&i| observed[i * p + a] && observed[i * p + b])
                .collect();
            if rows.len() < 2 {
                return None;
            }
            let xa: Vec<f64> = rows.iter().map(|&i| y[(i, a)]).collect();
            let xb: Vec<f64> = rows.iter().map(|&i| y[(i, b)]).collect();
            let (ma, mb) = (stats::mean(&xa)?, stats::mean(&xb)?);
            let v = xa
                .iter()
                .zip(&xb)
                .map(|(u, w)| (u - ma) * (w - mb))
                .sum::<f64>()
                / (rows.len() - 1) as f64;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Some(c)
}

fn summarize(trace: &[f64], thin: usize) -> TraceSummary {
    let thinned: Vec<f64> = trace.iter().step_by(thin.max(1)).copied().collect();
    TraceSummary {
        mean: stats::mean(trace).unwrap_or(f64::NAN),
        variance: stats::sample_variance(trace).unwrap_or(0.0),
        lag1: stats::lag1_autocorrelation(trace),
        lag1_thinned: stats::lag1_autocorrelation(&thinned),
    }
}

/// Runs the Gibbs sampler and returns `D` completed copies of `data`.
///
/// The first dataset is retained after `n_burn` sweeps and each later one
/// after a further `n_between` sweeps. With no missing cells in the imputed
/// columns the input is returned `D` times unchanged.
pub fn gibbs_impute(data: &StudyDataset, spec: &ImputationModelSpec, seed: u64) -> Result<ImputationSet> {
    spec.validate()?;
    let outcomes = if spec.outcome_columns.is_empty() {
        data.outcome_names()
    } else {
        spec.outcome_columns.clone()
    };
    let source_observed: BTreeMap<String, Vec<bool>> = data
        .columns
        .iter()
        .map(|c| (c.name.clone(), c.observed.clone()))
        .collect();
    let mut any_missing = false;
    for name in &outcomes {
        any_missing |= !data.column(name)?.is_complete();
    }
    if !any_missing {
        return Ok(ImputationSet {
            datasets: vec![data.clone(); spec.n_imputations],
            imputed_columns: outcomes,
            source_observed,
            chain_diagnostics: ChainDiagnostics {
                n_burn: spec.n_burn,
                n_between: spec.n_between,
                ..ChainDiagnostics::default()
            },
            seed,
        });
    }

    let mut sampler = Sampler::new(data, spec, seed)?;
    let mut traces: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut record = |s: &Sampler| {
        for (k, v) in s.trace_point() {
            traces.entry(k).or_default().push(v);
        }
    };
    for _ in 0..spec.n_burn {
        sampler.sweep()?;
    }
    record(&sampler);
    let mut datasets = Vec::with_capacity(spec.n_imputations);
    for d in 0..spec.n_imputations {
        if d > 0 {
            for _ in 0..spec.n_between {
                sampler.sweep()?;
                record(&sampler);
            }
        }
        let mut completed = data.clone();
        sampler.write_completed(&mut completed)?;
        datasets.push(completed);
    }

    Ok(ImputationSet {
        datasets,
        imputed_columns: sampler.outcomes.clone(),
        source_observed,
        chain_diagnostics: ChainDiagnostics {
            sweeps: sampler.sweeps(),
            n_burn: spec.n_burn,
            n_between: spec.n_between,
            traces: traces
                .iter()
                .map(|(k, t)| (k.clone(), summarize(t, spec.n_between)))
                .collect(),
            dropped_predictors: sampler.dropped.clone(),
            predictor_step: None,
        },
        seed,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnRole};
    use crate::frame::{PracticeId, SubsidiaryId};
    use rand::Rng;

    /// `clusters` x `size` rows with one random-intercept outcome `y0`
    /// (intra-cluster correlation `icc`) and one predictor `x` with slope 1.
    pub(crate) fn clustered(clusters: usize, size: usize, icc: f64, seed: u64) -> StudyDataset {
        let mut rng = rng::stream(seed);
        let n = clusters * size;
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut cl = Vec::with_capacity(n);
        for c in 0..clusters {
            let u: f64 = StandardNormal.sample(&mut rng);
            for _ in 0..size {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                x.push(xi);
                y.push(2.0 + xi + icc.sqrt() * u * 2.0 + (1.0 - icc).sqrt() * e * 2.0);
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
                Column::complete("x", ColumnRole::FrameCovariate, x),
            ],
        )
        .unwrap()
    }

    pub(crate) fn mask_mcar(ds: &mut StudyDataset, column: &str, frac: f64, seed: u64) {
        let mut rng = rng::stream(seed);
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
            n_burn: 50,
            n_between: 10,
            n_imputations: 5,
            ..ImputationModelSpec::default()
        }
    }

    #[test]
    fn nothing_missing_returns_input_copies() {
        let ds = clustered(10, 5, 0.3, 1);
        let set = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 3).unwrap();
        assert_eq!(set.datasets.len(), 5);
        assert!(set.datasets.iter().all(|d| *d == ds));
    }

    #[test]
    fn observed_cells_are_bit_identical_and_missing_cells_vary() {
        let mut ds = clustered(20, 6, 0.3, 2);
        mask_mcar(&mut ds, "y0", 0.25, 9);
        let set = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 4).unwrap();
        let orig = ds.column("y0").unwrap();
        for d in &set.datasets {
            let c = d.column("y0").unwrap();
            assert!(c.is_complete());
            for i in 0..orig.values.len() {
                if orig.observed[i] {
                    assert_eq!(c.values[i].to_bits(), orig.values[i].to_bits());
                }
            }
            assert_eq!(d.column("x").unwrap(), ds.column("x").unwrap());
        }
        for i in 0..orig.values.len() {
            if !orig.observed[i] {
                let draws: Vec<f64> = set.datasets.iter().map(|d| d.columns[0].values[i]).collect();
                assert!(draws.iter().any(|v| *v != draws[0]), "row {i} never varied");
                assert!(set.was_missing("y0", i));
            }
        }
    }

    #[test]
    fn same_seed_same_imputations() {
        let mut ds = clustered(15, 4, 0.2, 3);
        mask_mcar(&mut ds, "y0", 0.3, 1);
        let a = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 11).unwrap();
        let b = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 11).unwrap();
        let c = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.datasets, c.datasets);
    }

    #[test]
    fn singleton_clusters_only_is_degenerate() {
        let mut ds = clustered(10, 1, 0.2, 3);
        mask_mcar(&mut ds, "y0", 0.3, 1);
        let err = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateDesign(_)), "{err}");
    }

    #[test]
    fn incomplete_predictor_rejected() {
        let mut ds = clustered(10, 4, 0.2, 3);
        mask_mcar(&mut ds, "y0", 0.3, 1);
        mask_mcar(&mut ds, "x", 0.3, 2);
        let err = gibbs_impute(&ds, &spec(&["y0"], &["x"]), 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)), "{err}");
    }

    #[test]
    fn unobserved_outcome_rejected() {
        let mut ds = clustered(10, 4, 0.2, 3);
        mask_mcar(&mut ds, "y0", 1.1, 1);
        assert!(gibbs_impute(&ds, &spec(&["y0"], &["x"]), 1).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(&["y0"], &["x"]);
        s.n_imputations = 1;
        assert!(s.validate().is_err());
        let mut s = spec(&["y0"], &["x"]);
        s.n_burn = 0;
        assert!(s.validate().is_err());
        let mut s = spec(&["y0"], &["x"]);
        s.prior_scale_residual = Some(vec![vec![-1.0]]);
        assert!(s.validate().is_err());
        let mut s = spec(&["y0"], &["x"]);
        s.prior_df_random = Some(0.5);
        assert!(s.validate().is_err());
        let s = spec(&["y0"], &["x", "x"]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn constant_and_collinear_predictors_are_dropped() {
        let mut ds = clustered(10, 5, 0.2, 4);
        let x = ds.column("x").unwrap().values.clone();
        ds.columns.push(Column::complete(
            "x2",
            ColumnRole::FrameCovariate,
            x.iter().map(|v| 3.0 * v - 1.0).collect(),
        ));
        ds.columns
            .push(Column::complete("k", ColumnRole::FrameCovariate, vec![7.0; x.len()]));
        mask_mcar(&mut ds, "y0", 0.2, 5);
        let set = gibbs_impute(&ds, &spec(&["y0"], &["x", "x2", "k"]), 1).unwrap();
        let names: Vec<&str> = set
            .chain_diagnostics
            .dropped_predictors
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        assert_eq!(names, vec!["x2", "k"]);
    }

    #[test]
    fn coefficient_posterior_matches_gls_average() {
        // complete data: the posterior mean of the coefficients given the
        // variance components is the GLS estimate, so averaging GLS over the
        // sampled components is an exact oracle for the sampler's mean.
        let ds = clustered(40, 6, 0.3, 21);
        let s = spec(&["y0"], &["x"]);
        let mut sampler = Sampler::new(&ds, &s, 5).unwrap();
        for _ in 0..200 {
            sampler.sweep().unwrap();
        }
        let y = &ds.column("y0").unwrap().values;
        let x = &ds.column("x").unwrap().values;
        let groups = ds.cluster_groups();
        let mut draws = [Vec::new(), Vec::new()];
        let mut gls = [Vec::new(), Vec::new()];
        for _ in 0..1000 {
            sampler.sweep().unwrap();
            let b = sampler.coefficients();
            draws[0].push(b[(0, 0)]);
            draws[1].push(b[(1, 0)]);
            let s2 = sampler.residual_covariance()[(0, 0)];
            let t2 = sampler.random_covariance()[(0, 0)];
            // V = s2 I + t2 J per cluster; V^-1 = (I - t2/(s2 + n t2) J) / s2
            let mut xtvx = nalgebra::Matrix2::<f64>::zeros();
            let mut xtvy = nalgebra::Vector2::<f64>::zeros();
            for g in &groups {
                let k = t2 / (s2 + g.len() as f64 * t2);
                let (mut sx0, mut sx1) = (0.0, 0.0);
                for &i in g {
                    sx0 += 1.0;
                    sx1 += x[i];
                }
                for &i in g {
                    let xi = nalgebra::Vector2::new(1.0, x[i]);
                    let wx = (xi - nalgebra::Vector2::new(sx0, sx1) * k) / s2;
                    xtvx += wx * xi.transpose();
                    xtvy += wx * y[i];
                }
            }
            let b_gls = xtvx.try_inverse().unwrap() * xtvy;
            gls[0].push(b_gls[0]);
            gls[1].push(b_gls[1]);
        }
        for k in 0..2 {
            let m = stats::mean(&draws[k]).unwrap();
            let target = stats::mean(&gls[k]).unwrap();
            let diff: Vec<f64> = draws[k].iter().zip(&gls[k]).map(|(a, b)| a - b).collect();
            let rho = stats::lag1_autocorrelation(&diff).unwrap_or(0.0).max(0.0);
            let ess = 1000.0 * (1.0 - rho) / (1.0 + rho);
            let mcse = (stats::sample_variance(&diff).unwrap() / ess).sqrt();
            assert!((m - target).abs() < 3.0 * mcse, "coef {k}: {m} vs {target} (mcse {mcse})");
        }
    }

    #[test]
    fn perfectly_correlated_outcomes_reproduce_the_line() {
        let mut ds = clustered(30, 8, 0.3, 6);
        let y = ds.column("y0").unwrap().values.clone();
        ds.columns.push(Column::complete(
            "y1",
            ColumnRole::Outcome,
            y.iter().map(|v| 1.5 - 2.0 * v).collect(),
        ));
        mask_mcar(&mut ds, "y1", 0.3, 8);
        let set = gibbs_impute(&ds, &spec(&["y0", "y1"], &["x"]), 2).unwrap();
        let sd = stats::sample_variance(&y).unwrap().sqrt() * 2.0;
        for d in &set.datasets {
            let y1 = &d.column("y1").unwrap().values;
            let resid: Vec<f64> = (0..y.len())
                .filter(|&i| set.was_missing("y1", i))
                .map(|i| y1[i] - (1.5 - 2.0 * y[i]))
                .collect();
            let rsd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
            assert!(rsd < 0.05 * sd, "{rsd} vs {sd}");
        }
    }

    #[test]
    fn residual_variance_chain_mixes() {
        let mut ds = clustered(60, 8, 0.3, 7);
        mask_mcar(&mut ds, "y0", 0.2, 3);
        let s = ImputationModelSpec {
            outcome_columns: vec!["y0".into()],
            predictor_columns: vec!["x".into()],
            n_imputations: 20,
            ..ImputationModelSpec::default()
        };
        let set = gibbs_impute(&ds, &s, 9).unwrap();
        let t = &set.chain_diagnostics.traces["sigma[y0]"];
        assert!(t.lag1.unwrap() < 0.9, "{t:?}");
        assert!(t.lag1_thinned.unwrap() < 0.9, "{t:?}");
        assert_eq!(set.chain_diagnostics.sweeps, 500 + 19 * 100);
    }
}
