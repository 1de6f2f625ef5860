//! Wishart and inverse-Wishart draws via the Bartlett decomposition.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Draws `W ~ Wishart(df, scale)` where `scale_chol` is the lower Cholesky
/// factor of the scale matrix. Requires `df > p - 1`.
pub fn wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, scale_chol: &DMatrix<f64>) -> DMatrix<f64> {
    let p = scale_chol.nrows();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("wishart degrees of freedom too small");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = scale_chol * a;
    &la * la.transpose()
}

/// Draws `S ~ InverseWishart(df, scale)`, i.e. `S^-1 ~ Wishart(df, scale^-1)`.
/// Returns `None` when `scale` or the drawn precision is not positive definite.
pub fn inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    df: f64,
    scale: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let inv = scale.clone().cholesky()?.inverse();
    let chol = symmetrize(inv).cholesky()?.l();
    let precision = wishart(rng, df, &chol);
    let cov = precision.cholesky()?.inverse();
    Some(symmetrize(cov))
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
