//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::tensor::Tensor;

pub const COVARIANCE_EPS: f64 = 1e-6;
pub const PROJECTION_DIM: usize = 64;
pub const PROJECTION_SEED: u64 = 0x5eed_f1d0;

/// Maps flattened samples to the space where realism statistics are computed.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor {
    Identity,
    /// Fixed Gaussian projection scaled by `1/sqrt(input_dim)`, stored `[input_dim, output_dim]`.
    RandomProjection {
        input_dim: usize,
        output_dim: usize,
        seed: u64,
        weights: Tensor,
    },
}

impl FeatureExtractor {
    pub fn random_projection(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f32).sqrt();
        let data = (0..input_dim * output_dim)
            .map(|_| rng.sample::<f32, _>(StandardNormal) * scale)
            .collect();
        FeatureExtractor::RandomProjection {
            input_dim,
            output_dim,
            seed,
            weights: Tensor::new(vec![input_dim, output_dim], data).expect("shape matches"),
        }
    }

    /// Identity for low-dimensional point data, the pinned projection otherwise.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim <= PROJECTION_DIM {
            FeatureExtractor::Identity
        } else {
            Self::random_projection(dim, PROJECTION_DIM, PROJECTION_SEED)
        }
    }

    pub fn apply(&self, set: &SampleSet) -> Result<SampleSet> {
        match self {
            FeatureExtractor::Identity => Ok(set.clone()),
            FeatureExtractor::RandomProjection {
                input_dim, weights, ..
            } => {
                if set.dim() != *input_dim {
                    return Err(Error::shape("feature projection", &[*input_dim], &[set.dim()]));
                }
                let feats = set.matrix().matmul(weights)?;
                SampleSet::new(feats, set.domain.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Sample mean and unbiased covariance of the rows of `set`.
pub fn gaussian_stats(set: &SampleSet) -> Result<GaussianStats> {
    let (n, d) = (set.len(), set.dim());
    let mut mean = DVector::zeros(d);
    for row in set.iter() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    if n > 1 {
        let mut centered = DMatrix::zeros(n, d);
        for (i, row) in set.iter().enumerate() {
            for j in 0..d {
                centered[(i, j)] = row[j] as f64 - mean[j];
            }
        }
        cov = centered.transpose() * &centered / (n as f64 - 1.0);
    }
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("feature statistics".into()));
    }
    Ok(GaussianStats { mean, cov })
}

fn psd_eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() || min < -1e-6 * max.max(1.0) {
        return Err(Error::Numeric(format!("{what} is not positive semi-definite (min eigenvalue {min})")));
    }
    Ok(eig)
}

/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})` with `εI` added to both covariances.
pub fn frechet_from_stats(a: &GaussianStats, b: &GaussianStats, eps: f64) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::shape("frechet", &[a.mean.len()], &[b.mean.len()]));
    }
    let d = a.mean.len();
    let eye = DMatrix::<f64>::identity(d, d) * eps;
    let s1 = &a.cov + &eye;
    let s2 = &b.cov + &eye;

    let e1 = psd_eigen(s1.clone(), "first covariance")?;
    let sqrt_vals = e1.eigenvalues.map(|v| v.max(0.0).sqrt());
    let sqrt_s1 = &e1.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * e1.eigenvectors.transpose();
    // Σ₁^{1/2} Σ₂ Σ₁^{1/2} is symmetric and shares its trace root with Σ₁Σ₂
    let inner = &sqrt_s1 * &s2 * &sqrt_s1;
    let e2 = psd_eigen(inner, "covariance product")?;
    let tr_sqrt: f64 = e2.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();

    let diff = &a.mean - &b.mean;
    Ok(diff.dot(&diff) + s1.trace() + s2.trace() - 2.0 * tr_sqrt)
}

/// Fréchet distance between two sample sets in `features` space ("rFID").
pub fn frechet_gaussian(x: &SampleSet, y: &SampleSet, features: &FeatureExtractor) -> Result<f64> {
    x.same_shape(y)?;
    let fx = features.apply(x)?;
    let fy = features.apply(y)?;
    frechet_from_stats(&gaussian_stats(&fx)?, &gaussian_stats(&fy)?, COVARIANCE_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, d: usize, shift: &[f32], seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * d)
            .map(|k| rng.sample::<f32, _>(StandardNormal) + shift[k % d])
            .collect();
        SampleSet::new(Tensor::new(vec![n, d], data).unwrap(), "g").unwrap()
    }

    #[test]
    fn identical_sets_zero() {
        let x = gaussian(200, 5, &[0.0; 5], 1);
        let d = frechet_gaussian(&x, &x, &FeatureExtractor::Identity).unwrap();
        assert!(d.abs() < 1e-6, "{d}");
    }

    #[test]
    fn mean_shift_closed_form() {
        // N(0,I) vs N(m,I) → ‖m‖² = 0.25 + 1 + 0.64 = 1.89
        let m = [0.5, -1.0, 0.8];
        let x = gaussian(5000, 3, &[0.0; 3], 2);
        let y = gaussian(5000, 3, &m, 3);
        let d = frechet_gaussian(&x, &y, &FeatureExtractor::Identity).unwrap();
        assert!((d - 1.89).abs() / 1.89 < 0.05, "{d}");
    }

    #[test]
    fn diagonal_covariances_match_scalar_formula() {
        let sx = [1.0, 4.0, 0.25];
        let sy = [2.0, 1.0, 0.25];
        let a = GaussianStats {
            mean: DVector::from_vec(vec![0.0, 1.0, 2.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(sx.to_vec())),
        };
        let b = GaussianStats {
            mean: DVector::from_vec(vec![1.0, 1.0, 0.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(sy.to_vec())),
        };
        let got = frechet_from_stats(&a, &b, 0.0).unwrap();
        let want: f64 = 1.0 + 4.0
            + sx.iter().zip(&sy).map(|(p, q): (&f64, &f64)| (p.sqrt() - q.sqrt()).powi(2)).sum::<f64>();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn non_psd_is_rejected() {
        let a = GaussianStats {
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        };
        assert!(matches!(frechet_from_stats(&a, &a, 1e-6), Err(Error::Numeric(_))));
    }

    #[test]
    fn projection_is_seeded() {
        let a = FeatureExtractor::random_projection(100, 8, 5);
        let b = FeatureExtractor::random_projection(100, 8, 5);
        assert_eq!(a, b);
        assert_eq!(FeatureExtractor::default_for_dim(2), FeatureExtractor::Identity);
        let x = gaussian(10, 100, &[0.0; 100], 4);
        assert_eq!(a.apply(&x).unwrap().dim(), 8);
    }
}
