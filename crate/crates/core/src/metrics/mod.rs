//! Structure (SSIM, source distance) and realism (Fréchet, MMD, coverage)
//! metrics, plus rank aggregation across methods.

mod coverage;
mod frechet;
mod mmd;
mod rank;
mod ssim;

pub use coverage::{coverage, knn_radii};
pub use frechet::{
    frechet_from_stats, frechet_gaussian, gaussian_stats, FeatureExtractor, GaussianStats, COVARIANCE_EPS,
    PROJECTION_DIM, PROJECTION_SEED,
};
pub use mmd::{
    default_bandwidths, median_distance, mmd_bootstrap_se, mmd_default, mmd_rbf, MmdEstimator,
    DEFAULT_BANDWIDTH_SCALES,
};
pub use rank::{
    mean_ranks, rank_methods, rank_methods_with, spearman, Better, MethodScores, MethodSummary, MetricsReport, REALISM_METRICS,
    STRUCTURE_METRICS,
};
pub use ssim::{ssim, ssim_raw};

use crate::error::Result;
use crate::samples::SampleSet;

pub const DEFAULT_COVERAGE_K: usize = 5;

/// Mean over pairs of `‖a − b‖ / ‖b‖`.
pub fn mean_relative_l2(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    a.same_shape(b)?;
    if a.len() != b.len() {
        return Err(crate::Error::shape("relative l2", &[a.len()], &[b.len()]));
    }
    let total: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let num: f64 = x.iter().zip(y).map(|(&p, &q)| ((p - q) as f64).powi(2)).sum();
            let den: f64 = y.iter().map(|&q| (q as f64).powi(2)).sum();
            (num / den.max(f64::MIN_POSITIVE)).sqrt()
        })
        .sum();
    Ok(total / a.len() as f64)
}

/// Mean SSIM over paired images; each sample must be `[h, w]`.
pub fn mean_ssim(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    a.same_shape(b)?;
    let (h, w) = match *a.sample_shape() {
        [h, w] => (h, w),
        _ => return Err(crate::Error::shape("mean_ssim (expects images)", a.sample_shape(), b.sample_shape())),
    };
    if a.len() != b.len() {
        return Err(crate::Error::shape("mean_ssim", &[a.len()], &[b.len()]));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        total += ssim_raw(x, y, h, w)?;
    }
    Ok(total / a.len() as f64)
}
