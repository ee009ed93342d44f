//! Squared maximum mean discrepancy with a mixture of RBF kernels.
//!
//! Kernel sums are accumulated in fixed point so the statistic does not
//! depend on sample order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::samples::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmdEstimator {
    /// U-statistic; excludes self-pairs and can be slightly negative.
    Unbiased,
    /// V-statistic; includes self-pairs and is non-negative.
    Biased,
}

/// Multipliers applied to the median pairwise distance.
pub const DEFAULT_BANDWIDTH_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Median Euclidean distance over all distinct pairs of the pooled samples.
pub fn median_distance(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    x.same_shape(y)?;
    let pooled: Vec<&[f32]> = x.iter().chain(y.iter()).collect();
    let n = pooled.len();
    if n < 2 {
        return Err(Error::Contract("median heuristic needs at least two samples".into()));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    let m = d.len();
    let mid = m / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if m % 2 == 1 {
        return Ok(upper);
    }
    let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (lower + upper))
}

/// Median heuristic bandwidths; falls back to unit scale when all points coincide.
pub fn default_bandwidths(x: &SampleSet, y: &SampleSet) -> Result<Vec<f64>> {
    let med = median_distance(x, y)?;
    let base = if med > 0.0 { med } else { 1.0 };
    Ok(DEFAULT_BANDWIDTH_SCALES.iter().map(|s| s * base).collect())
}

const FIXED_SCALE: f64 = (1u64 << 62) as f64;

/// Order-independent accumulator for kernel values in `[0, bandwidths]`.
#[derive(Default, Clone, Copy)]
struct ExactSum(i128);

impl ExactSum {
    fn add(&mut self, v: f64) {
        self.0 += (v * FIXED_SCALE).round() as i128;
    }

    fn value(self) -> f64 {
        self.0 as f64 / FIXED_SCALE
    }
}

fn kernel(sq: f64, gammas: &[f64]) -> f64 {
    gammas.iter().map(|g| (-sq * g).exp()).sum()
}

struct KernelSums {
    xx_off: ExactSum,
    yy_off: ExactSum,
    xx_diag: ExactSum,
    yy_diag: ExactSum,
    xy: ExactSum,
}

fn kernel_sums(x: &[&[f32]], y: &[&[f32]], gammas: &[f64]) -> KernelSums {
    let mut s = KernelSums {
        xx_off: ExactSum::default(),
        yy_off: ExactSum::default(),
        xx_diag: ExactSum::default(),
        yy_diag: ExactSum::default(),
        xy: ExactSum::default(),
    };
    let self_k = kernel(0.0, gammas);
    for (i, a) in x.iter().enumerate() {
        s.xx_diag.add(self_k);
        for b in &x[i + 1..] {
            // each unordered pair counted twice
            let k = kernel(sq_dist(a, b), gammas);
            s.xx_off.add(k);
            s.xx_off.add(k);
        }
    }
    for (i, a) in y.iter().enumerate() {
        s.yy_diag.add(self_k);
        for b in &y[i + 1..] {
            let k = kernel(sq_dist(a, b), gammas);
            s.yy_off.add(k);
            s.yy_off.add(k);
        }
    }
    for a in x {
        for b in y {
            s.xy.add(kernel(sq_dist(a, b), gammas));
        }
    }
    s
}

fn mmd_rows(x: &[&[f32]], y: &[&[f32]], bandwidths: &[f64], estimator: MmdEstimator) -> Result<f64> {
    if bandwidths.is_empty() || bandwidths.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::Contract(format!("bandwidths must be positive, got {bandwidths:?}")));
    }
    let (m, n) = (x.len() as f64, y.len() as f64);
    if estimator == MmdEstimator::Unbiased && (x.len() < 2 || y.len() < 2) {
        return Err(Error::Contract("unbiased MMD needs at least 2 samples per set".into()));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::Contract("MMD needs non-empty sets".into()));
    }
    let gammas: Vec<f64> = bandwidths.iter().map(|b| 1.0 / (2.0 * b * b)).collect();
    let s = kernel_sums(x, y, &gammas);
    let cross = 2.0 * s.xy.value() / (m * n);
    Ok(match estimator {
        MmdEstimator::Unbiased => s.xx_off.value() / (m * (m - 1.0)) + s.yy_off.value() / (n * (n - 1.0)) - cross,
        MmdEstimator::Biased => {
            ExactSum(s.xx_off.0 + s.xx_diag.0).value() / (m * m) + ExactSum(s.yy_off.0 + s.yy_diag.0).value() / (n * n)
                - cross
        }
    })
}

/// Squared MMD between two sample sets, summed over the bandwidth mixture.
pub fn mmd_rbf(x: &SampleSet, y: &SampleSet, bandwidths: &[f64], estimator: MmdEstimator) -> Result<f64> {
    x.same_shape(y)?;
    let xs: Vec<&[f32]> = x.iter().collect();
    let ys: Vec<&[f32]> = y.iter().collect();
    mmd_rows(&xs, &ys, bandwidths, estimator)
}

/// Unbiased MMD with median-heuristic bandwidths.
pub fn mmd_default(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    let bw = default_bandwidths(x, y)?;
    mmd_rbf(x, y, &bw, MmdEstimator::Unbiased)
}

/// Standard deviation of the statistic under resampling both sets with replacement.
pub fn mmd_bootstrap_se(
    x: &SampleSet,
    y: &SampleSet,
    bandwidths: &[f64],
    estimator: MmdEstimator,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    x.same_shape(y)?;
    if reps < 2 {
        return Err(Error::Contract("bootstrap needs at least 2 replicates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(reps);
    for _ in 0..reps {
        let xs: Vec<&[f32]> = (0..x.len()).map(|_| x.sample(rng.random_range(0..x.len()))).collect();
        let ys: Vec<&[f32]> = (0..y.len()).map(|_| y.sample(rng.random_range(0..y.len()))).collect();
        stats.push(mmd_rows(&xs, &ys, bandwidths, estimator)?);
    }
    let mean = stats.iter().sum::<f64>() / reps as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, shift: f32, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal) + shift).collect();
        SampleSet::new(Tensor::new(vec![n, d], data).unwrap(), "g").unwrap()
    }

    #[test]
    fn identical_singletons_biased_is_zero() {
        let x = SampleSet::from_samples(&[[0.3f32, 0.4]], &[2], "x").unwrap();
        let v = mmd_rbf(&x, &x, &[1.0], MmdEstimator::Biased).unwrap();
        assert_eq!(v, 0.0);
        assert!(mmd_rbf(&x, &x, &[1.0], MmdEstimator::Unbiased).is_err());
    }

    #[test]
    fn biased_self_comparison_is_zero_and_nonnegative() {
        let x = gaussian(60, 2, 0.0, 1);
        let bw = default_bandwidths(&x, &x).unwrap();
        let v = mmd_rbf(&x, &x, &bw, MmdEstimator::Biased).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
        let y = gaussian(60, 2, 0.5, 2);
        assert!(mmd_rbf(&x, &y, &bw, MmdEstimator::Biased).unwrap() >= 0.0);
    }

    #[test]
    fn same_distribution_unbiased_within_three_se() {
        let x = gaussian(300, 2, 0.0, 3);
        let y = gaussian(300, 2, 0.0, 4);
        let bw = default_bandwidths(&x, &y).unwrap();
        let v = mmd_rbf(&x, &y, &bw, MmdEstimator::Unbiased).unwrap();
        let se = mmd_bootstrap_se(&x, &y, &bw, MmdEstimator::Unbiased, 30, 9).unwrap();
        assert!(v.abs() < 3.0 * se, "mmd {v} se {se}");
    }

    #[test]
    fn shifted_distribution_is_detected() {
        let x = gaussian(500, 1, 0.0, 5);
        let y = gaussian(500, 1, 3.0, 6);
        let bw = default_bandwidths(&x, &y).unwrap();
        let v = mmd_rbf(&x, &y, &bw, MmdEstimator::Unbiased).unwrap();
        let se = mmd_bootstrap_se(&x, &y, &bw, MmdEstimator::Unbiased, 20, 10).unwrap();
        assert!(v > 0.0 && v > 5.0 * se, "mmd {v} se {se}");
    }

    #[test]
    fn median_of_known_points() {
        // pairwise distances of {0, 1, 3}: 1, 2, 3 → median 2
        let x = SampleSet::from_samples(&[[0.0f32], [1.0]], &[1], "x").unwrap();
        let y = SampleSet::from_samples(&[[3.0f32]], &[1], "y").unwrap();
        assert_eq!(median_distance(&x, &y).unwrap(), 2.0);
        // {0, 1, 3, 7}: 1,2,3,4,6,7 → (3+4)/2
        let y2 = SampleSet::from_samples(&[[3.0f32], [7.0]], &[1], "y").unwrap();
        assert_eq!(median_distance(&x, &y2).unwrap(), 3.5);
    }

    #[test]
    fn rejects_bad_bandwidths() {
        let x = gaussian(5, 2, 0.0, 1);
        assert!(mmd_rbf(&x, &x, &[], MmdEstimator::Biased).is_err());
        assert!(mmd_rbf(&x, &x, &[0.0], MmdEstimator::Biased).is_err());
    }
}
