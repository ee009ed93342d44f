use crate::error::{Error, Result};
use crate::samples::SampleSet;

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance from each real sample to its `k`-th nearest other real sample.
pub fn knn_radii(real: &SampleSet, k: usize) -> Result<Vec<f64>> {
    if k == 0 || real.len() <= k {
        return Err(Error::Contract(format!(
            "coverage needs more than k = {k} real samples, got {}",
            real.len()
        )));
    }
    let n = real.len();
    let mut radii = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(n - 1);
    for i in 0..n {
        buf.clear();
        buf.extend((0..n).filter(|&j| j != i).map(|j| dist(real.sample(i), real.sample(j))));
        let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
        radii.push(*kth);
    }
    Ok(radii)
}

/// Fraction of real samples whose k-NN ball contains at least one generated sample.
pub fn coverage(gen: &SampleSet, real: &SampleSet, k: usize) -> Result<f64> {
    gen.same_shape(real)?;
    let radii = knn_radii(real, k)?;
    let covered = radii
        .iter()
        .enumerate()
        .filter(|&(i, &r)| gen.iter().any(|g| dist(real.sample(i), g) <= r))
        .count();
    Ok(covered as f64 / real.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, center: f32, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..2 * n).map(|_| center + rng.random::<f32>()).collect();
        SampleSet::new(Tensor::new(vec![n, 2], data).unwrap(), "c").unwrap()
    }

    #[test]
    fn self_coverage_is_one() {
        let x = cloud(50, 0.0, 1);
        assert_eq!(coverage(&x, &x, 5).unwrap(), 1.0);
    }

    #[test]
    fn far_point_covers_nothing() {
        let real = cloud(40, 0.0, 2);
        let far = SampleSet::from_samples(&[[100.0f32, 100.0]], &[2], "far").unwrap();
        assert_eq!(coverage(&far, &real, 5).unwrap(), 0.0);
    }

    #[test]
    fn insufficient_real_samples() {
        let real = cloud(5, 0.0, 3);
        assert!(coverage(&real, &real, 5).is_err());
    }

    #[test]
    fn knn_radius_by_hand() {
        let real = SampleSet::from_samples(&[[0.0f32], [1.0], [3.0], [6.0]], &[1], "r").unwrap();
        assert_eq!(knn_radii(&real, 1).unwrap(), vec![1.0, 1.0, 2.0, 3.0]);
        assert_eq!(knn_radii(&real, 2).unwrap(), vec![3.0, 2.0, 3.0, 5.0]);
    }
}
