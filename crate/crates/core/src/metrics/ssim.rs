//! Mean SSIM over all valid 7×7 uniform windows.
//!
//! Local statistics use the unbiased (N−1) covariance estimator. Constants
//! assume a unit dynamic range.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const WINDOW: usize = 7;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// SSIM of two grayscale images of shape `[height, width]`.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("ssim", a.shape(), b.shape()));
    }
    let (h, w) = match *a.shape() {
        [h, w] => (h, w),
        _ => return Err(Error::shape("ssim (expects [h, w])", a.shape(), b.shape())),
    };
    ssim_raw(a.data(), b.data(), h, w)
}

/// SSIM of two row-major `h × w` images given as flat slices.
pub fn ssim_raw(a: &[f32], b: &[f32], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::shape("ssim", &[h, w], &[a.len(), b.len()]));
    }
    if h < WINDOW || w < WINDOW {
        return Err(Error::Contract(format!(
            "ssim needs images of at least {WINDOW}x{WINDOW}, got {h}x{w}"
        )));
    }
    let n = (WINDOW * WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - WINDOW {
        for c in 0..=w - WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in r..r + WINDOW {
                for j in c..c + WINDOW {
                    sa += a[i * w + j] as f64;
                    sb += b[i * w + j] as f64;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in r..r + WINDOW {
                for j in c..c + WINDOW {
                    let da = a[i * w + j] as f64 - ma;
                    let db = b[i * w + j] as f64 - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / (n - 1.0), vb / (n - 1.0), cov / (n - 1.0));
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
        Tensor::new(vec![h, w], (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn identical_images_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_image(&mut rng, 16, 20);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_images_reduce_to_luminance() {
        let (p, q) = (0.2f32, 0.7f32);
        let a = Tensor::full(&[10, 10], p);
        let b = Tensor::full(&[10, 10], q);
        let (p, q) = (p as f64, q as f64);
        let expected = ((2.0 * p * q + C1) * C2) / ((p * p + q * q + C1) * C2);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    /// Independent per-window computation with population moments rescaled.
    fn oracle(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
        let mut scores = Vec::new();
        for r in 0..h - 6 {
            for c in 0..w - 6 {
                let xs: Vec<f64> = (0..49).map(|k| a[(r + k / 7) * w + c + k % 7] as f64).collect();
                let ys: Vec<f64> = (0..49).map(|k| b[(r + k / 7) * w + c + k % 7] as f64).collect();
                let mx = xs.iter().sum::<f64>() / 49.0;
                let my = ys.iter().sum::<f64>() / 49.0;
                let exx = xs.iter().map(|x| x * x).sum::<f64>() / 49.0;
                let eyy = ys.iter().map(|y| y * y).sum::<f64>() / 49.0;
                let exy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / 49.0;
                let k = 49.0 / 48.0;
                let vx = (exx - mx * mx) * k;
                let vy = (eyy - my * my) * k;
                let cxy = (exy - mx * my) * k;
                let l = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
                let cs = (2.0 * cxy + C2) / (vx + vy + C2);
                scores.push(l * cs);
            }
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_image(&mut rng, 16, 16);
            let b = random_image(&mut rng, 16, 16);
            let got = ssim(&a, &b).unwrap();
            let want = oracle(a.data(), b.data(), 16, 16);
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_image(&mut rng, 12, 9);
            let b = a.map(|v| 1.0 - v * 0.5);
            let s = ssim(&a, &b).unwrap();
            assert_eq!(s, ssim(&b, &a).unwrap());
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn rejects_mismatch_and_tiny() {
        assert!(ssim(&Tensor::zeros(&[8, 8]), &Tensor::zeros(&[8, 9])).is_err());
        assert!(ssim(&Tensor::zeros(&[6, 8]), &Tensor::zeros(&[6, 8])).is_err());
    }
}
