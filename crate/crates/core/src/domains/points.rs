//! Seeded 2D toy distributions, each standardized by fixed population moments.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::samples::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointGenerator {
    TwoMoons,
    TwoRings,
    Checkerboard,
    GaussianMixture,
}

impl PointGenerator {
    pub const ALL: [PointGenerator; 4] = [
        PointGenerator::TwoMoons,
        PointGenerator::TwoRings,
        PointGenerator::Checkerboard,
        PointGenerator::GaussianMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PointGenerator::TwoMoons => "two_moons",
            PointGenerator::TwoRings => "two_rings",
            PointGenerator::Checkerboard => "checkerboard",
            PointGenerator::GaussianMixture => "gaussian_mixture",
        }
    }

    /// Mean and standard deviation per axis of the noise-free distribution.
    pub fn standardization(self) -> ([f64; 2], [f64; 2]) {
        match self {
            PointGenerator::TwoMoons => {
                // θ ~ U[0, π]; E sin θ = 2/π, E sin² θ = E cos² θ = 1/2
                let e_y2 = 0.25 + 0.5 * (0.75 - 2.0 / PI);
                ([0.5, 0.25], [0.75f64.sqrt(), (e_y2 - 0.0625).sqrt()])
            }
            PointGenerator::TwoRings => ([0.0, 0.0], [0.3125f64.sqrt(); 2]),
            PointGenerator::Checkerboard => ([0.0, 0.0], [(16.0f64 / 12.0).sqrt(); 2]),
            PointGenerator::GaussianMixture => ([0.0, 0.0], [2.0f64.sqrt(); 2]),
        }
    }

    fn raw_point(self, i: usize, rng: &mut ChaCha8Rng) -> [f64; 2] {
        match self {
            PointGenerator::TwoMoons => {
                let theta = rng.random::<f64>() * PI;
                if i.is_multiple_of(2) {
                    [theta.cos(), theta.sin()]
                } else {
                    [1.0 - theta.cos(), 0.5 - theta.sin()]
                }
            }
            PointGenerator::TwoRings => {
                let theta = rng.random::<f64>() * 2.0 * PI;
                let r = if i.is_multiple_of(2) { 1.0 } else { 0.5 };
                [r * theta.cos(), r * theta.sin()]
            }
            PointGenerator::Checkerboard => {
                // 4×4 board on [−2, 2]², cells with even (col + row) are filled
                let cell = rng.random_range(0..8usize);
                let row = cell / 2;
                let col = 2 * (cell % 2) + (row % 2);
                [
                    -2.0 + col as f64 + rng.random::<f64>(),
                    -2.0 + row as f64 + rng.random::<f64>(),
                ]
            }
            PointGenerator::GaussianMixture => {
                let k = rng.random_range(0..8usize) as f64;
                let a = k * PI / 4.0;
                [2.0 * a.cos(), 2.0 * a.sin()]
            }
        }
    }
}

impl FromStr for PointGenerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PointGenerator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown point generator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudDomain {
    pub generator: PointGenerator,
    pub noise_sigma: f64,
    pub n: usize,
    pub seed: u64,
}

pub fn gen_points(domain: &PointCloudDomain) -> Result<SampleSet> {
    if domain.n == 0 {
        return Err(Error::Contract("gen_points needs n >= 1".into()));
    }
    if !(domain.noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise_sigma must be non-negative, got {}", domain.noise_sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(domain.seed);
    let (mean, std) = domain.generator.standardization();
    let mut rows = Vec::with_capacity(domain.n);
    for i in 0..domain.n {
        let p = domain.generator.raw_point(i, &mut rng);
        let mut out = [0.0f32; 2];
        for k in 0..2 {
            let noise: f64 = if domain.noise_sigma > 0.0 {
                domain.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            out[k] = ((p[k] + noise - mean[k]) / std[k]) as f32;
        }
        rows.push(out);
    }
    SampleSet::from_samples(&rows, &[2], domain.generator.name())
}
