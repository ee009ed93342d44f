//! Dataset assembly, translation scoring and the τ × guidance grid, shared by
//! the command-line tool and the acceptance suite.
//!
//! Images live in [0, 1] on disk and in metrics; the model sees them mapped
//! to [−1, 1]. Point data is used as is.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bridge::{translate, BridgeConfig, VelocityField};
use crate::domains::{gen_phantom_set, gen_points, split_keys, PhantomImageDomain, PointCloudDomain, Pose, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    coverage, frechet_gaussian, mean_relative_l2, mean_ssim, mmd_default, spearman, FeatureExtractor,
    DEFAULT_COVERAGE_K,
};
use crate::model::DomainLabel;
use crate::persist::{parse_phantom_domain, DataConfig, DataKind};
use crate::samples::SampleSet;
use crate::tensor::Tensor;

/// SplitMix64 finalizer, used to derive independent stream seeds from one run seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &t in tags {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15 ^ t.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Train and held-out sets per domain, in model space.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub names: Vec<String>,
    pub train: Vec<SampleSet>,
    pub test: Vec<SampleSet>,
    pub images: bool,
    pub test_poses: Vec<Pose>,
}

impl DataBundle {
    /// Maps model-space samples to the space metrics and files use.
    pub fn to_output_space(&self, set: &SampleSet) -> SampleSet {
        if self.images {
            to_image_space(set)
        } else {
            set.clone()
        }
    }

    pub fn to_model_space(&self, set: &SampleSet) -> SampleSet {
        if self.images {
            to_model_space(set)
        } else {
            set.clone()
        }
    }

    pub fn label_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("unknown domain `{name}` (have {})", self.names.join(", "))))
    }
}

pub fn to_model_space(images: &SampleSet) -> SampleSet {
    images.map(|v| 2.0 * v - 1.0)
}

pub fn to_image_space(x: &SampleSet) -> SampleSet {
    x.map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
}

/// Train/test poses: `n` poses drawn from the grid (all when `n` covers it),
/// then split by pose.
pub fn phantom_poses(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<Pose>, Vec<Pose>)> {
    let grid = Pose::grid();
    let poses: Vec<Pose> = if n >= grid.len() {
        grid
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        let mut p: Vec<Pose> = grid.choose_multiple(&mut rng, n).copied().collect();
        p.sort();
        p
    };
    let test = split_keys(poses.iter().copied(), &SplitSpec { test_fraction }, derive_seed(seed, &[2]))?;
    let train = poses.iter().copied().filter(|p| !test.contains(p)).collect();
    Ok((train, test.into_iter().collect()))
}

/// Images of `domain` at `poses`, `shots` each, in [0, 1].
pub fn phantom_images(domain: &PhantomImageDomain, poses: &[Pose], shots: u64, seed: u64) -> Result<SampleSet> {
    let records = gen_phantom_set(domain, poses, shots, seed)?;
    let rows: Vec<&[f32]> = records.iter().map(|r| r.image.data()).collect();
    SampleSet::from_samples(&rows, &[domain.resolution, domain.resolution], domain.name())
}

pub fn build_data(cfg: &DataConfig) -> Result<DataBundle> {
    cfg.validate()?;
    match cfg.kind {
        DataKind::Points => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (i, name) in cfg.domains.iter().enumerate() {
                let mk = |split: u64| PointCloudDomain {
                    generator: name.parse().expect("validated"),
                    noise_sigma: cfg.noise,
                    n: cfg.n,
                    seed: derive_seed(cfg.seed, &[i as u64, split]),
                };
                train.push(gen_points(&mk(0))?);
                test.push(gen_points(&mk(1))?);
            }
            Ok(DataBundle {
                names: cfg.domains.clone(),
                train,
                test,
                images: false,
                test_poses: Vec::new(),
            })
        }
        DataKind::Phantom => {
            let (train_poses, test_poses) = phantom_poses(cfg.n, cfg.test_fraction, cfg.seed)?;
            let mut train = Vec::new();
            let mut test = Vec::new();
            for name in &cfg.domains {
                let (style, dose) = parse_phantom_domain(name)?;
                let domain = PhantomImageDomain {
                    resolution: cfg.resolution,
                    style,
                    dose,
                };
                let noise_seed = derive_seed(cfg.seed, &[3]);
                train.push(to_model_space(&phantom_images(&domain, &train_poses, cfg.shots as u64, noise_seed)?));
                test.push(to_model_space(&phantom_images(&domain, &test_poses, cfg.shots as u64, noise_seed)?));
            }
            Ok(DataBundle {
                names: cfg.domains.clone(),
                train,
                test,
                images: true,
                test_poses,
            })
        }
    }
}

/// Translates every row of `source` (model space) and returns `(z_tau, x_hat)`.
pub fn translate_set<F: VelocityField + ?Sized>(
    field: &F,
    source: &SampleSet,
    from: usize,
    to: usize,
    cfg: &BridgeConfig,
) -> Result<(SampleSet, SampleSet)> {
    let r = translate(field, &source.matrix(), DomainLabel::Domain(from), DomainLabel::Domain(to), cfg)?;
    let mut x_hat = source.with_data(r.x_hat)?;
    x_hat.domain = format!("{}->{to}", source.domain);
    Ok((source.with_data(r.z_tau)?, x_hat))
}

/// Realism of `generated` against `reference` and structure against `source`,
/// all in output space. SSIM is only defined for image samples.
pub fn score_outputs(
    generated: &SampleSet,
    source: Option<&SampleSet>,
    reference: &SampleSet,
    features: &FeatureExtractor,
) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert("rfid".into(), frechet_gaussian(generated, reference, features)?);
    m.insert("mmd".into(), mmd_default(generated, reference)?);
    m.insert("coverage".into(), coverage(generated, reference, DEFAULT_COVERAGE_K)?);
    if let Some(src) = source {
        m.insert("source_l2".into(), mean_relative_l2(generated, src)?);
        if generated.sample_shape().len() == 2 {
            m.insert("ssim".into(), mean_ssim(src, generated)?);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub tau: f32,
    pub guidance: f32,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub taus: Vec<f32>,
    pub guidance: Vec<f32>,
    /// Row-major over guidance, then tau.
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub const ABLATION_COLUMNS: [&str; 3] = ["rfid", "ssim", "source_l2"];

/// Translates `source` for every (guidance, τ) pair and scores each cell.
#[allow(clippy::too_many_arguments)]
pub fn ablation_grid<F: VelocityField + ?Sized>(
    field: &F,
    bundle: &DataBundle,
    source: &SampleSet,
    from: usize,
    to: usize,
    reference: &SampleSet,
    taus: &[f32],
    guidance: &[f32],
    base: &BridgeConfig,
    features: &FeatureExtractor,
) -> Result<Ablation> {
    if taus.is_empty() || guidance.is_empty() {
        return Err(Error::Config("ablation grids must be non-empty".into()));
    }
    let src_out = bundle.to_output_space(source);
    let mut cells = Vec::with_capacity(taus.len() * guidance.len());
    for &w in guidance {
        for &tau in taus {
            let cfg = BridgeConfig {
                tau,
                guidance_weight: w,
                ..*base
            };
            cfg.validate()?;
            let (_, x_hat) = translate_set(field, source, from, to, &cfg)?;
            let metrics = score_outputs(&bundle.to_output_space(&x_hat), Some(&src_out), reference, features)?;
            cells.push(AblationCell {
                tau,
                guidance: w,
                metrics,
            });
        }
    }
    Ok(Ablation {
        taus: taus.to_vec(),
        guidance: guidance.to_vec(),
        cells,
    })
}

impl Ablation {
    pub fn cell(&self, guidance_idx: usize, tau_idx: usize) -> &AblationCell {
        &self.cells[guidance_idx * self.taus.len() + tau_idx]
    }

    fn metric(&self, gi: usize, ti: usize, key: &str) -> f64 {
        self.cell(gi, ti).metrics.get(key).copied().unwrap_or(f64::NAN)
    }

    /// Rows are guidance weights; each τ contributes an rfid/ssim/source_l2 column group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("guidance");
        for t in &self.taus {
            for c in ABLATION_COLUMNS {
                let _ = write!(out, ",tau={t} {c}");
            }
        }
        out.push('\n');
        for (gi, w) in self.guidance.iter().enumerate() {
            let _ = write!(out, "{w}");
            for ti in 0..self.taus.len() {
                for c in ABLATION_COLUMNS {
                    let _ = write!(out, ",{}", self.metric(gi, ti, c));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Directional checks: structure rises with τ, realism improves and
    /// structure drops as guidance grows.
    pub fn trends(&self) -> Vec<TrendCheck> {
        let mut checks = Vec::new();
        let has_ssim = self.cells.iter().all(|c| c.metrics.contains_key("ssim"));
        let structure = if has_ssim { "ssim" } else { "source_l2" };
        let sign = if has_ssim { 1.0 } else { -1.0 };
        if self.taus.len() >= 2 {
            for (gi, w) in self.guidance.iter().enumerate() {
                let by_tau: Vec<(f32, f64)> = self
                    .taus
                    .iter()
                    .enumerate()
                    .map(|(ti, &t)| (t, self.metric(gi, ti, structure)))
                    .collect();
                let mut sorted = by_tau.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let ok = sorted.windows(2).all(|p| sign * (p[1].1 - p[0].1) > 0.0);
                checks.push(TrendCheck {
                    name: format!("{structure} {} with tau at guidance {w}", if has_ssim { "rises" } else { "falls" }),
                    passed: ok,
                    detail: format!("{by_tau:?}"),
                });
            }
        }
        if self.guidance.len() >= 2 {
            let ws: Vec<f64> = self.guidance.iter().map(|&w| w as f64).collect();
            for (ti, t) in self.taus.iter().enumerate() {
                for (key, want) in [("rfid", -1.0), (structure, -sign)] {
                    let ys: Vec<f64> = (0..self.guidance.len()).map(|gi| self.metric(gi, ti, key)).collect();
                    match spearman(&ws, &ys) {
                        Ok(rho) => checks.push(TrendCheck {
                            name: format!("spearman(guidance, {key}) at tau {t} is {}", if want < 0.0 { "<= -0.5" } else { ">= 0.5" }),
                            passed: want * rho >= 0.5,
                            detail: format!("rho = {rho:.3}"),
                        }),
                        Err(e) => checks.push(TrendCheck {
                            name: format!("spearman(guidance, {key}) at tau {t}"),
                            passed: false,
                            detail: e.to_string(),
                        }),
                    }
                }
            }
        }
        checks
    }

    pub fn trend_summary(&self) -> String {
        let mut out = String::new();
        for c in self.trends() {
            let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        out
    }
}

/// `n × dim` standard-normal draws as a sample set shaped like `like`.
pub fn gaussian_like(like: &SampleSet, n: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = like.with_data(Tensor::randn(&[n, like.dim()], &mut rng))?;
    set.domain = "gaussian".into();
    Ok(set)
}
