//! Procedural head phantoms in two acquisition styles.
//!
//! Both styles render the same nested-ellipse geometry. The real style then
//! blurs it, compresses the contrast, adds a soft-tissue halo outside the
//! skull and applies dose-scaled Poisson-Gaussian noise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const POSE_LIMIT_DEG: i32 = 40;
pub const POSE_STEP_DEG: i32 = 10;
pub const DEFAULT_RESOLUTION: usize = 32;

const BONE: f32 = 0.9;
const BRAIN: f32 = 0.35;
const JAW: f32 = 0.6;
const CAVITY: f32 = 0.1;
/// Foreground threshold on the synthetic intensity scale (between cavity and brain).
const MASK_LEVEL: f32 = 0.22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pose {
    pub rx: i32,
    pub ry: i32,
    pub rz: i32,
}

impl Pose {
    pub fn new(rx: i32, ry: i32, rz: i32) -> Result<Self> {
        let p = Pose { rx, ry, rz };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, v) in [("rx", self.rx), ("ry", self.ry), ("rz", self.rz)] {
            if v.abs() > POSE_LIMIT_DEG || v % POSE_STEP_DEG != 0 {
                return Err(Error::Config(format!(
                    "pose {axis} = {v} is off the grid (multiples of {POSE_STEP_DEG} in ±{POSE_LIMIT_DEG})"
                )));
            }
        }
        Ok(())
    }

    /// All 9³ legal poses in lexicographic order.
    pub fn grid() -> Vec<Pose> {
        let axis: Vec<i32> = (-POSE_LIMIT_DEG..=POSE_LIMIT_DEG).step_by(POSE_STEP_DEG as usize).collect();
        let mut out = Vec::with_capacity(axis.len().pow(3));
        for &rx in &axis {
            for &ry in &axis {
                for &rz in &axis {
                    out.push(Pose { rx, ry, rz });
                }
            }
        }
        out
    }

    fn index(&self) -> u64 {
        let a = |v: i32| ((v + POSE_LIMIT_DEG) / POSE_STEP_DEG) as u64;
        (a(self.rx) * 9 + a(self.ry)) * 9 + a(self.rz)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}y{}z{}", self.rx, self.ry, self.rz)
    }
}

impl FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed pose id `{s}`"));
        let rest = s.strip_prefix('x').ok_or_else(bad)?;
        let (rx, rest) = rest.split_once('y').ok_or_else(bad)?;
        let (ry, rz) = rest.split_once('z').ok_or_else(bad)?;
        let num = |t: &str| t.parse::<i32>().map_err(|_| bad());
        Pose::new(num(rx)?, num(ry)?, num(rz)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Style {
    Synthetic,
    Real,
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::Synthetic => "synthetic",
            Style::Real => "real",
        }
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" | "synthetic_style" => Ok(Style::Synthetic),
            "real" | "real_style" => Ok(Style::Real),
            _ => Err(Error::Config(format!("unknown style `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dose {
    Low,
    Normal,
    High,
}

impl Dose {
    pub const ALL: [Dose; 3] = [Dose::Low, Dose::Normal, Dose::High];

    pub fn name(self) -> &'static str {
        match self {
            Dose::Low => "low",
            Dose::Normal => "normal",
            Dose::High => "high",
        }
    }
}

impl FromStr for Dose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dose::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dose `{s}`")))
    }
}

/// Rendering knobs for one acquisition style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    /// Gaussian blur sigma in pixels; 0 disables blurring.
    pub blur_sigma: f32,
    pub contrast_lo: f32,
    pub contrast_hi: f32,
    pub halo_strength: f32,
    /// Expected photon count at unit intensity; `None` disables shot noise.
    pub photons: Option<f64>,
    pub read_noise: f32,
}

impl StyleParams {
    pub fn synthetic() -> Self {
        StyleParams {
            blur_sigma: 0.0,
            contrast_lo: 0.0,
            contrast_hi: 1.0,
            halo_strength: 0.0,
            photons: None,
            read_noise: 0.0,
        }
    }

    pub fn real(dose: Dose) -> Self {
        let (photons, read_noise) = match dose {
            Dose::Low => (400.0, 0.015),
            Dose::Normal => (1500.0, 0.008),
            Dose::High => (6000.0, 0.004),
        };
        StyleParams {
            blur_sigma: 0.5,
            contrast_lo: 0.12,
            contrast_hi: 0.82,
            halo_strength: 0.05,
            photons: Some(photons),
            read_noise,
        }
    }

    pub fn for_style(style: Style, dose: Dose) -> Self {
        match style {
            Style::Synthetic => Self::synthetic(),
            Style::Real => Self::real(dose),
        }
    }

    pub fn without_noise(self) -> Self {
        StyleParams {
            photons: None,
            read_noise: 0.0,
            ..self
        }
    }

    /// Foreground threshold that matches the synthetic one after contrast compression.
    pub fn mask_threshold(&self) -> f32 {
        self.contrast_lo + (self.contrast_hi - self.contrast_lo) * MASK_LEVEL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomImageDomain {
    pub resolution: usize,
    pub style: Style,
    pub dose: Dose,
}

impl PhantomImageDomain {
    pub fn params(&self) -> StyleParams {
        StyleParams::for_style(self.style, self.dose)
    }

    /// Directory-style name, e.g. `real/normal`.
    pub fn name(&self) -> String {
        format!("{}/{}", self.style.name(), self.dose.name())
    }
}

/// A rendered image plus how many pixels had to be clamped into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Tensor,
    pub clipped: usize,
}

struct Geometry {
    value: Vec<f32>,
    /// Elliptical radius w.r.t. the outer skull boundary (1 on the boundary).
    outer_rho: Vec<f32>,
}

fn ellipse_rho(u: f32, v: f32, cx: f32, cy: f32, a: f32, b: f32) -> f32 {
    (((u - cx) / a).powi(2) + ((v - cy) / b).powi(2)).sqrt()
}

fn geometry(resolution: usize, pose: Pose) -> Geometry {
    let rad = |deg: i32| (deg as f32).to_radians();
    let (sz, cz) = rad(pose.rz).sin_cos();
    // out-of-plane tilts foreshorten the skull and shift the interior features
    let fx = (0.5 * rad(pose.ry)).cos();
    let fy = (0.5 * rad(pose.rx)).cos();
    let px = 0.3 * rad(pose.ry).sin();
    let py = 0.3 * rad(pose.rx).sin();
    let (a, b, wall) = (0.8 * fx, 0.9 * fy, 0.12);

    let n = resolution * resolution;
    let mut value = Vec::with_capacity(n);
    let mut outer_rho = Vec::with_capacity(n);
    for i in 0..resolution {
        for j in 0..resolution {
            let x = 2.0 * (j as f32 + 0.5) / resolution as f32 - 1.0;
            let y = 2.0 * (i as f32 + 0.5) / resolution as f32 - 1.0;
            let u = cz * x + sz * y;
            let v = -sz * x + cz * y;
            let rho = ellipse_rho(u, v, 0.0, 0.0, a, b);
            let val = if rho > 1.0 {
                0.0
            } else if ellipse_rho(u, v, 0.0, 0.0, a - wall, b - wall) > 1.0 {
                BONE
            } else if ellipse_rho(u, v, -0.26 * fx + px, -0.15 + py, 0.16, 0.12) <= 1.0
                || ellipse_rho(u, v, 0.26 * fx + px, -0.15 + py, 0.16, 0.12) <= 1.0
            {
                CAVITY
            } else if ellipse_rho(u, v, 0.5 * px, 0.45 + 0.5 * py, 0.35 * fx, 0.14) <= 1.0 {
                JAW
            } else {
                BRAIN
            };
            value.push(val);
            outer_rho.push(rho);
        }
    }
    Geometry { value, outer_rho }
}

fn gaussian_blur(img: &[f32], res: usize, sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|k| (-(k * k) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let clamp = |i: isize| i.clamp(0, res as isize - 1) as usize;

    let mut tmp = vec![0.0f32; img.len()];
    for i in 0..res {
        for j in 0..res {
            tmp[i * res + j] = kernel
                .iter()
                .zip(-radius..)
                .map(|(w, k)| w * img[i * res + clamp(j as isize + k)])
                .sum();
        }
    }
    let mut out = vec![0.0f32; img.len()];
    for i in 0..res {
        for j in 0..res {
            out[i * res + j] = kernel
                .iter()
                .zip(-radius..)
                .map(|(w, k)| w * tmp[clamp(i as isize + k) * res + j])
                .sum();
        }
    }
    out
}

/// Renders `pose` under `params`; `rng` drives the noise only.
pub fn render(resolution: usize, pose: Pose, params: &StyleParams, rng: &mut impl Rng) -> Result<Rendered> {
    if resolution == 0 {
        return Err(Error::Config("phantom resolution must be positive".into()));
    }
    pose.validate()?;
    let geo = geometry(resolution, pose);
    let mut img = if params.blur_sigma > 0.0 {
        gaussian_blur(&geo.value, resolution, params.blur_sigma)
    } else {
        geo.value
    };

    let span = params.contrast_hi - params.contrast_lo;
    for (p, &rho) in img.iter_mut().zip(&geo.outer_rho) {
        *p = params.contrast_lo + span * *p;
        if params.halo_strength > 0.0 && rho > 1.0 {
            *p += params.halo_strength * (-(rho - 1.0) / 0.08).exp();
        }
    }

    if let Some(photons) = params.photons {
        for p in img.iter_mut() {
            let lambda = (*p as f64 * photons).max(0.0);
            if lambda > 0.0 {
                let pois = Poisson::new(lambda).map_err(|e| Error::Numeric(format!("poisson noise: {e}")))?;
                *p = (pois.sample(rng) / photons) as f32;
            }
        }
    }
    if params.read_noise > 0.0 {
        for p in img.iter_mut() {
            *p += params.read_noise * rng.sample::<f32, _>(StandardNormal);
        }
    }

    let mut clipped = 0;
    for p in img.iter_mut() {
        if !(0.0..=1.0).contains(p) {
            clipped += 1;
            *p = p.clamp(0.0, 1.0);
        }
    }
    Ok(Rendered {
        image: Tensor::new(vec![resolution, resolution], img)?,
        clipped,
    })
}

/// Deterministic noise stream for one (domain, pose, shot) triple.
pub fn image_rng(seed: u64, domain: &PhantomImageDomain, pose: Pose, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = domain.style as u64;
    let dose = domain.dose as u64;
    rng.set_stream((((pose.index() * 3 + dose) * 2 + style) << 24) | (shot & 0xff_ffff));
    rng
}

/// Renders one image of `domain` at `pose`; `shot` selects the noise realization.
pub fn gen_phantom(domain: &PhantomImageDomain, pose: Pose, seed: u64, shot: u64) -> Result<Tensor> {
    let mut rng = image_rng(seed, domain, pose, shot);
    Ok(render(domain.resolution, pose, &domain.params(), &mut rng)?.image)
}

pub fn foreground_mask(image: &Tensor, params: &StyleParams) -> Vec<bool> {
    let thr = params.mask_threshold();
    image.data().iter().map(|&v| v > thr).collect()
}

pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomRecord {
    pub pose: Pose,
    pub shot: u64,
    pub image: Tensor,
}

/// `shots` images per pose, in pose-major order.
pub fn gen_phantom_set(domain: &PhantomImageDomain, poses: &[Pose], shots: u64, seed: u64) -> Result<Vec<PhantomRecord>> {
    let mut out = Vec::with_capacity(poses.len() * shots as usize);
    for &pose in poses {
        for shot in 0..shots {
            out.push(PhantomRecord {
                pose,
                shot,
                image: gen_phantom(domain, pose, seed, shot)?,
            });
        }
    }
    Ok(out)
}
