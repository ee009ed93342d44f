//! Guided Euler integration of a conditional field and the encode/translate
//! bridge built on it.
//!
//! Encoding integrates a sample backward from `t = 1` to the intermediate
//! time `tau` under its own domain label; translation then integrates the
//! resulting latent forward from `tau` to `1` under the target label. Both
//! legs are deterministic.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{DomainLabel, VectorFieldModel};
use crate::tensor::Tensor;

/// Anything that predicts a batch of velocities at one time and label.
pub trait VelocityField {
    fn data_dim(&self) -> usize;

    fn num_domains(&self) -> usize;

    fn velocity(&self, x: &Tensor, t: f32, label: DomainLabel) -> Result<Tensor>;

    /// Conditional and unconditional velocities for the same points.
    fn velocity_pair(&self, x: &Tensor, t: f32, label: DomainLabel) -> Result<(Tensor, Tensor)> {
        Ok((self.velocity(x, t, label)?, self.velocity(x, t, DomainLabel::Null)?))
    }
}

/// A frozen view of a model for inference.
#[derive(Clone, Copy)]
pub struct ModelField<'a> {
    pub model: &'a VectorFieldModel,
    pub use_ema: bool,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a VectorFieldModel, use_ema: bool) -> Self {
        Self { model, use_ema }
    }
}

impl VelocityField for ModelField<'_> {
    fn data_dim(&self) -> usize {
        self.model.data_dim()
    }

    fn num_domains(&self) -> usize {
        self.model.num_domains()
    }

    fn velocity(&self, x: &Tensor, t: f32, label: DomainLabel) -> Result<Tensor> {
        let n = x.rows();
        self.model.forward(x, &vec![t; n], &vec![label; n], self.use_ema)
    }

    fn velocity_pair(&self, x: &Tensor, t: f32, label: DomainLabel) -> Result<(Tensor, Tensor)> {
        // one forward over [x; x] with [c; null]
        let n = x.rows();
        let d = x.cols();
        let mut stacked = Vec::with_capacity(2 * n * d);
        stacked.extend_from_slice(x.data());
        stacked.extend_from_slice(x.data());
        let stacked = Tensor::new(vec![2 * n, d], stacked)?;
        let mut labels = vec![label; n];
        labels.extend(std::iter::repeat_n(DomainLabel::Null, n));
        let out = self.model.forward(&stacked, &vec![t; 2 * n], &labels, self.use_ema)?;
        let (c, u) = out.data().split_at(n * d);
        Ok((Tensor::new(vec![n, d], c.to_vec())?, Tensor::new(vec![n, d], u.to_vec())?))
    }
}

/// Which field drives the backward (encoding) leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeGuidance {
    /// Same guided field as the forward leg.
    Guided,
    /// Plain conditional field (guidance weight 1).
    Conditional,
}

impl std::str::FromStr for EncodeGuidance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guided" => Ok(Self::Guided),
            "conditional" => Ok(Self::Conditional),
            other => Err(Error::Config(format!("encode guidance must be guided|conditional, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for EncodeGuidance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Guided => "guided",
            Self::Conditional => "conditional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    pub tau: f32,
    /// Euler steps over the whole unit interval.
    pub steps: usize,
    pub guidance_weight: f32,
    pub encode_guidance: EncodeGuidance,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            tau: 0.45,
            steps: 50,
            guidance_weight: 8.5,
            encode_guidance: EncodeGuidance::Guided,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1), got {}", self.tau)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.guidance_weight >= 0.0) || !self.guidance_weight.is_finite() {
            return Err(Error::Config(format!(
                "guidance_weight must be non-negative, got {}",
                self.guidance_weight
            )));
        }
        Ok(())
    }

    fn encode_weight(&self) -> f32 {
        match self.encode_guidance {
            EncodeGuidance::Guided => self.guidance_weight,
            EncodeGuidance::Conditional => 1.0,
        }
    }
}

/// Number of Euler steps allotted to `[t_start, t_end]`: `ceil(steps·|Δt|)`, at least 1.
pub fn sub_interval_steps(steps: usize, t_start: f32, t_end: f32) -> usize {
    let span = (t_end as f64 - t_start as f64).abs();
    // absorb representation error such as 50·(1−0.6) = 20.000000000000004
    let exact = steps as f64 * span;
    ((exact - 1e-6).ceil() as usize).max(1)
}

/// `v_null + w·(v_c − v_null)`; exactly `v_c` at `w = 1` and `v_null` at `w = 0`.
pub fn guided_velocity<F: VelocityField + ?Sized>(
    field: &F,
    x: &Tensor,
    t: f32,
    label: DomainLabel,
    weight: f32,
) -> Result<Tensor> {
    if label.is_null() {
        return Err(Error::Contract("guided velocity needs a real domain label".into()));
    }
    label.index(field.num_domains())?;
    if weight == 1.0 {
        return field.velocity(x, t, label);
    }
    if weight == 0.0 {
        return field.velocity(x, t, DomainLabel::Null);
    }
    let (cond, uncond) = field.velocity_pair(x, t, label)?;
    combine_guidance(&cond, &uncond, weight)
}

pub fn combine_guidance(cond: &Tensor, uncond: &Tensor, weight: f32) -> Result<Tensor> {
    uncond.zip_map(cond, "guidance", |u, c| u + weight * (c - u))
}

fn integrate_with_weight<F: VelocityField + ?Sized>(
    field: &F,
    x0: &Tensor,
    t_start: f32,
    t_end: f32,
    steps: usize,
    weight: f32,
    label: DomainLabel,
) -> Result<Tensor> {
    if t_start == t_end {
        return Err(Error::Contract("integration interval is empty".into()));
    }
    if !(0.0..=1.0).contains(&t_start) || !(0.0..=1.0).contains(&t_end) {
        return Err(Error::Contract(format!("interval [{t_start}, {t_end}] leaves [0, 1]")));
    }
    let n = sub_interval_steps(steps, t_start, t_end);
    let h = (t_end - t_start) / n as f32;
    let mut x = x0.clone();
    for k in 0..n {
        let t = (t_start + k as f32 * h).clamp(0.0, 1.0);
        let v = guided_velocity(field, &x, t, label, weight)?;
        x.axpy(h, &v)?;
        if !x.is_finite() {
            return Err(Error::Integration { step: k, t });
        }
    }
    Ok(x)
}

/// Explicit Euler from `t_start` to `t_end` under the guided field for `label`.
pub fn euler_integrate<F: VelocityField + ?Sized>(
    field: &F,
    x0: &Tensor,
    t_start: f32,
    t_end: f32,
    cfg: &BridgeConfig,
    label: DomainLabel,
) -> Result<Tensor> {
    integrate_with_weight(field, x0, t_start, t_end, cfg.steps, cfg.guidance_weight, label)
}

/// Backward integration of `x1` from 1 down to `tau` under `source`.
pub fn encode<F: VelocityField + ?Sized>(
    field: &F,
    x1: &Tensor,
    source: DomainLabel,
    cfg: &BridgeConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    if !x1.is_finite() {
        return Err(Error::Numeric("encode input".into()));
    }
    integrate_with_weight(field, x1, 1.0, cfg.tau, cfg.steps, cfg.encode_weight(), source)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub z_tau: Tensor,
    pub x_hat: Tensor,
    pub source: DomainLabel,
    pub target: DomainLabel,
}

/// Encodes under `source`, then integrates forward from `tau` under `target`.
pub fn translate<F: VelocityField + ?Sized>(
    field: &F,
    x1: &Tensor,
    source: DomainLabel,
    target: DomainLabel,
    cfg: &BridgeConfig,
) -> Result<TranslationResult> {
    let z_tau = encode(field, x1, source, cfg)?;
    let x_hat = euler_integrate(field, &z_tau, cfg.tau, 1.0, cfg, target)?;
    Ok(TranslationResult {
        z_tau,
        x_hat,
        source,
        target,
    })
}

/// Integrates `n` standard-normal draws from 0 to 1 under `target`.
pub fn sample_prior<F: VelocityField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    target: DomainLabel,
    n: usize,
    cfg: &BridgeConfig,
    rng: &mut R,
) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Contract("sample_prior needs n >= 1".into()));
    }
    let x0 = Tensor::randn(&[n, field.data_dim()], rng);
    euler_integrate(field, &x0, 0.0, 1.0, cfg, target)
}

/// A field defined by a closure, for analytic tests and injected fields.
pub struct FnField<F> {
    pub dim: usize,
    pub domains: usize,
    pub f: F,
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&Tensor, f32, DomainLabel) -> Tensor,
{
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn num_domains(&self) -> usize {
        self.domains
    }

    fn velocity(&self, x: &Tensor, t: f32, label: DomainLabel) -> Result<Tensor> {
        Ok((self.f)(x, t, label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn constant_field(v: f32) -> FnField<impl Fn(&Tensor, f32, DomainLabel) -> Tensor> {
        FnField {
            dim: 1,
            domains: 2,
            f: move |x: &Tensor, _t, _l| Tensor::full(x.shape(), v),
        }
    }

    fn cfg(steps: usize, w: f32) -> BridgeConfig {
        BridgeConfig {
            tau: 0.45,
            steps,
            guidance_weight: w,
            encode_guidance: EncodeGuidance::Guided,
        }
    }

    #[test]
    fn guidance_formula() {
        let field = FnField {
            dim: 2,
            domains: 2,
            f: |x: &Tensor, _t, l: DomainLabel| {
                let v = if l.is_null() { [1.0, 0.0] } else { [2.0, 0.0] };
                Tensor::from_rows(&vec![v; x.rows()]).unwrap()
            },
        };
        let x = Tensor::zeros(&[1, 2]);
        let c = DomainLabel::Domain(0);
        assert_eq!(guided_velocity(&field, &x, 0.5, c, 8.5).unwrap().data(), &[9.5, 0.0]);
        assert_eq!(guided_velocity(&field, &x, 0.5, c, 1.0).unwrap().data(), &[2.0, 0.0]);
        assert_eq!(guided_velocity(&field, &x, 0.5, c, 0.0).unwrap().data(), &[1.0, 0.0]);
        assert!(matches!(
            guided_velocity(&field, &x, 0.5, DomainLabel::Null, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn weight_one_equals_conditional_on_a_real_model() {
        let mut model = VectorFieldModel::new(ModelSpec::new(3, vec![8], 2), 2).unwrap();
        for p in model.params_mut() {
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                *v += 0.03 * ((i % 5) as f32 - 2.0);
            }
        }
        let field = ModelField::new(&model, false);
        let x = Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0]).unwrap();
        let c = DomainLabel::Domain(1);
        let cond = field.velocity(&x, 0.7, c).unwrap();
        let uncond = field.velocity(&x, 0.7, DomainLabel::Null).unwrap();
        assert_eq!(guided_velocity(&field, &x, 0.7, c, 1.0).unwrap(), cond);
        assert_eq!(guided_velocity(&field, &x, 0.7, c, 0.0).unwrap(), uncond);
        let (pc, pu) = field.velocity_pair(&x, 0.7, c).unwrap();
        assert_eq!((pc, pu), (cond, uncond));
    }

    #[test]
    fn constant_field_exact_for_any_steps() {
        let f = constant_field(1.0);
        let x0 = Tensor::zeros(&[1, 1]);
        // dyadic step sizes carry no rounding at all
        for steps in [1, 2, 8, 64] {
            let x = euler_integrate(&f, &x0, 0.0, 1.0, &cfg(steps, 8.5), DomainLabel::Domain(0)).unwrap();
            assert_eq!(x.data(), &[1.0]);
        }
        for steps in [3, 7, 50] {
            let x = euler_integrate(&f, &x0, 0.0, 1.0, &cfg(steps, 8.5), DomainLabel::Domain(0)).unwrap();
            assert!((x.item() - 1.0).abs() <= 4.0 * f32::EPSILON * steps as f32);
        }
    }

    #[test]
    fn constant_field_round_trip_is_exact() {
        let f = constant_field(0.75);
        let x0 = Tensor::new(vec![1, 1], vec![0.25]).unwrap();
        let c = cfg(8, 2.0);
        let fwd = euler_integrate(&f, &x0, 0.0, 1.0, &c, DomainLabel::Domain(1)).unwrap();
        let back = euler_integrate(&f, &fwd, 1.0, 0.0, &c, DomainLabel::Domain(1)).unwrap();
        assert_eq!(back.data(), x0.data());
    }

    #[test]
    fn exponential_field_within_euler_bound() {
        let f = FnField {
            dim: 1,
            domains: 1,
            f: |x: &Tensor, _t, _l| x.clone(),
        };
        let x0 = Tensor::full(&[1, 1], 1.0);
        let x = euler_integrate(&f, &x0, 0.0, 1.0, &cfg(100, 1.0), DomainLabel::Domain(0)).unwrap();
        assert!((std::f32::consts::E - x.item()).abs() <= 0.02);
    }

    #[test]
    fn step_allocation_rule() {
        assert_eq!(sub_interval_steps(50, 1.0, 0.45), 28);
        assert_eq!(sub_interval_steps(50, 0.45, 1.0), 28);
        assert_eq!(sub_interval_steps(50, 1.0, 0.6), 20);
        assert_eq!(sub_interval_steps(50, 1.0, 0.3), 35);
        assert_eq!(sub_interval_steps(50, 0.0, 1.0), 50);
        assert_eq!(sub_interval_steps(10, 1.0, 0.99), 1);
    }

    #[test]
    fn divergence_reports_step() {
        let f = FnField {
            dim: 1,
            domains: 1,
            f: |x: &Tensor, _t, _l| x.map(|v| v * 1e30),
        };
        let x0 = Tensor::full(&[1, 1], 1e10);
        let err = euler_integrate(&f, &x0, 0.0, 1.0, &cfg(10, 1.0), DomainLabel::Domain(0)).unwrap_err();
        assert!(matches!(err, Error::Integration { step: 0, .. }), "{err:?}");
    }

    #[test]
    fn zero_model_is_identity() {
        let model = VectorFieldModel::new(ModelSpec::new(2, vec![8], 2), 0).unwrap();
        let field = ModelField::new(&model, true);
        let x = Tensor::new(vec![2, 2], vec![0.5, -1.5, 3.0, 0.25]).unwrap();
        for tau in [0.1, 0.45, 0.9] {
            let c = BridgeConfig { tau, ..BridgeConfig::default() };
            let r = translate(&field, &x, DomainLabel::Domain(0), DomainLabel::Domain(1), &c).unwrap();
            assert_eq!(r.z_tau, x);
            assert_eq!(r.x_hat, x);
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let mut rng2 = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let s = sample_prior(&field, DomainLabel::Domain(1), 5, &BridgeConfig::default(), &mut rng).unwrap();
        assert_eq!(s, Tensor::randn(&[5, 2], &mut rng2));
    }

    #[test]
    fn single_step_encode_unrolls() {
        // tau = 1 − 1/steps gives exactly one Euler step of size −1/steps at t = 1
        let f = FnField {
            dim: 1,
            domains: 2,
            f: |x: &Tensor, t, _l| x.map(|v| v * v + t),
        };
        let c = BridgeConfig {
            tau: 0.9,
            steps: 10,
            guidance_weight: 1.0,
            encode_guidance: EncodeGuidance::Conditional,
        };
        let x1 = Tensor::full(&[1, 1], 2.0);
        let z = encode(&f, &x1, DomainLabel::Domain(0), &c).unwrap();
        let h = 0.9f32 - 1.0;
        assert_eq!(z.item(), 2.0 + h * (4.0 + 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(BridgeConfig { tau: 1.0, ..BridgeConfig::default() }.validate().is_err());
        assert!(BridgeConfig { tau: 0.0, ..BridgeConfig::default() }.validate().is_err());
        assert!(BridgeConfig { steps: 0, ..BridgeConfig::default() }.validate().is_err());
        assert!(BridgeConfig { guidance_weight: -1.0, ..BridgeConfig::default() }.validate().is_err());
        assert!(BridgeConfig::default().validate().is_ok());
    }
}
