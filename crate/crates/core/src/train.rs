//! Conditional flow-matching training with label dropout.
//!
//! Paths are straight lines from a standard-normal draw at `t = 0` to a data
//! sample at `t = 1`; the regression target is the constant velocity
//! `x1 − x0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{DomainLabel, VectorFieldModel};
use crate::optim::{AdamConfig, AdamState};
use crate::samples::SampleSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub label_dropout: f32,
    pub ema_rate: f32,
    pub seed: u64,
    /// Steps between checkpoints; `None` means every 10% of the run.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 1000,
            warmup_steps: 100,
            label_dropout: 0.2,
            ema_rate: 0.999,
            seed: 0,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.label_dropout) {
            return Err(Error::Config(format!("label_dropout must be in [0, 1], got {}", self.label_dropout)));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate < 1.0) {
            return Err(Error::Config(format!("ema_rate must be in (0, 1), got {}", self.ema_rate)));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            warmup_steps: self.warmup_steps as u64,
            ..AdamConfig::default()
        }
    }

    /// Optimizer steps in one epoch over the pooled domains.
    pub fn steps_per_epoch(&self, total_samples: usize) -> usize {
        total_samples.div_ceil(self.batch_size).max(1)
    }
}

/// One supervised pair for the regression objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x_t: Vec<f32>,
    pub t: f32,
    pub u_target: Vec<f32>,
    /// Label the model sees; `Null` after dropout.
    pub label: DomainLabel,
    /// Domain the sample was drawn from; never `Null`.
    pub domain: usize,
}

/// Linear interpolant between an explicit `x0` and `x1` at time `t`.
pub fn interpolate(x0: &[f32], x1: &[f32], t: f32) -> (Vec<f32>, Vec<f32>) {
    let x_t = x0.iter().zip(x1).map(|(&a, &b)| (1.0 - t) * a + t * b).collect();
    let u = x0.iter().zip(x1).map(|(&a, &b)| b - a).collect();
    (x_t, u)
}

/// Draws `x0 ~ N(0, I)` and `t ~ U[0, 1]` and builds the path sample for `x1`.
pub fn sample_path<R: Rng + ?Sized>(x1: &[f32], domain: usize, rng: &mut R) -> PathSample {
    let x0: Vec<f32> = (0..x1.len()).map(|_| rng.sample(StandardNormal)).collect();
    let t: f32 = rng.random();
    let (x_t, u_target) = interpolate(&x0, x1, t);
    PathSample {
        x_t,
        t,
        u_target,
        label: DomainLabel::Domain(domain),
        domain,
    }
}

pub fn apply_label_dropout<R: Rng + ?Sized>(label: DomainLabel, p: f32, rng: &mut R) -> DomainLabel {
    // always consume one draw so the stream does not depend on p
    let u: f32 = rng.random();
    if u < p {
        DomainLabel::Null
    } else {
        label
    }
}

/// Draws training batches: domain uniformly, then a sample from it.
pub struct BatchSampler {
    rng: ChaCha8Rng,
    label_dropout: f32,
}

impl BatchSampler {
    pub fn new(seed: u64, label_dropout: f32) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            label_dropout,
        }
    }

    pub fn draw(&mut self, domains: &[SampleSet], batch_size: usize) -> Vec<PathSample> {
        (0..batch_size)
            .map(|_| {
                let d = self.rng.random_range(0..domains.len());
                let i = self.rng.random_range(0..domains[d].len());
                let mut ps = sample_path(domains[d].sample(i), d, &mut self.rng);
                ps.label = apply_label_dropout(ps.label, self.label_dropout, &mut self.rng);
                ps
            })
            .collect()
    }
}

pub fn batch_tensors(batch: &[PathSample]) -> Result<(Tensor, Vec<f32>, Vec<DomainLabel>, Tensor)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty training batch".into()));
    }
    let x = Tensor::from_rows(&batch.iter().map(|p| p.x_t.as_slice()).collect::<Vec<_>>())?;
    let u = Tensor::from_rows(&batch.iter().map(|p| p.u_target.as_slice()).collect::<Vec<_>>())?;
    let t = batch.iter().map(|p| p.t).collect();
    let labels = batch.iter().map(|p| p.label).collect();
    Ok((x, t, labels, u))
}

/// Flow-matching loss of the live parameters with gradients left on the tape.
pub fn loss_on_tape(model: &VectorFieldModel, batch: &[PathSample]) -> Result<(Tape, Vec<Var>, Var)> {
    let (x, t, labels, u) = batch_tensors(batch)?;
    let mut tape = Tape::new();
    let vars: Vec<Var> = model.params().iter().map(|p| tape.param(p.clone())).collect();
    let pred = model.forward_on_tape(&mut tape, &vars, &x, &t, &labels)?;
    let target = tape.constant(u);
    let loss = tape.mse_loss(pred, target)?;
    Ok((tape, vars, loss))
}

/// One optimizer step plus EMA update; returns the pre-update loss.
pub fn train_step(model: &mut VectorFieldModel, batch: &[PathSample], opt: &mut AdamState) -> Result<f32> {
    let (mut tape, vars, loss_var) = loss_on_tape(model, batch)?;
    let loss = tape.value(loss_var).item();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: opt.step_count() as usize,
        });
    }
    tape.backward(loss_var)?;
    let grads: Vec<Vec<f32>> = vars
        .iter()
        .map(|&v| tape.take_grad(v).expect("every parameter requires grad"))
        .collect();
    let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
    let names = model.param_names().to_vec();
    let mut param_refs: Vec<&mut [f32]> = model.params_mut().iter_mut().map(Tensor::data_mut).collect();
    opt.update(&names, &mut param_refs, &grad_refs)?;
    model.ema_update();
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub losses: Vec<f32>,
    pub total_steps: usize,
}

/// Trains `model` over all domains; `on_checkpoint(step, model)` runs at the
/// checkpoint cadence and once after the final step (at step 0 for an empty run).
pub fn train<F>(
    model: &mut VectorFieldModel,
    domains: &[SampleSet],
    cfg: &TrainConfig,
    mut on_checkpoint: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &VectorFieldModel) -> Result<()>,
{
    cfg.validate()?;
    if domains.len() < 2 {
        return Err(Error::Config(format!("training needs at least 2 domains, got {}", domains.len())));
    }
    if domains.len() != model.num_domains() {
        return Err(Error::Config(format!(
            "model has {} domains but {} datasets were given",
            model.num_domains(),
            domains.len()
        )));
    }
    for d in domains {
        if d.len() < cfg.batch_size {
            return Err(Error::Config(format!(
                "domain `{}` has {} samples, fewer than batch_size {}",
                d.domain,
                d.len(),
                cfg.batch_size
            )));
        }
        if d.dim() != model.data_dim() {
            return Err(Error::Config(format!(
                "domain `{}` has sample dim {}, model expects {}",
                d.domain,
                d.dim(),
                model.data_dim()
            )));
        }
    }

    let total_samples: usize = domains.iter().map(SampleSet::len).sum();
    let total_steps = cfg.epochs * cfg.steps_per_epoch(total_samples);
    let every = cfg.checkpoint_every.unwrap_or((total_steps / 10).max(1));

    model.ema_rate = cfg.ema_rate;
    let mut opt = AdamState::new(&model.param_lens(), cfg.adam());
    let mut sampler = BatchSampler::new(cfg.seed, cfg.label_dropout);
    let mut losses = Vec::with_capacity(total_steps);

    for step in 1..=total_steps {
        let batch = sampler.draw(domains, cfg.batch_size);
        let loss = train_step(model, &batch, &mut opt)?;
        losses.push(loss);
        if step % every == 0 && step != total_steps {
            on_checkpoint(step, model)?;
        }
    }
    on_checkpoint(total_steps, model)?;

    Ok(TrainOutcome { losses, total_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn interpolant_endpoints_and_midpoint() {
        let x0 = [0.5, -1.0];
        let x1 = [2.0, 4.0];
        assert_eq!(interpolate(&x0, &x1, 0.0).0, x0);
        assert_eq!(interpolate(&x0, &x1, 1.0).0, x1);
        let (xt, u) = interpolate(&[0.0, 0.0], &[2.0, 4.0], 0.5);
        assert_eq!(xt, [1.0, 2.0]);
        assert_eq!(u, [2.0, 4.0]);
    }

    #[test]
    fn sample_path_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x1 = [1.0, 2.0, 3.0];
        let p = sample_path(&x1, 1, &mut rng);
        assert!((0.0..1.0).contains(&p.t));
        for k in 0..3 {
            // x0 = x1 - u ; x_t = x0 + t·u
            let x0 = x1[k] - p.u_target[k];
            assert!((x0 + p.t * p.u_target[k] - p.x_t[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(apply_label_dropout(DomainLabel::Domain(1), 0.0, &mut rng), DomainLabel::Domain(1));
            assert_eq!(apply_label_dropout(DomainLabel::Domain(1), 1.0, &mut rng), DomainLabel::Null);
        }
    }

    #[test]
    fn dropout_rate_concentrates() {
        // binomial sd at n=1e5, p=0.2 is ~0.00126; ±0.01 is ~8 sd
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let nulls = (0..n)
            .filter(|_| apply_label_dropout(DomainLabel::Domain(0), 0.2, &mut rng).is_null())
            .count();
        let frac = nulls as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.01, "{frac}");
    }

    fn two_domains() -> Vec<SampleSet> {
        let a: Vec<[f32; 2]> = (0..40).map(|i| [i as f32 * 0.01, 1.0]).collect();
        let b: Vec<[f32; 2]> = (0..10).map(|i| [-1.0, i as f32 * 0.1]).collect();
        vec![
            SampleSet::from_samples(&a, &[2], "a").unwrap(),
            SampleSet::from_samples(&b, &[2], "b").unwrap(),
        ]
    }

    #[test]
    fn batches_balance_domains_and_keep_labels() {
        let domains = two_domains();
        let mut sampler = BatchSampler::new(5, 0.2);
        let mut counts = [0usize; 2];
        let mut nulls = 0;
        for _ in 0..100 {
            for p in sampler.draw(&domains, 128) {
                counts[p.domain] += 1;
                if p.label.is_null() {
                    nulls += 1;
                } else {
                    assert_eq!(p.label, DomainLabel::Domain(p.domain));
                }
            }
        }
        let total = (counts[0] + counts[1]) as f64;
        for c in counts {
            assert!((c as f64 / total - 0.5).abs() / 0.5 < 0.05, "{counts:?}");
        }
        assert!(nulls > 0);
        // datasets themselves are untouched
        assert_eq!(domains, two_domains());
    }

    #[test]
    fn zero_epochs_leave_model_untouched() {
        let spec = ModelSpec::new(2, vec![8], 2);
        let mut model = VectorFieldModel::new(spec, 0).unwrap();
        let before = model.clone();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut calls = vec![];
        let out = train(&mut model, &two_domains(), &cfg, |s, _| {
            calls.push(s);
            Ok(())
        })
        .unwrap();
        assert!(out.losses.is_empty());
        assert_eq!(calls, vec![0]);
        assert_eq!(model.params(), before.params());
        assert_eq!(model.ema_params(), before.ema_params());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let spec = ModelSpec::new(2, vec![8], 2);
        let mut model = VectorFieldModel::new(spec, 0).unwrap();
        let cfg = TrainConfig::default();
        let one = vec![two_domains().remove(0)];
        assert!(matches!(train(&mut model, &one, &cfg, |_, _| Ok(())), Err(Error::Config(_))));
        let bad = TrainConfig {
            label_dropout: 1.5,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut model, &two_domains(), &bad, |_, _| Ok(())), Err(Error::Config(_))));
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_and_no_update() {
        // zero head predicts 0; paths with x1 == x0 have u = 0
        let spec = ModelSpec::new(2, vec![8], 2);
        let mut model = VectorFieldModel::new(spec, 0).unwrap();
        let before = model.clone();
        let batch: Vec<PathSample> = (0..4)
            .map(|i| {
                let x = [i as f32, -(i as f32)];
                let (x_t, u_target) = interpolate(&x, &x, 0.3);
                PathSample {
                    x_t,
                    t: 0.3,
                    u_target,
                    label: DomainLabel::Domain(i % 2),
                    domain: i % 2,
                }
            })
            .collect();
        let (mut tape, vars, loss) = loss_on_tape(&model, &batch).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
        tape.backward(loss).unwrap();
        for v in vars {
            assert!(tape.grad(v).unwrap().iter().all(|&g| g == 0.0));
        }
        let mut opt = AdamState::new(&model.param_lens(), AdamConfig::default());
        assert_eq!(train_step(&mut model, &batch, &mut opt).unwrap(), 0.0);
        assert_eq!(model.params(), before.params());
    }

    #[test]
    fn single_sample_loss_matches_forward_mse() {
        let spec = ModelSpec::new(2, vec![8], 2);
        let mut model = VectorFieldModel::new(spec, 4).unwrap();
        for p in model.params_mut() {
            for (k, v) in p.data_mut().iter_mut().enumerate() {
                *v += 0.01 * (k % 7) as f32;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sample = sample_path(&[0.7, -0.2], 1, &mut rng);
        let x = Tensor::new(vec![1, 2], sample.x_t.clone()).unwrap();
        let v = model.forward(&x, &[sample.t], &[sample.label], false).unwrap();
        let mse: f64 = v
            .data()
            .iter()
            .zip(&sample.u_target)
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / 2.0;
        let mut opt = AdamState::new(&model.param_lens(), AdamConfig::default());
        let loss = train_step(&mut model, &[sample], &mut opt).unwrap();
        assert!((loss as f64 - mse).abs() < 1e-6);
    }
}
