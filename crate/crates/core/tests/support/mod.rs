//! Shared oracles for the integration tests: an f64 scalar-loop forward pass
//! and loss, central finite differences over it, and seeded fixtures.
#![allow(dead_code)]

use flowbridge::model::TimeEmbedding;
use flowbridge::train::PathSample;
use flowbridge::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Time features computed independently of the library, in f64.
pub fn time_features(dim: usize, t: f64) -> Vec<f64> {
    let half = dim / 2;
    let ts = t * 1000.0;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (ts * freq).sin();
        out[half + i] = (ts * freq).cos();
    }
    out
}

/// The library's f32 time features, so gradient checks see identical inputs.
pub fn time_features_f32(dim: usize, t: f32) -> Vec<f64> {
    let mut out = vec![0.0f32; dim];
    TimeEmbedding::new(dim, flowbridge::model::TIME_BASE).unwrap().embed(t, &mut out);
    out.into_iter().map(f64::from).collect()
}

pub fn params_f64(params: &[Tensor]) -> Vec<Vec<f64>> {
    params.iter().map(|p| p.data().iter().map(|&v| v as f64).collect()).collect()
}

/// One row of `v(x, t, c)` by explicit loops over the stored parameters.
pub fn forward_row(spec: &ModelSpec, p: &[Vec<f64>], x: &[f64], temb: &[f64], label: DomainLabel) -> Vec<f64> {
    let row = match label {
        DomainLabel::Domain(i) => i,
        DomainLabel::Null => spec.num_domains,
    };
    let mut h: Vec<f64> = x.to_vec();
    h.extend_from_slice(temb);
    h.extend_from_slice(&p[0][row * spec.domain_dim..(row + 1) * spec.domain_dim]);
    let layers = spec.hidden.len();
    for l in 0..=layers {
        let (w, b) = (&p[1 + 2 * l], &p[2 + 2 * l]);
        let out_dim = b.len();
        let mut z = b.clone();
        for (i, &hi) in h.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += hi * w[i * out_dim + j];
            }
        }
        h = if l < layers { z.into_iter().map(silu).collect() } else { z };
    }
    h
}

pub fn loss(spec: &ModelSpec, p: &[Vec<f64>], batch: &[PathSample]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for s in batch {
        let x: Vec<f64> = s.x_t.iter().map(|&v| v as f64).collect();
        let v = forward_row(spec, p, &x, &time_features_f32(spec.time_dim, s.t), s.label);
        for (a, &u) in v.iter().zip(&s.u_target) {
            total += (a - u as f64).powi(2);
            count += 1;
        }
    }
    total / count as f64
}

/// Central differences of [`loss`] in every parameter.
pub fn fd_gradient(spec: &ModelSpec, p: &[Vec<f64>], batch: &[PathSample], h: f64) -> Vec<Vec<f64>> {
    let mut q = p.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let mut g = vec![0.0; p[k].len()];
        for i in 0..p[k].len() {
            let orig = q[k][i];
            q[k][i] = orig + h;
            let up = loss(spec, &q, batch);
            q[k][i] = orig - h;
            let down = loss(spec, &q, batch);
            q[k][i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// A small network with every parameter drawn at random, head included.
pub fn random_model(rng: &mut ChaCha8Rng) -> VectorFieldModel {
    let data_dim = rng.random_range(1..=4);
    let layers = rng.random_range(1..=2);
    let hidden = (0..layers).map(|_| rng.random_range(2..=8)).collect();
    let mut spec = ModelSpec::new(data_dim, hidden, rng.random_range(1..=3));
    spec.time_dim = 8;
    spec.domain_dim = 4;
    let mut m = VectorFieldModel::new(spec, rng.random()).unwrap();
    for p in m.params_mut() {
        for v in p.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    m
}

pub fn random_batch(m: &VectorFieldModel, n: usize, rng: &mut ChaCha8Rng) -> Vec<PathSample> {
    (0..n)
        .map(|_| {
            let d = m.data_dim();
            let label = if rng.random_bool(0.25) {
                DomainLabel::Null
            } else {
                DomainLabel::Domain(rng.random_range(0..m.num_domains()))
            };
            PathSample {
                x_t: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                t: rng.random_range(0.0..1.0),
                u_target: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                label,
                domain: 0,
            }
        })
        .collect()
}

/// Largest entry-wise relative error of `analytic` against `oracle`.
/// Entries far below the tensor's own scale are compared against that scale.
pub fn max_relative_error(analytic: &[f32], oracle: &[f64]) -> f64 {
    let scale = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    analytic
        .iter()
        .zip(oracle)
        .map(|(&a, &o)| (a as f64 - o).abs() / o.abs().max(1e-3 * scale).max(1e-12))
        .fold(0.0, f64::max)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
