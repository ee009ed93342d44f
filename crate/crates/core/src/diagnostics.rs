//! How far apart two domains remain after encoding to an intermediate time.
//!
//! Each set is encoded under its own label and the two latent sets are
//! compared with the unbiased RBF MMD; bandwidths come from the median
//! heuristic on each level's pooled latents.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::bridge::{encode, BridgeConfig, VelocityField};
use crate::error::{Error, Result};
use crate::metrics::{default_bandwidths, mmd_bootstrap_se, mmd_rbf, MmdEstimator};
use crate::model::DomainLabel;
use crate::samples::SampleSet;

pub const MIN_SAMPLES: usize = 50;
pub const DEFAULT_TAUS: [f32; 3] = [1.0, 0.6, 0.3];

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapCurve {
    pub taus: Vec<f32>,
    pub mmd_values: Vec<f64>,
    /// Bootstrap standard errors, present when replicates were requested.
    pub std_errors: Option<Vec<f64>>,
    pub samples_per_domain: [usize; 2],
}

pub fn check_taus(taus: &[f32]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Config("tau list is empty".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Config(format!("tau {t} outside (0, 1]")));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("taus must be strictly descending, got {taus:?}")));
    }
    Ok(())
}

/// Encodes `set` to `tau` under `label`; `tau = 1` returns the samples unchanged.
pub fn encode_at<F: VelocityField + ?Sized>(
    field: &F,
    set: &SampleSet,
    label: DomainLabel,
    tau: f32,
    cfg: &BridgeConfig,
) -> Result<SampleSet> {
    if tau == 1.0 {
        return Ok(set.clone());
    }
    let cfg = BridgeConfig { tau, ..*cfg };
    let z = encode(field, &set.matrix(), label, &cfg)?;
    set.with_data(z)
}

#[allow(clippy::too_many_arguments)]
pub fn overlap_curve<F: VelocityField + ?Sized>(
    field: &F,
    a: &SampleSet,
    label_a: DomainLabel,
    b: &SampleSet,
    label_b: DomainLabel,
    taus: &[f32],
    cfg: &BridgeConfig,
    bootstrap_reps: usize,
    seed: u64,
) -> Result<OverlapCurve> {
    check_taus(taus)?;
    a.same_shape(b)?;
    if a.len() < MIN_SAMPLES || b.len() < MIN_SAMPLES {
        return Err(Error::Contract(format!(
            "overlap curve needs at least {MIN_SAMPLES} samples per domain, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut mmd_values = Vec::with_capacity(taus.len());
    let mut ses = Vec::with_capacity(taus.len());
    for &tau in taus {
        let za = encode_at(field, a, label_a, tau, cfg)?;
        let zb = encode_at(field, b, label_b, tau, cfg)?;
        let bw = default_bandwidths(&za, &zb)?;
        mmd_values.push(mmd_rbf(&za, &zb, &bw, MmdEstimator::Unbiased)?);
        if bootstrap_reps > 0 {
            ses.push(mmd_bootstrap_se(&za, &zb, &bw, MmdEstimator::Unbiased, bootstrap_reps, seed)?);
        }
    }
    Ok(OverlapCurve {
        taus: taus.to_vec(),
        mmd_values,
        std_errors: (bootstrap_reps > 0).then_some(ses),
        samples_per_domain: [a.len(), b.len()],
    })
}

impl OverlapCurve {
    pub fn is_non_increasing(&self) -> bool {
        self.mmd_values.windows(2).all(|w| w[1] <= w[0])
    }

    /// Non-increasing except for at most one rise no larger than the
    /// bootstrap standard error at either end of it.
    pub fn is_non_increasing_within_se(&self) -> bool {
        let Some(se) = &self.std_errors else {
            return self.is_non_increasing();
        };
        let mut inversions = 0;
        for i in 1..self.mmd_values.len() {
            let rise = self.mmd_values[i] - self.mmd_values[i - 1];
            if rise > 0.0 {
                inversions += 1;
                if inversions > 1 || rise > se[i].max(se[i - 1]) {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,mmd,se\n");
        for (i, (t, m)) in self.taus.iter().zip(&self.mmd_values).enumerate() {
            let se = self.std_errors.as_ref().map_or(String::new(), |s| s[i].to_string());
            let _ = writeln!(out, "{t},{m},{se}");
        }
        out
    }
}

/// First two principal-component scores of the pooled rows, for plotting only.
/// Each component's sign is fixed so its largest-magnitude score is positive.
pub fn pca_2d(sets: &[&SampleSet]) -> Result<Vec<Vec<[f64; 2]>>> {
    let first = sets.first().ok_or_else(|| Error::Contract("pca needs at least one set".into()))?;
    for s in sets {
        first.same_shape(s)?;
    }
    let n: usize = sets.iter().map(|s| s.len()).sum();
    let d = first.dim();
    if n < 3 || d < 2 {
        return Err(Error::Contract(format!("pca needs at least 3 rows of dim >= 2, got {n} of dim {d}")));
    }
    let mut x = DMatrix::<f64>::zeros(n, d);
    for (i, row) in sets.iter().flat_map(|s| s.iter()).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v as f64;
        }
    }
    for j in 0..d {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }

    let mut scores = DMatrix::<f64>::zeros(n, 2);
    if d <= n {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        for (c, k) in top_two(eig.eigenvalues.as_slice()).into_iter().enumerate() {
            scores.set_column(c, &(&x * eig.eigenvectors.column(k)));
        }
    } else {
        // the Gram matrix is smaller and shares the non-zero spectrum
        let eig = SymmetricEigen::new(&x * x.transpose());
        for (c, k) in top_two(eig.eigenvalues.as_slice()).into_iter().enumerate() {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            scores.set_column(c, &(eig.eigenvectors.column(k) * s));
        }
    }
    for c in 0..2 {
        let col = scores.column(c);
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            scores.column_mut(c).neg_mut();
        }
    }

    let mut out = Vec::with_capacity(sets.len());
    let mut row = 0;
    for s in sets {
        out.push((row..row + s.len()).map(|i| [scores[(i, 0)], scores[(i, 1)]]).collect());
        row += s.len();
    }
    Ok(out)
}

fn top_two(vals: &[f64]) -> [usize; 2] {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    [idx[0], idx[1]]
}
