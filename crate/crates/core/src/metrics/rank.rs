//! Realism/structure rank aggregation across methods.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Better {
    Lower,
    Higher,
}

pub const REALISM_METRICS: [(&str, Better); 3] =
    [("rfid", Better::Lower), ("coverage", Better::Higher), ("mmd", Better::Lower)];

pub const STRUCTURE_METRICS: [(&str, Better); 2] = [("ssim", Better::Higher), ("source_l2", Better::Lower)];

/// Raw metric values for one method, keyed by metric name.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
}

impl MethodScores {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, metric: &str, value: f64) -> Self {
        self.metrics.insert(metric.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub rfid: f64,
    pub mmd: f64,
    pub coverage: f64,
    pub ssim: f64,
    pub source_l2: f64,
    pub realism_rank: f64,
    pub structure_rank: f64,
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub methods: BTreeMap<String, MethodSummary>,
}

/// 1-based ranks where tied values share the mean of the ranks they span.
pub fn mean_ranks(values: &[f64], better: Better) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let ahead = values
                .iter()
                .filter(|&&o| match better {
                    Better::Lower => o < v,
                    Better::Higher => o > v,
                })
                .count();
            let tied = values.iter().filter(|&&o| o == v).count();
            1.0 + ahead as f64 + (tied as f64 - 1.0) / 2.0
        })
        .collect()
}

/// Spearman rank correlation (Pearson correlation of mean ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract(format!("spearman needs two equal-length series of >= 2, got {} and {}", x.len(), y.len())));
    }
    let rx = mean_ranks(x, Better::Lower);
    let ry = mean_ranks(y, Better::Lower);
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

pub fn rank_methods(scores: &[MethodScores]) -> Result<MetricsReport> {
    rank_methods_with(scores, &REALISM_METRICS, &STRUCTURE_METRICS)
}

/// Rank aggregation over caller-chosen metric groups. Metrics outside both
/// groups are reported as NaN in the summary.
pub fn rank_methods_with(
    scores: &[MethodScores],
    realism: &[(&str, Better)],
    structure: &[(&str, Better)],
) -> Result<MetricsReport> {
    if realism.is_empty() || structure.is_empty() {
        return Err(Error::Contract("each rank group needs at least one metric".into()));
    }
    if scores.is_empty() {
        return Err(Error::Contract("rank_methods needs at least one method".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in scores {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Contract(format!("duplicate method `{}`", s.name)));
        }
        for (metric, _) in realism.iter().chain(structure) {
            match s.metrics.get(*metric) {
                None => {
                    return Err(Error::Contract(format!("method `{}` is missing metric `{metric}`", s.name)));
                }
                Some(v) if v.is_nan() => {
                    return Err(Error::Contract(format!("method `{}` has NaN for `{metric}`", s.name)));
                }
                Some(_) => {}
            }
        }
    }

    let group_rank = |group: &[(&str, Better)]| -> Vec<f64> {
        let mut acc = vec![0.0; scores.len()];
        for &(metric, better) in group {
            let values: Vec<f64> = scores.iter().map(|s| s.metrics[metric]).collect();
            for (a, r) in acc.iter_mut().zip(mean_ranks(&values, better)) {
                *a += r;
            }
        }
        acc.iter().map(|a| a / group.len() as f64).collect()
    };
    let realism = group_rank(realism);
    let structure = group_rank(structure);

    let methods = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = |k: &str| s.metrics.get(k).copied().unwrap_or(f64::NAN);
            (
                s.name.clone(),
                MethodSummary {
                    rfid: m("rfid"),
                    mmd: m("mmd"),
                    coverage: m("coverage"),
                    ssim: m("ssim"),
                    source_l2: m("source_l2"),
                    realism_rank: realism[i],
                    structure_rank: structure[i],
                    average_rank: (realism[i] + structure[i]) / 2.0,
                },
            )
        })
        .collect();
    Ok(MetricsReport { methods })
}

impl MetricsReport {
    /// `method.metric = value` lines, sorted by method.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (name, m) in &self.methods {
            for (key, v) in m.fields() {
                let _ = writeln!(out, "{name}.{key} = {v}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,rfid,coverage,mmd,realism_rank,ssim,source_l2,structure_rank,average_rank\n");
        for (name, m) in &self.methods {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{}",
                m.rfid, m.coverage, m.mmd, m.realism_rank, m.ssim, m.source_l2, m.structure_rank, m.average_rank
            );
        }
        out
    }

    /// Fixed-width table in the realism | structure | overall layout.
    pub fn to_table(&self) -> String {
        let width = self.methods.keys().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$} | {:>9} {:>6} {:>9} {:>5} | {:>6} {:>9} {:>5} | {:>5}",
            "method", "rfid", "cov", "mmd", "rank", "ssim", "src_l2", "rank", "avg"
        );
        for (name, m) in &self.methods {
            let _ = writeln!(
                out,
                "{:<width$} | {:>9.4} {:>6.3} {:>9.5} {:>5.2} | {:>6.3} {:>9.4} {:>5.2} | {:>5.2}",
                name, m.rfid, m.coverage, m.mmd, m.realism_rank, m.ssim, m.source_l2, m.structure_rank, m.average_rank
            );
        }
        out
    }
}

impl MethodSummary {
    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("rfid", self.rfid),
            ("coverage", self.coverage),
            ("mmd", self.mmd),
            ("realism_rank", self.realism_rank),
            ("ssim", self.ssim),
            ("source_l2", self.source_l2),
            ("structure_rank", self.structure_rank),
            ("average_rank", self.average_rank),
        ]
    }
}
