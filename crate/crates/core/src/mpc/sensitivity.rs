use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::closed_loop::{derive_seed, nominal_world, run_closed_loop};
use super::config::{NoiseSpec, RunConfig};
use super::log::SummaryRow;
use super::MpcError;
use crate::uncertainty::empirical_quantile;

/// Which noise family a sensitivity study applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    ConstantOffset,
    OccasionalEvents,
}

/// Distribution of a metric over replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator).
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            q1: empirical_quantile(values, 0.25),
            median: empirical_quantile(values, 0.5),
            q3: empirical_quantile(values, 0.75),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub replicas: usize,
    pub cost_o: Spread,
    pub cost_s: Spread,
    pub mean_violations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub kind: NoiseKind,
    pub meta_seed: u64,
    pub rows: Vec<SummaryRow>,
    pub summaries: Vec<AlphaSummary>,
}

impl SensitivityReport {
    pub fn summary(&self, alpha: f64) -> Option<&AlphaSummary> {
        self.summaries.iter().find(|s| s.alpha == alpha)
    }
}

/// Closed-loop replicas that differ only in the added noise. Every α sees the
/// same noise realization in a given replica, and the base scenario and
/// forecast seeds are those of the configuration.
pub fn run_sensitivity(
    cfg: &RunConfig,
    kind: NoiseKind,
    replicas: usize,
    meta_seed: u64,
) -> Result<SensitivityReport, MpcError> {
    cfg.validate()?;
    let s = &cfg.simulation.sensitivity;
    let noise: NoiseSpec = match kind {
        NoiseKind::ConstantOffset => s.constant,
        NoiseKind::OccasionalEvents => s.occasional,
    };
    let base = nominal_world(cfg)?;
    let alphas = s.alphas.clone();
    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..replicas).map(move |r| (a, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(a, r)| {
            let world = base.with_noise(&noise, derive_seed(meta_seed, r as u64))?;
            let mut c = cfg.clone();
            c.controller = cfg.controller.with_alpha(alphas[a]);
            let log = run_closed_loop(&c, &world)?;
            let m = log.metrics(&cfg.simulation.delta_prev);
            Ok(SummaryRow {
                alpha: alphas[a],
                replica: r,
                avg_cost_o: m.avg_cost_o,
                avg_cost_s: m.avg_cost_s,
                violations: m.violations,
            })
        })
        .collect::<Result<Vec<_>, MpcError>>()?;
    let summaries = alphas
        .iter()
        .filter_map(|&alpha| {
            let sel: Vec<&SummaryRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
            let o: Vec<f64> = sel.iter().map(|r| r.avg_cost_o).collect();
            let st: Vec<f64> = sel.iter().map(|r| r.avg_cost_s).collect();
            Some(AlphaSummary {
                alpha,
                replicas: sel.len(),
                cost_o: Spread::of(&o)?,
                cost_s: Spread::of(&st)?,
                mean_violations: sel.iter().map(|r| r.violations as f64).sum::<f64>()
                    / sel.len() as f64,
            })
        })
        .collect();
    Ok(SensitivityReport {
        kind,
        meta_seed,
        rows,
        summaries,
    })
}

/// One boxplot-ready row per α and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub alpha: f64,
    pub metric: String,
    pub replicas: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl SensitivityReport {
    pub fn aggregate_rows(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for s in &self.summaries {
            for (metric, sp) in [("avg_cost_o", &s.cost_o), ("avg_cost_s", &s.cost_s)] {
                out.push(AggregateRow {
                    alpha: s.alpha,
                    metric: metric.into(),
                    replicas: s.replicas,
                    mean: sp.mean,
                    sd: sp.sd,
                    min: sp.min,
                    q1: sp.q1,
                    median: sp.median,
                    q3: sp.q3,
                    max: sp.max,
                });
            }
        }
        out
    }
}

pub fn write_aggregate_csv<W: std::io::Write>(rows: &[AggregateRow], out: W) -> Result<(), MpcError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateRow>, MpcError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<Vec<AggregateRow>, _>>()?)
}
