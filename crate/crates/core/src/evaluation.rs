//! Repeated-run evaluation and the discovery parameter sweep.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discovery::{discover_model, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::metrics::MetricReport;
use crate::sim::{simulate, simulate_with_arrivals, SimulationModel};

/// Mean after dropping one lowest and one highest value; the plain mean for
/// fewer than three values.
pub fn trimmed_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let kept = if v.len() >= 3 { &v[1..v.len() - 1] } else { &v[..] };
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Summary of several seeded runs against one real log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedReport {
    pub red: f64,
    pub ctd: f64,
    pub mmr: f64,
    pub repetitions: usize,
    pub runs: Vec<MetricReport>,
}

impl RepeatedReport {
    pub fn from_runs(runs: Vec<MetricReport>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Argument("no runs to summarize".into()));
        }
        let pick = |f: fn(&MetricReport) -> f64| trimmed_mean(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(RepeatedReport {
            red: pick(|r| r.red),
            ctd: pick(|r| r.ctd),
            mmr: pick(|r| r.mmr),
            repetitions: runs.len(),
            runs,
        })
    }
}

/// Simulates `model` `repetitions` times with seeds `seed, seed + 1, ...`
/// and compares each run with `real`. With `arrivals`, every run replays
/// those case arrivals instead of sampling its own.
pub fn evaluate_model(
    real: &EventLog,
    model: &SimulationModel,
    arrivals: Option<&[DateTime<Utc>]>,
    repetitions: usize,
    seed: u64,
) -> Result<RepeatedReport> {
    if repetitions == 0 {
        return Err(Error::Argument("repetitions must be positive".into()));
    }
    let runs = (0..repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let sim = match arrivals {
                Some(a) => simulate_with_arrivals(model, a, s)?,
                None => simulate(model, s)?,
            };
            MetricReport::compute(real, &sim)
        })
        .collect::<Result<Vec<_>>>()?;
    RepeatedReport::from_runs(runs)
}

/// Values tried for each discovery parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub granule_minutes: Vec<u32>,
    pub beta: Vec<f64>,
    pub kappa: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            granule_minutes: vec![15, 30, 60, 120],
            beta: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            kappa: vec![5, 20, 50],
        }
    }
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(u32, f64, usize)> {
        let mut out = Vec::new();
        for &g in &self.granule_minutes {
            for &b in &self.beta {
                for &k in &self.kappa {
                    out.push((g, b, k));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub granule_minutes: u32,
    pub beta: f64,
    pub kappa: usize,
    /// Absent when discovery or simulation failed for this cell.
    pub report: Option<RepeatedReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: SweepCell,
    pub cells: Vec<SweepCell>,
}

/// Tries every grid cell: discovers a model on the first `train_fraction`
/// of the traces, replays the remaining traces' arrivals and keeps the cell
/// with the lowest RED.
pub fn sweep(
    log: &EventLog,
    grid: &SweepGrid,
    base: &DiscoveryConfig,
    template: Option<&SimulationModel>,
    train_fraction: f64,
    repetitions: usize,
    seed: u64,
) -> Result<SweepResult> {
    let (train, test) = log.temporal_split(train_fraction)?;
    if test.is_empty() {
        return Err(Error::Argument("held-out part of the log is empty".into()));
    }
    let arrivals = test.arrivals();
    let cells: Vec<SweepCell> = grid
        .cells()
        .into_par_iter()
        .map(|(granule_minutes, beta, kappa)| {
            let cfg = DiscoveryConfig {
                granule_minutes,
                beta,
                kappa,
                ..base.clone()
            };
            let outcome = discover_model(&train, &cfg, template)
                .and_then(|m| evaluate_model(&test, &m, Some(&arrivals), repetitions, seed));
            let (report, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepCell {
                granule_minutes,
                beta,
                kappa,
                report,
                error,
            }
        })
        .collect();
    let best = cells
        .iter()
        .filter_map(|c| c.report.as_ref().map(|r| (r.red, c)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.clone())
        .ok_or_else(|| {
            let first = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
            Error::Argument(format!("every sweep cell failed; first error: {first}"))
        })?;
    Ok(SweepResult { best, cells })
}
