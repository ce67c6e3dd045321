//! Distances between a real and a simulated event log.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::scalar::{from_u64, Scalar};

fn sorted<T: Scalar>(xs: &[T]) -> Result<Vec<T>> {
    let mut v = xs.to_vec();
    let mut incomparable = false;
    v.sort_by(|a, b| {
        a.partial_cmp(b).unwrap_or_else(|| {
            incomparable = true;
            Ordering::Equal
        })
    });
    if incomparable || v.iter().any(|x| x.partial_cmp(x).is_none()) {
        return Err(Error::Argument("samples must be comparable (no NaN)".into()));
    }
    Ok(v)
}

/// Exact 1-Wasserstein distance between two empirical distributions,
/// computed by integrating the gap between their quantile functions.
///
/// Works over any ordered field, so rational inputs give exact results.
pub fn wasserstein_1d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("wasserstein distance of an empty sample".into()));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (m, n) = (a.len() as u64, b.len() as u64);
    // Positions on [0, 1] scaled by m * n.
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u64);
    let mut total = T::zero();
    while i < a.len() && j < b.len() {
        let next_a = (i as u64 + 1) * n;
        let next_b = (j as u64 + 1) * m;
        let next = next_a.min(next_b);
        let gap = if a[i] > b[j] { a[i] - b[j] } else { b[j] - a[i] };
        total = total + gap * from_u64::<T>(next - pos);
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / from_u64::<T>(m * n))
}

const SECONDS_PER_HOUR: f64 = 3600.0;

fn hours(d: chrono::Duration) -> f64 {
    d.num_milliseconds() as f64 / 1000.0 / SECONDS_PER_HOUR
}

/// Per-case cycle times in hours.
pub fn cycle_times_hours(log: &EventLog) -> Vec<f64> {
    log.traces().iter().map(|t| hours(t.cycle_time())).collect()
}

/// Cycle Time Distribution distance, in hours.
pub fn ctd_distance(real: &EventLog, sim: &EventLog) -> Result<f64> {
    wasserstein_1d(&cycle_times_hours(real), &cycle_times_hours(sim))
}

/// Start and end instants relative to their case arrival, floored to whole
/// hours.
pub fn relative_event_hours(log: &EventLog) -> Vec<f64> {
    log.traces()
        .iter()
        .flat_map(|t| {
            let origin = t.arrival_at();
            t.events().iter().flat_map(move |e| {
                [e.started_at, e.completed_at]
                    .into_iter()
                    .map(move |at| hours(at - origin).floor())
            })
        })
        .collect()
}

/// Relative Event Distribution distance, in hours.
pub fn red_distance(real: &EventLog, sim: &EventLog) -> Result<f64> {
    wasserstein_1d(&relative_event_hours(real), &relative_event_hours(sim))
}

/// Fraction of real resources that never appear in the simulated log.
pub fn mmr(real: &EventLog, sim: &EventLog) -> Result<f64> {
    let real_set = real.resources();
    if real_set.is_empty() {
        return Err(Error::Argument("real log has no resources".into()));
    }
    let shared = real_set.intersection(sim.resources()).count();
    Ok(1.0 - shared as f64 / real_set.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub red: f64,
    pub ctd: f64,
    pub mmr: f64,
    pub real_cases: usize,
    pub sim_cases: usize,
    pub real_events: usize,
    pub sim_events: usize,
}

impl MetricReport {
    pub fn compute(real: &EventLog, sim: &EventLog) -> Result<Self> {
        Ok(MetricReport {
            red: red_distance(real, sim)?,
            ctd: ctd_distance(real, sim)?,
            mmr: mmr(real, sim)?,
            real_cases: real.traces().len(),
            sim_cases: sim.traces().len(),
            real_events: real.event_count(),
            sim_events: sim.event_count(),
        })
    }
}
