use chrono::{DateTime, Duration, Utc};
use rand::Rng;

use super::model::{ArrivalModel, SimulationModel};
use crate::calendar::WeeklySchedule;
use crate::error::{Error, Result};

fn clamp(calendar: &WeeklySchedule, at: DateTime<Utc>) -> Result<DateTime<Utc>> {
    calendar
        .next_open(at)
        .ok_or_else(|| Error::Model("arrival calendar has no open window".into()))
}

pub(crate) fn seconds(x: f64) -> Duration {
    Duration::milliseconds((x * 1000.0).round() as i64)
}

/// Case creation instants, non-decreasing, exactly `model.case_count` of them.
///
/// Inter-arrival draws accumulate from the first open instant at or after the
/// model start; a draw landing outside the arrival calendar moves to the next
/// open window.
pub fn sample_arrivals<R: Rng + ?Sized>(
    model: &SimulationModel,
    rng: &mut R,
) -> Result<Vec<DateTime<Utc>>> {
    let cal = &model.arrival_calendar;
    if cal.is_empty() {
        return Err(Error::Model("arrival calendar has no open window".into()));
    }
    let n = model.case_count;
    match &model.arrival {
        ArrivalModel::InterArrival(dist) => {
            let mut current = clamp(cal, model.start)?;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                current = clamp(cal, current + seconds(dist.sample(rng)))?;
                out.push(current);
            }
            Ok(out)
        }
        ArrivalModel::Batched {
            times_of_day,
            batch_size,
        } => {
            let mut times = times_of_day.clone();
            times.sort_unstable();
            let midnight = model.start.timestamp().div_euclid(86_400) * 86_400;
            let mut out = Vec::with_capacity(n);
            let mut idle_days = 0;
            let mut day = 0i64;
            while out.len() < n {
                let mut used = false;
                for &t in &times {
                    let at = DateTime::from_timestamp(midnight + day * 86_400 + t as i64 * 60, 0)
                        .expect("in range");
                    if at < model.start || !cal.contains(at) {
                        continue;
                    }
                    used = true;
                    for _ in 0..*batch_size {
                        if out.len() < n {
                            out.push(at);
                        }
                    }
                }
                idle_days = if used { 0 } else { idle_days + 1 };
                if idle_days > 7 {
                    return Err(Error::Model(
                        "no batch time of day falls inside the arrival calendar".into(),
                    ));
                }
                day += 1;
            }
            Ok(out)
        }
    }
}
