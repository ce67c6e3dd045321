//! Time granularity, recurring slots and probabilistic resource calendars.
//!
//! A day is cut into `n` equal granules starting at a configurable offset
//! from midnight. Granules are contextualised by recurring slots (by default
//! the seven weekdays), and each `(slot, granule)` cell carries an absolute
//! and a relative availability probability. [`AvailabilitySampler`] turns
//! those probabilities into concrete, memoized availability decisions during
//! a simulation run.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;

/// Partition of a day into equal granules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeGranularity {
    start_offset_minutes: u32,
    granule_minutes: u32,
}

/// A granule pinned to a concrete day: `day` counts days since the Unix
/// epoch, measured from the granularity's start-of-day offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatedGranule {
    pub day: i64,
    pub index: u32,
}

impl TimeGranularity {
    pub fn new(granule_minutes: u32) -> Result<Self> {
        Self::with_offset(0, granule_minutes)
    }

    pub fn with_offset(start_offset_minutes: u32, granule_minutes: u32) -> Result<Self> {
        if granule_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(granule_minutes) {
            return Err(Error::Argument(format!(
                "granule size {granule_minutes} min does not divide 1440"
            )));
        }
        if start_offset_minutes >= MINUTES_PER_DAY {
            return Err(Error::Argument(format!(
                "start-of-day offset {start_offset_minutes} min is not within a day"
            )));
        }
        Ok(TimeGranularity {
            start_offset_minutes,
            granule_minutes,
        })
    }

    pub fn granule_minutes(&self) -> u32 {
        self.granule_minutes
    }

    pub fn start_offset_minutes(&self) -> u32 {
        self.start_offset_minutes
    }

    pub fn granule_count(&self) -> usize {
        (MINUTES_PER_DAY / self.granule_minutes) as usize
    }

    pub fn granule_duration(&self) -> Duration {
        Duration::minutes(self.granule_minutes as i64)
    }

    pub fn dated_granule(&self, at: DateTime<Utc>) -> DatedGranule {
        let shifted = at.timestamp() - self.start_offset_minutes as i64 * 60;
        let day = shifted.div_euclid(86_400);
        let secs = shifted.rem_euclid(86_400);
        DatedGranule {
            day,
            index: (secs / (self.granule_minutes as i64 * 60)) as u32,
        }
    }

    pub fn start_of(&self, g: DatedGranule) -> DateTime<Utc> {
        let secs = g.day * 86_400
            + self.start_offset_minutes as i64 * 60
            + g.index as i64 * self.granule_minutes as i64 * 60;
        Utc.timestamp_opt(secs, 0).single().expect("in range")
    }

    pub fn end_of(&self, g: DatedGranule) -> DateTime<Utc> {
        self.start_of(g) + self.granule_duration()
    }

    pub fn next(&self, g: DatedGranule) -> DatedGranule {
        if (g.index as usize) + 1 < self.granule_count() {
            DatedGranule {
                day: g.day,
                index: g.index + 1,
            }
        } else {
            DatedGranule {
                day: g.day + 1,
                index: 0,
            }
        }
    }

    /// Calendar date a granule belongs to.
    pub fn date_of(&self, g: DatedGranule) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(719_163 + g.day as i32).expect("in range")
    }

    /// Granules overlapping the half-open interval `[from, to)`; empty when
    /// `from >= to`.
    pub fn granules_between(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Vec<DatedGranule> {
        let mut out = Vec::new();
        if from >= to {
            return out;
        }
        let mut g = self.dated_granule(from);
        while self.start_of(g) < to {
            out.push(g);
            g = self.next(g);
        }
        out
    }
}

/// One user-defined recurring slot. Empty lists mean "any".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPattern {
    pub label: String,
    #[serde(default)]
    pub months: Vec<u32>,
    #[serde(default)]
    pub weekdays: Vec<Weekday>,
    #[serde(default)]
    pub days_of_month: Vec<u32>,
}

impl SlotPattern {
    fn matches(&self, date: NaiveDate) -> bool {
        (self.months.is_empty() || self.months.contains(&date.month()))
            && (self.weekdays.is_empty() || self.weekdays.contains(&date.weekday()))
            && (self.days_of_month.is_empty() || self.days_of_month.contains(&date.day()))
    }
}

/// Periodic contexts for granules.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RecurringSlots {
    /// Monday (slot 0) through Sunday (slot 6).
    #[default]
    Weekdays,
    Custom(Vec<SlotPattern>),
}

impl RecurringSlots {
    /// Validates that no date matches two patterns. One leap cycle of dates
    /// covers every month/weekday/day-of-month combination that can occur.
    pub fn custom(patterns: Vec<SlotPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Argument("no recurring slots given".into()));
        }
        let first = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid");
        for offset in 0..(28 * 366) {
            let date = first + Duration::days(offset);
            let hits: Vec<&str> = patterns
                .iter()
                .filter(|p| p.matches(date))
                .map(|p| p.label.as_str())
                .collect();
            if hits.len() > 1 {
                return Err(Error::Argument(format!(
                    "recurring slots {} overlap on {date}",
                    hits.join(" and ")
                )));
            }
        }
        Ok(RecurringSlots::Custom(patterns))
    }

    pub fn len(&self) -> usize {
        match self {
            RecurringSlots::Weekdays => 7,
            RecurringSlots::Custom(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot_of(&self, date: NaiveDate) -> Option<usize> {
        match self {
            RecurringSlots::Weekdays => Some(date.weekday().num_days_from_monday() as usize),
            RecurringSlots::Custom(patterns) => patterns.iter().position(|p| p.matches(date)),
        }
    }
}

/// Which probability drives availability draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilityMode {
    Abs,
    Rel,
    #[default]
    Max,
}

impl FromStr for AvailabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(AvailabilityMode::Abs),
            "rel" => Ok(AvailabilityMode::Rel),
            "max" => Ok(AvailabilityMode::Max),
            other => Err(Error::Argument(format!("unknown availability mode `{other}`"))),
        }
    }
}

impl fmt::Display for AvailabilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AvailabilityMode::Abs => "abs",
            AvailabilityMode::Rel => "rel",
            AvailabilityMode::Max => "max",
        })
    }
}

/// A recurring weekly time window, e.g. Monday–Friday 08:00–12:00.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyInterval {
    pub weekdays: Vec<Weekday>,
    #[serde(with = "hhmm")]
    pub from: u32,
    #[serde(with = "hhmm")]
    pub to: u32,
}

impl WeeklyInterval {
    pub fn new(weekdays: &[Weekday], from: u32, to: u32) -> Self {
        WeeklyInterval {
            weekdays: weekdays.to_vec(),
            from,
            to,
        }
    }

    fn contains(&self, weekday: Weekday, minute: u32) -> bool {
        self.weekdays.contains(&weekday) && self.from <= minute && minute < self.to
    }
}

pub const WORKDAYS: [Weekday; 5] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
];

pub const ALL_DAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Union of weekly windows, with minute resolution.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeeklySchedule(pub Vec<WeeklyInterval>);

impl WeeklySchedule {
    pub fn always() -> Self {
        WeeklySchedule(vec![WeeklyInterval::new(&ALL_DAYS, 0, MINUTES_PER_DAY)])
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|w| w.weekdays.is_empty() || w.from >= w.to)
    }

    pub fn contains(&self, at: DateTime<Utc>) -> bool {
        let minute = (at.timestamp().rem_euclid(86_400) / 60) as u32;
        let weekday = at.weekday();
        self.0.iter().any(|w| w.contains(weekday, minute))
    }

    /// Earliest instant `>= at` inside the schedule.
    pub fn next_open(&self, at: DateTime<Utc>) -> Option<DateTime<Utc>> {
        if self.contains(at) {
            return Some(at);
        }
        let midnight = at.timestamp().div_euclid(86_400) * 86_400;
        (0..8)
            .flat_map(|d| {
                let day_start = midnight + d * 86_400;
                let weekday = Utc
                    .timestamp_opt(day_start, 0)
                    .single()
                    .expect("in range")
                    .weekday();
                self.0
                    .iter()
                    .filter(move |w| w.weekdays.contains(&weekday) && w.from < w.to)
                    .map(move |w| day_start + w.from as i64 * 60)
            })
            .filter(|&s| s > at.timestamp())
            .min()
            .and_then(|s| Utc.timestamp_opt(s, 0).single())
    }
}

/// Per-resource availability probabilities over `slots × granules`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticCalendar {
    granularity: TimeGranularity,
    slots: RecurringSlots,
    p_abs: Vec<Vec<f64>>,
    p_rel: Vec<Vec<f64>>,
}

impl ProbabilisticCalendar {
    pub fn new(
        granularity: TimeGranularity,
        slots: RecurringSlots,
        p_abs: Vec<Vec<f64>>,
        p_rel: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rows = slots.len();
        let cols = granularity.granule_count();
        for (name, m) in [("p_abs", &p_abs), ("p_rel", &p_rel)] {
            if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                return Err(Error::Argument(format!(
                    "{name} must be {rows}x{cols} for {} min granules",
                    granularity.granule_minutes()
                )));
            }
            if m.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Argument(format!("{name} has a value outside [0, 1]")));
            }
        }
        Ok(ProbabilisticCalendar {
            granularity,
            slots,
            p_abs,
            p_rel,
        })
    }

    /// Weekday calendar with the same probability everywhere.
    pub fn uniform(granularity: TimeGranularity, p: f64) -> Result<Self> {
        let grid = vec![vec![p; granularity.granule_count()]; 7];
        Self::new(granularity, RecurringSlots::Weekdays, grid.clone(), grid)
    }

    pub fn always_available(granularity: TimeGranularity) -> Self {
        Self::uniform(granularity, 1.0).expect("valid probabilities")
    }

    /// Crisp weekday calendar: a granule is available iff it lies entirely
    /// inside the schedule.
    pub fn crisp(granularity: TimeGranularity, schedule: &WeeklySchedule) -> Result<Self> {
        let d = granularity.granule_minutes();
        let offset = granularity.start_offset_minutes();
        let mut grid = vec![vec![0.0; granularity.granule_count()]; 7];
        for (slot, day) in ALL_DAYS.iter().enumerate() {
            for (i, cell) in grid[slot].iter_mut().enumerate() {
                let from = offset + i as u32 * d;
                let covered = (from..from + d).all(|m| {
                    let (wd, minute) = if m >= MINUTES_PER_DAY {
                        (day.succ(), m - MINUTES_PER_DAY)
                    } else {
                        (*day, m)
                    };
                    schedule.0.iter().any(|w| w.contains(wd, minute))
                });
                if covered {
                    *cell = 1.0;
                }
            }
        }
        Self::new(granularity, RecurringSlots::Weekdays, grid.clone(), grid)
    }

    pub fn granularity(&self) -> &TimeGranularity {
        &self.granularity
    }

    pub fn slots(&self) -> &RecurringSlots {
        &self.slots
    }

    pub fn p_abs(&self) -> &[Vec<f64>] {
        &self.p_abs
    }

    pub fn p_rel(&self) -> &[Vec<f64>] {
        &self.p_rel
    }

    pub fn probability(&self, slot: usize, granule: usize, mode: AvailabilityMode) -> f64 {
        let abs = self.p_abs[slot][granule];
        let rel = self.p_rel[slot][granule];
        match mode {
            AvailabilityMode::Abs => abs,
            AvailabilityMode::Rel => rel,
            AvailabilityMode::Max => abs.max(rel),
        }
    }

    /// Recurring slot and granule index containing `at`.
    pub fn locate(&self, at: DateTime<Utc>) -> Result<(usize, usize)> {
        let g = self.granularity.dated_granule(at);
        self.locate_granule(g)
            .ok_or_else(|| Error::NotCovered(at.to_rfc3339()))
    }

    pub fn locate_granule(&self, g: DatedGranule) -> Option<(usize, usize)> {
        let slot = self.slots.slot_of(self.granularity.date_of(g))?;
        Some((slot, g.index as usize))
    }

    /// True when every probability is 0 or 1.
    pub fn is_crisp(&self) -> bool {
        self.p_abs
            .iter()
            .chain(self.p_rel.iter())
            .flatten()
            .all(|&p| p == 0.0 || p == 1.0)
    }
}

/// Stateful availability oracle for one resource during one run.
///
/// Each dated granule is decided at most once; later queries reuse the
/// memoized outcome.
#[derive(Debug, Clone)]
pub struct AvailabilitySampler<'a> {
    calendar: &'a ProbabilisticCalendar,
    mode: AvailabilityMode,
    horizon: Duration,
    rng: ChaCha8Rng,
    memo: HashMap<DatedGranule, bool>,
}

impl<'a> AvailabilitySampler<'a> {
    pub const DEFAULT_HORIZON_WEEKS: i64 = 8;

    pub fn new(calendar: &'a ProbabilisticCalendar, mode: AvailabilityMode, seed: u64) -> Self {
        AvailabilitySampler {
            calendar,
            mode,
            horizon: Duration::weeks(Self::DEFAULT_HORIZON_WEEKS),
            rng: ChaCha8Rng::seed_from_u64(seed),
            memo: HashMap::new(),
        }
    }

    pub fn with_horizon(mut self, horizon: Duration) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn calendar(&self) -> &ProbabilisticCalendar {
        self.calendar
    }

    /// Bernoulli decision for a dated granule. Granules outside every
    /// recurring slot are unavailable.
    pub fn is_available(&mut self, g: DatedGranule) -> bool {
        if let Some(&known) = self.memo.get(&g) {
            return known;
        }
        let outcome = match self.calendar.locate_granule(g) {
            None => false,
            Some((slot, granule)) => {
                let p = self.calendar.probability(slot, granule, self.mode);
                if p <= 0.0 {
                    false
                } else if p >= 1.0 {
                    true
                } else {
                    self.rng.random::<f64>() < p
                }
            }
        };
        self.memo.insert(g, outcome);
        outcome
    }

    pub fn is_available_at(&mut self, at: DateTime<Utc>) -> bool {
        let g = self.calendar.granularity.dated_granule(at);
        self.is_available(g)
    }

    /// Earliest instant `>= from` in an available granule: `from` itself when
    /// its own granule is available, else the start of the first available
    /// granule.
    pub fn next_available_time(&mut self, from: DateTime<Utc>) -> Result<DateTime<Utc>> {
        let granularity = self.calendar.granularity;
        let mut g = granularity.dated_granule(from);
        if self.is_available(g) {
            return Ok(from);
        }
        let limit = from + self.horizon;
        loop {
            g = granularity.next(g);
            let start = granularity.start_of(g);
            if start > limit {
                return Err(self.exhausted(from));
            }
            if self.is_available(g) {
                return Ok(start);
            }
        }
    }

    /// Completion instant of `pt` worth of work started at `start`, consuming
    /// work only inside available granules.
    pub fn adjust_processing_time(
        &mut self,
        start: DateTime<Utc>,
        pt: Duration,
    ) -> Result<DateTime<Utc>> {
        let granularity = self.calendar.granularity;
        let mut current = start;
        let mut remaining = pt;
        let mut idle = Duration::zero();
        while remaining > Duration::zero() {
            let g = granularity.dated_granule(current);
            let end = granularity.end_of(g);
            if self.is_available(g) {
                let take = remaining.min(end - current);
                current += take;
                remaining -= take;
                idle = Duration::zero();
            } else {
                idle += end - current;
                if idle > self.horizon {
                    return Err(self.exhausted(current));
                }
                current = end;
            }
        }
        Ok(current)
    }

    fn exhausted(&self, from: DateTime<Utc>) -> Error {
        Error::HorizonExhausted {
            from: from.to_rfc3339(),
            hours: self.horizon.num_hours(),
        }
    }
}

mod hhmm {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(minutes: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:02}:{:02}", minutes / 60, minutes % 60))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let raw = String::deserialize(d)?;
        let (h, m) = raw
            .split_once(':')
            .ok_or_else(|| D::Error::custom(format!("expected HH:MM, got `{raw}`")))?;
        let h: u32 = h.parse().map_err(D::Error::custom)?;
        let m: u32 = m.parse().map_err(D::Error::custom)?;
        if m >= 60 || h * 60 + m > 1440 {
            return Err(D::Error::custom(format!("`{raw}` is not a time of day")));
        }
        Ok(h * 60 + m)
    }
}
