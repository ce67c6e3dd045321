//! Probabilistic multitasking capacity.
//!
//! An [`Mdpd`] stores, for each concurrency level `i`, the probability that a
//! resource handles at least `i` activity instances at once. Resources carry
//! either one MDPD for the whole process ([`MultitaskProfile::Global`]) or one
//! per `(slot, granule)` cell ([`MultitaskProfile::Local`]).

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::Rng;

use crate::calendar::{DatedGranule, RecurringSlots, TimeGranularity};
use crate::error::{Error, Result};
use crate::event_log::{Event, EventLog};
use crate::scalar::{from_u64, Scalar};

/// Inverse-cumulative multitasking distribution. `probs[i - 1]` is the
/// probability of level `i`; levels above `max_level()` have probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdpd<T = f64> {
    probs: Vec<T>,
}

impl<T: Scalar> Mdpd<T> {
    /// One task at a time.
    pub fn single_task() -> Self {
        Mdpd {
            probs: vec![T::one()],
        }
    }

    /// Validates `probs[0] = 1`, non-increasing, every entry in `(0, 1]`.
    pub fn from_probabilities(probs: Vec<T>) -> Result<Self> {
        if probs.first() != Some(&T::one()) {
            return Err(Error::Argument("MDPD must start with probability 1".into()));
        }
        if probs.iter().any(|p| *p <= T::zero() || *p > T::one()) {
            return Err(Error::Argument("MDPD probabilities must lie in (0, 1]".into()));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Argument("MDPD probabilities must not increase".into()));
        }
        Ok(Mdpd { probs })
    }

    pub fn max_level(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Probability of sustaining `level` concurrent instances.
    pub fn probability(&self, level: usize) -> T {
        if level == 0 || level > self.probs.len() {
            T::zero()
        } else {
            self.probs[level - 1]
        }
    }

    pub fn is_single_task(&self) -> bool {
        self.probs.len() == 1
    }
}

impl<T: Scalar> Default for Mdpd<T> {
    fn default() -> Self {
        Self::single_task()
    }
}

/// Builds an MDPD from observed concurrency-level frequencies:
/// `P(i) = Σ_{j>=i} freq[j] / Σ_j freq[j]`, up to the highest level with a
/// positive count.
pub fn compute_mdpd<T: Scalar>(freqs: &BTreeMap<usize, u64>) -> Result<Mdpd<T>> {
    let top = freqs
        .iter()
        .filter(|(&level, &count)| level >= 1 && count > 0)
        .map(|(&level, _)| level)
        .max()
        .ok_or_else(|| Error::Argument("no positive multitasking frequency".into()))?;
    let count = |level: usize| freqs.get(&level).copied().unwrap_or(0);
    let total: u64 = (1..=top).map(count).sum();
    let total_t: T = from_u64(total);
    let mut probs = vec![T::zero(); top];
    let mut tail = 0u64;
    for level in (1..=top).rev() {
        tail += count(level);
        probs[level - 1] = from_u64::<T>(tail) / total_t;
    }
    Ok(Mdpd { probs })
}

/// Whether a resource currently running `current_load` instances accepts one
/// more: never at or above the cap, otherwise a Bernoulli draw with the
/// probability of level `current_load + 1`.
pub fn can_multitask<T: Scalar, R: Rng + ?Sized>(
    mdpd: &Mdpd<T>,
    current_load: usize,
    rng: &mut R,
) -> bool {
    if current_load >= mdpd.max_level() {
        return false;
    }
    let p = mdpd
        .probability(current_load + 1)
        .to_f64()
        .expect("probability representable as f64");
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

/// Counts, for each start, the number of intervals active right after it.
///
/// Intervals are half-open, so an interval ending exactly when another starts
/// does not overlap it. Zero-length intervals are active at their instant.
pub fn concurrency_frequencies<Tm: Ord + Copy>(intervals: &[(Tm, Tm)]) -> BTreeMap<usize, u64> {
    // Sort key: time, then ends of proper intervals, starts, ends of points.
    let mut points: Vec<(Tm, u8)> = Vec::with_capacity(intervals.len() * 2);
    for &(s, e) in intervals {
        points.push((s, 1));
        points.push((e, if e > s { 0 } else { 2 }));
    }
    points.sort();
    let mut freqs = BTreeMap::new();
    let mut active = 0usize;
    for (_, kind) in points {
        if kind == 1 {
            active += 1;
            *freqs.entry(active).or_insert(0) += 1;
        } else {
            active -= 1;
        }
    }
    freqs
}

/// Per-resource global multitasking distributions.
pub type GlobalMultitask<T = f64> = BTreeMap<String, Mdpd<T>>;

pub fn discover_global(log: &EventLog) -> GlobalMultitask {
    log.events_by_resource()
        .into_iter()
        .map(|(resource, events)| {
            let spans: Vec<_> = events.iter().map(|e| (e.started_at, e.completed_at)).collect();
            let freqs = concurrency_frequencies(&spans);
            let mdpd = compute_mdpd(&freqs).unwrap_or_default();
            (resource.to_string(), mdpd)
        })
        .collect()
}

/// Multitasking distributions per `(slot, granule)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMultitask<T = f64> {
    granularity: TimeGranularity,
    slots: RecurringSlots,
    cells: Vec<Vec<Mdpd<T>>>,
    fallback: Mdpd<T>,
}

impl<T: Scalar> LocalMultitask<T> {
    /// All cells single-task.
    pub fn single_task(granularity: TimeGranularity, slots: RecurringSlots) -> Self {
        let cells = vec![vec![Mdpd::single_task(); granularity.granule_count()]; slots.len()];
        LocalMultitask {
            granularity,
            slots,
            cells,
            fallback: Mdpd::single_task(),
        }
    }

    pub fn set_cell(&mut self, slot: usize, granule: usize, mdpd: Mdpd<T>) -> Result<()> {
        let cell = self
            .cells
            .get_mut(slot)
            .and_then(|row| row.get_mut(granule))
            .ok_or_else(|| Error::Argument(format!("no local multitask cell ({slot}, {granule})")))?;
        *cell = mdpd;
        Ok(())
    }

    pub fn granularity(&self) -> &TimeGranularity {
        &self.granularity
    }

    pub fn slots(&self) -> &RecurringSlots {
        &self.slots
    }

    pub fn cell(&self, slot: usize, granule: usize) -> &Mdpd<T> {
        &self.cells[slot][granule]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &Mdpd<T>)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(g, m)| (s, g, m)))
    }

    pub fn max_level(&self) -> usize {
        self.cells().map(|(_, _, m)| m.max_level()).max().unwrap_or(1)
    }

    /// Distribution in force at `at`; single-task outside every slot.
    pub fn mdpd_at(&self, at: DateTime<Utc>) -> &Mdpd<T> {
        let g = self.granularity.dated_granule(at);
        match self.slots.slot_of(self.granularity.date_of(g)) {
            Some(slot) => &self.cells[slot][g.index as usize],
            None => &self.fallback,
        }
    }
}

type Span = (DateTime<Utc>, DateTime<Utc>);

/// Splits each event into per-granule pieces, keyed by dated granule.
fn dated_pieces(events: &[&Event], granularity: &TimeGranularity) -> BTreeMap<DatedGranule, Vec<Span>> {
    let mut pieces: BTreeMap<DatedGranule, Vec<_>> = BTreeMap::new();
    for e in events {
        let (s, c) = (e.started_at, e.completed_at);
        if s == c {
            pieces
                .entry(granularity.dated_granule(s))
                .or_default()
                .push((s, s));
            continue;
        }
        for g in granularity.granules_between(s, c) {
            let lo = s.max(granularity.start_of(g));
            let hi = c.min(granularity.end_of(g));
            pieces.entry(g).or_default().push((lo, hi));
        }
    }
    pieces
}

pub fn discover_local(
    log: &EventLog,
    granularity: TimeGranularity,
    slots: &RecurringSlots,
) -> BTreeMap<String, LocalMultitask> {
    log.events_by_resource()
        .into_iter()
        .map(|(resource, events)| {
            let mut freqs: BTreeMap<(usize, usize), BTreeMap<usize, u64>> = BTreeMap::new();
            for (g, mut spans) in dated_pieces(&events, &granularity) {
                let Some(slot) = slots.slot_of(granularity.date_of(g)) else {
                    continue;
                };
                spans.sort();
                let cell = freqs.entry((slot, g.index as usize)).or_default();
                for (level, count) in concurrency_frequencies(&spans) {
                    *cell.entry(level).or_insert(0) += count;
                }
            }
            let mut local = LocalMultitask::single_task(granularity, slots.clone());
            for ((slot, granule), f) in freqs {
                if let Ok(mdpd) = compute_mdpd(&f) {
                    local.cells[slot][granule] = mdpd;
                }
            }
            (resource.to_string(), local)
        })
        .collect()
}

/// Multitasking behaviour attached to one resource.
#[derive(Debug, Clone, PartialEq)]
pub enum MultitaskProfile {
    Global(Mdpd),
    Local(LocalMultitask),
}

impl Default for MultitaskProfile {
    fn default() -> Self {
        MultitaskProfile::Global(Mdpd::single_task())
    }
}

impl MultitaskProfile {
    pub fn mdpd_at(&self, at: DateTime<Utc>) -> &Mdpd {
        match self {
            MultitaskProfile::Global(m) => m,
            MultitaskProfile::Local(l) => l.mdpd_at(at),
        }
    }

    pub fn max_level(&self) -> usize {
        match self {
            MultitaskProfile::Global(m) => m.max_level(),
            MultitaskProfile::Local(l) => l.max_level(),
        }
    }

    pub fn is_single_task(&self) -> bool {
        self.max_level() == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn freqs(pairs: &[(usize, u64)]) -> BTreeMap<usize, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn worked_example_is_exact() {
        let m: Mdpd<Ratio<i64>> = compute_mdpd(&freqs(&[(1, 15), (2, 15), (3, 5), (4, 5)])).unwrap();
        let expected = [(1, 1), (5, 8), (1, 4), (1, 8)].map(|(n, d)| Ratio::new(n, d));
        assert_eq!(m.probs(), expected);
        let f: Mdpd<f64> = compute_mdpd(&freqs(&[(1, 15), (2, 15), (3, 5), (4, 5)])).unwrap();
        assert_eq!(f.probs(), [1.0, 0.625, 0.25, 0.125]);
    }

    #[test]
    fn single_level_and_empty_first_level() {
        let m: Mdpd = compute_mdpd(&freqs(&[(1, 10)])).unwrap();
        assert_eq!(m.probs(), [1.0]);
        let m: Mdpd = compute_mdpd(&freqs(&[(1, 0), (2, 8)])).unwrap();
        assert_eq!(m.probs(), [1.0, 1.0]);
        assert!(compute_mdpd::<f64>(&freqs(&[(1, 0)])).is_err());
        assert!(compute_mdpd::<f64>(&BTreeMap::new()).is_err());
    }

    #[test]
    fn probability_outside_levels_is_zero() {
        let m = Mdpd::from_probabilities(vec![1.0, 0.5]).unwrap();
        assert_eq!(m.probability(0), 0.0);
        assert_eq!(m.probability(3), 0.0);
        assert!(Mdpd::from_probabilities(vec![0.9]).is_err());
        assert!(Mdpd::from_probabilities(vec![1.0, 0.2, 0.4]).is_err());
    }

    #[test]
    fn gate_respects_cap_and_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let single = Mdpd::<f64>::single_task();
        assert!(can_multitask(&single, 0, &mut rng));
        assert!(!can_multitask(&single, 1, &mut rng));
        let dual = Mdpd::from_probabilities(vec![1.0, 1.0]).unwrap();
        assert!((0..100).all(|_| can_multitask(&dual, 1, &mut rng)));
        assert!(!can_multitask(&dual, 2, &mut rng));
    }

    #[test]
    fn gate_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = Mdpd::from_probabilities(vec![1.0, 0.6]).unwrap();
        let hits = (0..10_000).filter(|_| can_multitask(&m, 1, &mut rng)).count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.6).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn sweep_examples() {
        assert_eq!(concurrency_frequencies(&[(0, 10), (5, 15)]), freqs(&[(1, 1), (2, 1)]));
        assert_eq!(concurrency_frequencies(&[(0, 5), (5, 10), (10, 15)]), freqs(&[(1, 3)]));
        assert_eq!(
            concurrency_frequencies(&[(3, 9), (3, 7), (3, 4)]),
            freqs(&[(1, 1), (2, 1), (3, 1)])
        );
        let m: Mdpd = compute_mdpd(&concurrency_frequencies(&[(3, 9), (3, 7), (3, 4)])).unwrap();
        assert_eq!(m.probs(), [1.0, 2.0 / 3.0, 1.0 / 3.0]);
    }

    /// Level reached by each start, evaluated directly: intervals started no
    /// later (in tie order) that are still running at that instant.
    fn brute_force(intervals: &[(i32, i32)]) -> BTreeMap<usize, u64> {
        let mut order: Vec<usize> = (0..intervals.len()).collect();
        order.sort_by_key(|&i| (intervals[i].0, i));
        let mut out = BTreeMap::new();
        for (rank, &k) in order.iter().enumerate() {
            let t = intervals[k].0;
            let level = order[..=rank]
                .iter()
                .filter(|&&j| {
                    let (s, e) = intervals[j];
                    e > t || (s == e && s == t)
                })
                .count();
            *out.entry(level).or_insert(0) += 1;
        }
        out
    }

    proptest! {
        #[test]
        fn sweep_matches_brute_force(raw in prop::collection::vec((0i32..12, 0i32..6), 1..=6)) {
            let intervals: Vec<(i32, i32)> = raw.iter().map(|&(s, d)| (s, s + d)).collect();
            prop_assert_eq!(concurrency_frequencies(&intervals), brute_force(&intervals));
        }

        #[test]
        fn discovered_mdpd_is_monotone(raw in prop::collection::vec((0i32..50, 0i32..20), 1..40)) {
            let intervals: Vec<(i32, i32)> = raw.iter().map(|&(s, d)| (s, s + d)).collect();
            let m: Mdpd = compute_mdpd(&concurrency_frequencies(&intervals)).unwrap();
            prop_assert_eq!(m.probs()[0], 1.0);
            prop_assert!(m.probs().windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(m.probs().iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }

    fn log_of(spans: &[(u32, u32, u32, u32)]) -> EventLog {
        let base = Utc.with_ymd_and_hms(2024, 3, 27, 0, 0, 0).unwrap();
        let events = spans.iter().enumerate().map(|(i, &(sh, sm, eh, em))| {
            Event::new(
                format!("c{i}"),
                "A",
                "r",
                base + Duration::minutes((sh * 60 + sm) as i64),
                base + Duration::minutes((eh * 60 + em) as i64),
            )
        });
        EventLog::from_events(events).unwrap()
    }

    #[test]
    fn global_discovery() {
        let g = discover_global(&log_of(&[(10, 0, 10, 10), (10, 5, 10, 15)]));
        assert_eq!(g["r"].probs(), [1.0, 0.5]);
        let g = discover_global(&log_of(&[(9, 0, 9, 30), (10, 0, 10, 30)]));
        assert_eq!(g["r"].probs(), [1.0]);
    }

    #[test]
    fn event_is_cut_into_dated_granules() {
        let log = log_of(&[(10, 15, 11, 45)]);
        let events: Vec<&Event> = log.events().collect();
        let g = TimeGranularity::new(60).unwrap();
        let pieces = dated_pieces(&events, &g);
        let keys: Vec<u32> = pieces.keys().map(|k| k.index).collect();
        assert_eq!(keys, [10, 11]);
        let day = pieces.keys().next().unwrap().day;
        assert!(pieces.keys().all(|k| k.day == day));
        let first = pieces.values().next().unwrap()[0];
        assert_eq!(first.0.format("%H:%M").to_string(), "10:15");
        assert_eq!(first.1.format("%H:%M").to_string(), "11:00");
    }

    #[test]
    fn local_discovery_per_cell() {
        // Overlap only inside the 10:00 granule; 2024-03-27 is a Wednesday.
        let log = log_of(&[(10, 0, 10, 40), (10, 20, 11, 30)]);
        let local = &discover_local(&log, TimeGranularity::new(60).unwrap(), &RecurringSlots::Weekdays)["r"];
        assert_eq!(local.cell(2, 10).max_level(), 2);
        assert_eq!(local.cell(2, 11).max_level(), 1);
        assert_eq!(local.cell(0, 3).probs(), [1.0]);
        assert_eq!(local.max_level(), 2);
        let global = discover_global(&log);
        assert_eq!(global["r"].max_level(), local.max_level());
    }
}
