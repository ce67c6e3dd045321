//! Discovery of probabilistic calendars and calendar-adjusted processing
//! times from an event log.
//!
//! Every event contributes twice: its waiting interval (enablement to start)
//! marks candidate resources as required, and its processing interval (start
//! to completion) marks the executing resource as operational with a
//! trapezoidal weight that is 1 at the boundary granules and decays towards
//! the middle.

use std::collections::{BTreeMap, HashSet};

use crate::calendar::{DatedGranule, ProbabilisticCalendar, RecurringSlots, TimeGranularity};
use crate::distribution::{best_fit_distribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::event_log::{Event, EventLog};
use crate::scalar::{from_usize, Scalar};

/// Symmetric weights for `span` consecutive granules: 1 at both ends,
/// decreasing by `β / ⌊span/2⌋` per step inwards (by 1 when `β = 0`),
/// floored at 0.
pub fn trapezoidal_weights<T: Scalar>(span: usize, beta: T) -> Vec<T> {
    if span <= 1 {
        return vec![T::one(); span];
    }
    let step = if beta > T::zero() {
        beta / from_usize::<T>(span / 2)
    } else {
        T::one()
    };
    (0..span)
        .map(|k| {
            let depth = k.min(span - 1 - k);
            let w = T::one() - step * from_usize::<T>(depth);
            if w < T::zero() {
                T::zero()
            } else {
                w
            }
        })
        .collect()
}

/// Accumulated evidence per resource, weekday and granule.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrices {
    /// Availability weight (λ).
    pub operational: Vec<Vec<Vec<f64>>>,
    /// Number of times the resource was required (Λ).
    pub required: Vec<Vec<Vec<f64>>>,
    /// Largest availability weight over resources (M).
    pub busiest: Vec<Vec<f64>>,
}

fn granules_worked(e: &Event, g: &TimeGranularity) -> Vec<DatedGranule> {
    let spans = g.granules_between(e.started_at, e.completed_at);
    if spans.is_empty() {
        vec![g.dated_granule(e.started_at)]
    } else {
        spans
    }
}

fn weekday_slot(g: &TimeGranularity, dg: DatedGranule) -> usize {
    RecurringSlots::Weekdays
        .slot_of(g.date_of(dg))
        .expect("weekdays cover every date")
}

/// Runs the counting pass. `resources` fixes the order of the first axis.
pub fn frequency_matrices(
    log: &EventLog,
    resources: &[String],
    granularity: &TimeGranularity,
    beta: f64,
) -> FrequencyMatrices {
    let n = granularity.granule_count();
    let index: BTreeMap<&str, usize> = resources
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), i))
        .collect();
    let mut operational = vec![vec![vec![0.0; n]; 7]; resources.len()];
    let mut required = vec![vec![vec![0.0; n]; 7]; resources.len()];

    let mut task_resources: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut busy: Vec<HashSet<DatedGranule>> = vec![HashSet::new(); resources.len()];
    for e in log.events() {
        let r = index[e.resource.as_str()];
        let cands = task_resources.entry(e.activity.as_str()).or_default();
        if !cands.contains(&r) {
            cands.push(r);
        }
        busy[r].extend(granules_worked(e, granularity));
    }

    for e in log.events() {
        let r = index[e.resource.as_str()];
        let candidates = &task_resources[e.activity.as_str()];
        for allocated in [false, true] {
            let granules = if allocated {
                granules_worked(e, granularity)
            } else {
                granularity.granules_between(e.enabled(), e.started_at)
            };
            if granules.is_empty() {
                continue;
            }
            let weights = trapezoidal_weights(granules.len(), beta);
            let updates: Vec<(DatedGranule, f64)> = if granules.len() == 1 {
                vec![(granules[0], 1.0), (granules[0], 1.0)]
            } else {
                granules.into_iter().zip(weights).collect()
            };
            for (dg, weight) in updates {
                let slot = weekday_slot(granularity, dg);
                let idx = dg.index as usize;
                for &c in candidates {
                    if !busy[c].contains(&dg) {
                        required[c][slot][idx] += 1.0;
                    }
                }
                if allocated {
                    operational[r][slot][idx] += weight;
                    required[r][slot][idx] += 1.0;
                }
            }
        }
    }

    let mut busiest = vec![vec![0.0; n]; 7];
    for per_resource in &operational {
        for (slot, row) in per_resource.iter().enumerate() {
            for (idx, &w) in row.iter().enumerate() {
                busiest[slot][idx] = f64::max(busiest[slot][idx], w);
            }
        }
    }
    FrequencyMatrices {
        operational,
        required,
        busiest,
    }
}

/// Learns one weekday calendar per resource.
///
/// Missing enablement times are derived first. Cells never required get
/// probability 0.
pub fn discover_calendars(
    log: &EventLog,
    granule_minutes: u32,
    beta: f64,
) -> Result<BTreeMap<String, ProbabilisticCalendar>> {
    let granularity = TimeGranularity::new(granule_minutes)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Argument(format!("beta {beta} outside [0, 1]")));
    }
    if log.is_empty() {
        return Ok(BTreeMap::new());
    }
    let log = log.with_enabling_times();
    let resources: Vec<String> = log.resources().iter().cloned().collect();
    let m = frequency_matrices(&log, &resources, &granularity, beta);
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).min(1.0) } else { 0.0 };
    resources
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let p_abs = (0..7)
                .map(|s| {
                    m.operational[r][s]
                        .iter()
                        .zip(&m.required[r][s])
                        .map(|(&l, &cap)| ratio(l, cap))
                        .collect()
                })
                .collect();
            let p_rel = (0..7)
                .map(|s| {
                    m.operational[r][s]
                        .iter()
                        .zip(&m.busiest[s])
                        .map(|(&l, &top)| ratio(l, top))
                        .collect()
                })
                .collect();
            let cal = ProbabilisticCalendar::new(granularity, RecurringSlots::Weekdays, p_abs, p_rel)?;
            Ok((name.clone(), cal))
        })
        .collect()
}

/// Processing time of `e` in seconds, counting each granule's overlap
/// weighted by the larger of its absolute and relative probability.
pub fn adjusted_duration(e: &Event, calendar: &ProbabilisticCalendar) -> f64 {
    let g = calendar.granularity();
    g.granules_between(e.started_at, e.completed_at)
        .into_iter()
        .map(|dg| {
            let lo = e.started_at.max(g.start_of(dg));
            let hi = e.completed_at.min(g.end_of(dg));
            let secs = (hi - lo).num_milliseconds() as f64 / 1000.0;
            let p = calendar
                .locate_granule(dg)
                .map(|(slot, idx)| calendar.p_abs()[slot][idx].max(calendar.p_rel()[slot][idx]))
                .unwrap_or(0.0);
            secs * p
        })
        .sum()
}

/// Fitted processing-time distribution per `(resource, activity)`.
pub type PerformanceMap = BTreeMap<(String, String), DistributionSpec>;

/// Fits calendar-adjusted processing times per resource-activity pair.
///
/// Pairs with fewer than `kappa` observations borrow the distribution of the
/// fitted resource (same activity) whose raw mean duration is closest, or,
/// when there is none, a fit over every observation of the activity.
pub fn fit_processing_times(
    log: &EventLog,
    calendars: &BTreeMap<String, ProbabilisticCalendar>,
    kappa: usize,
) -> Result<PerformanceMap> {
    struct Pair {
        adjusted: Vec<f64>,
        raw_mean: f64,
    }
    let mut grouped: BTreeMap<(String, String), Vec<&Event>> = BTreeMap::new();
    for e in log.events() {
        grouped
            .entry((e.resource.clone(), e.activity.clone()))
            .or_default()
            .push(e);
    }
    let mut pairs: BTreeMap<(String, String), Pair> = BTreeMap::new();
    for (key, events) in grouped {
        let cal = calendars
            .get(&key.0)
            .ok_or_else(|| Error::UnknownResource(key.0.clone()))?;
        let adjusted = events.iter().map(|e| adjusted_duration(e, cal)).collect();
        let raw_mean = events
            .iter()
            .map(|e| e.processing_time().num_milliseconds() as f64 / 1000.0)
            .sum::<f64>()
            / events.len() as f64;
        pairs.insert(key, Pair { adjusted, raw_mean });
    }

    let mut fitted = PerformanceMap::new();
    for (key, pair) in &pairs {
        if pair.adjusted.len() >= kappa {
            fitted.insert(key.clone(), best_fit_distribution(&pair.adjusted)?);
        }
    }

    let mut out = fitted.clone();
    for (key, pair) in &pairs {
        if fitted.contains_key(key) {
            continue;
        }
        let (resource, activity) = key;
        let closest = fitted
            .keys()
            .filter(|(r, a)| a == activity && r != resource)
            .map(|k| ((pairs[k].raw_mean - pair.raw_mean).abs(), k))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let spec = match closest {
            Some((_, k)) => fitted[k].clone(),
            None => {
                let all: Vec<f64> = pairs
                    .iter()
                    .filter(|((_, a), _)| a == activity)
                    .flat_map(|(_, p)| p.adjusted.iter().copied())
                    .collect();
                best_fit_distribution(&all)?
            }
        };
        out.insert(key.clone(), spec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Duration, TimeZone, Utc};
    use num_rational::Ratio;
    use proptest::prelude::*;

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoidal_weights(5, 0.0), [1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(trapezoidal_weights(5, 1.0), [1.0, 0.5, 0.0, 0.5, 1.0]);
        assert_eq!(trapezoidal_weights(5, 0.5), [1.0, 0.75, 0.5, 0.75, 1.0]);
        assert_eq!(trapezoidal_weights(1, 0.3), [1.0]);
        assert_eq!(trapezoidal_weights(2, 0.3), [1.0, 1.0]);
        let half = Ratio::new(1i64, 2);
        let exact = trapezoidal_weights(5, half);
        let expected = [(1, 1), (3, 4), (1, 2), (3, 4), (1, 1)].map(|(n, d)| Ratio::new(n, d));
        assert_eq!(exact, expected);
    }

    #[test]
    fn trapezoid_clamps_long_spans() {
        let w = trapezoidal_weights(9, 0.0);
        assert_eq!(w, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(trapezoidal_weights(11, 0.2).iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    proptest! {
        #[test]
        fn trapezoid_is_symmetric_and_bounded(span in 1usize..40, beta in 0.0f64..=1.0) {
            let w = trapezoidal_weights(span, beta);
            prop_assert_eq!(w.len(), span);
            prop_assert_eq!(w[0], 1.0);
            for k in 0..span {
                prop_assert_eq!(w[k], w[span - 1 - k]);
                prop_assert!((0.0..=1.0).contains(&w[k]));
            }
        }
    }

    // 2024-01-01 is a Monday.
    fn monday(week: i64, h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, h, m, 0).unwrap() + Duration::weeks(week)
    }

    fn single_event_log(events: &[(&str, DateTime<Utc>, DateTime<Utc>)]) -> EventLog {
        EventLog::from_events(
            events
                .iter()
                .enumerate()
                .map(|(i, &(r, s, e))| Event::new(format!("c{i}"), "Review", r, s, e)),
        )
        .unwrap()
    }

    #[test]
    fn weekly_regular_resource() {
        let log = single_event_log(
            &(0..4)
                .map(|w| ("ann", monday(w, 9, 10), monday(w, 9, 50)))
                .collect::<Vec<_>>(),
        );
        let cals = discover_calendars(&log, 60, 0.5).unwrap();
        let cal = &cals["ann"];
        for slot in 0..7 {
            for g in 0..24 {
                let expected = if (slot, g) == (0, 9) { 1.0 } else { 0.0 };
                assert_eq!(cal.p_abs()[slot][g], expected, "({slot},{g})");
            }
        }
    }

    #[test]
    fn rotating_resources_share_absolute_probability() {
        let log = single_event_log(
            &(0..4)
                .map(|w| {
                    let who = if w % 2 == 0 { "ann" } else { "bob" };
                    (who, monday(w, 9, 10), monday(w, 9, 50))
                })
                .collect::<Vec<_>>(),
        );
        let cals = discover_calendars(&log, 60, 0.5).unwrap();
        for r in ["ann", "bob"] {
            assert_eq!(cals[r].p_abs()[0][9], 0.5, "{r}");
            assert_eq!(cals[r].p_rel()[0][9], 1.0, "{r}");
        }
    }

    #[test]
    fn empty_log_and_bad_granule() {
        assert!(discover_calendars(&EventLog::default(), 60, 0.5).unwrap().is_empty());
        assert!(matches!(
            discover_calendars(&EventLog::default(), 7, 0.5),
            Err(Error::Argument(_))
        ));
    }

    /// Independent count for one-granule events enabled when they start:
    /// P_ABS = own / (own + others executed while idle); P_REL = own / max own.
    fn counting_oracle(events: &[(String, i64, u32)]) -> BTreeMap<(String, usize, usize), (f64, f64)> {
        let mut own: BTreeMap<(String, usize, usize), f64> = BTreeMap::new();
        let mut busy: HashSet<(String, i64, u32)> = HashSet::new();
        let resources: Vec<String> = events.iter().map(|e| e.0.clone()).collect();
        for (r, day, hour) in events {
            *own.entry((r.clone(), (*day % 7) as usize, *hour as usize)).or_default() += 1.0;
            busy.insert((r.clone(), *day, *hour));
        }
        let mut needed: BTreeMap<(String, usize, usize), f64> = own.clone();
        for (r, day, hour) in events {
            for c in resources.iter().collect::<HashSet<_>>() {
                if c != r && !busy.contains(&(c.clone(), *day, *hour)) {
                    *needed.entry((c.clone(), (*day % 7) as usize, *hour as usize)).or_default() += 1.0;
                }
            }
        }
        let mut top: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((_, s, h), v) in &own {
            let t = top.entry((*s, *h)).or_default();
            *t = t.max(*v);
        }
        needed
            .iter()
            .map(|(k, &n)| {
                let o = own.get(k).copied().unwrap_or(0.0);
                let t = top.get(&(k.1, k.2)).copied().unwrap_or(0.0);
                (k.clone(), (o / n, if t > 0.0 { o / t } else { 0.0 }))
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn one_granule_events_match_counting_oracle(
            raw in prop::collection::vec((0usize..3, 0i64..21, 6u32..12), 1..30)
        ) {
            let names = ["ann", "bob", "cid"];
            let events: Vec<(String, i64, u32)> = raw
                .iter()
                .map(|&(r, d, h)| (names[r].to_string(), d, h))
                .collect();
            let log = single_event_log(
                &events
                    .iter()
                    .map(|(r, d, h)| {
                        let s = monday(0, *h, 5) + Duration::days(*d);
                        (r.as_str(), s, s + Duration::minutes(30))
                    })
                    .collect::<Vec<_>>(),
            );
            let cals = discover_calendars(&log, 60, 0.3).unwrap();
            let oracle = counting_oracle(&events);
            for (r, cal) in &cals {
                for slot in 0..7 {
                    for h in 0..24 {
                        let (abs, rel) = oracle
                            .get(&(r.clone(), slot, h))
                            .copied()
                            .unwrap_or((0.0, 0.0));
                        prop_assert!((cal.p_abs()[slot][h] - abs).abs() < 1e-12);
                        prop_assert!((cal.p_rel()[slot][h] - rel).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn probabilities_are_bounded_and_stable_under_duplication(
            raw in prop::collection::vec((0usize..2, 0i64..14, 0u32..20, 1i64..300), 1..25),
            beta in 0.0f64..=1.0,
        ) {
            let names = ["ann", "bob"];
            let mk = |copy: usize| {
                raw.iter().enumerate().map(move |(i, &(r, d, h, mins))| {
                    let s = monday(0, h, 0) + Duration::days(d);
                    Event::new(format!("c{copy}-{i}"), "Task", names[r], s, s + Duration::minutes(mins))
                })
            };
            let single = EventLog::from_events(mk(0)).unwrap();
            let doubled = EventLog::from_events(mk(0).chain(mk(1))).unwrap();
            let a = discover_calendars(&single, 60, beta).unwrap();
            let b = discover_calendars(&doubled, 60, beta).unwrap();
            for (r, cal) in &a {
                for (x, y) in cal.p_abs().iter().flatten().zip(b[r].p_abs().iter().flatten()) {
                    prop_assert!((0.0..=1.0).contains(x));
                    prop_assert!((x - y).abs() < 1e-12);
                }
                for (x, y) in cal.p_rel().iter().flatten().zip(b[r].p_rel().iter().flatten()) {
                    prop_assert!((0.0..=1.0).contains(x));
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
            prop_assert_eq!(&a, &discover_calendars(&single, 60, beta).unwrap());
        }
    }

    #[test]
    fn all_ones_calendar_keeps_raw_durations() {
        let log = single_event_log(&[("ann", monday(0, 9, 10), monday(0, 11, 40))]);
        let cal = ProbabilisticCalendar::always_available(TimeGranularity::new(60).unwrap());
        let e = log.events().next().unwrap();
        assert_eq!(adjusted_duration(e, &cal), 150.0 * 60.0);
    }

    #[test]
    fn weighted_granule_sum() {
        let g = TimeGranularity::new(60).unwrap();
        let mut p = vec![vec![0.0; 24]; 7];
        p[0][9] = 1.0;
        p[0][10] = 0.5;
        p[0][11] = 1.0;
        let cal = ProbabilisticCalendar::new(g, RecurringSlots::Weekdays, p.clone(), vec![vec![0.0; 24]; 7]).unwrap();
        let log = single_event_log(&[("ann", monday(0, 9, 30), monday(0, 11, 30))]);
        let e = log.events().next().unwrap();
        assert_eq!(adjusted_duration(e, &cal), 90.0 * 60.0);
    }

    #[test]
    fn sparse_pair_inherits_closest_mean_sibling() {
        let mut events = Vec::new();
        let mut push = |r: &str, minutes: i64, i: i64| {
            let s = monday(0, 9, 0) + Duration::hours(i * 2);
            events.push(Event::new(format!("{r}{i}"), "Review", r, s, s + Duration::minutes(minutes)));
        };
        for i in 0..20 {
            push("near", 24 + (i % 3), i);
            push("far", 60 + (i % 5), 100 + i);
        }
        push("rare", 25, 300);
        let log = EventLog::from_events(events).unwrap();
        let g = TimeGranularity::new(60).unwrap();
        let cals: BTreeMap<String, ProbabilisticCalendar> = log
            .resources()
            .iter()
            .map(|r| (r.clone(), ProbabilisticCalendar::always_available(g)))
            .collect();
        let fits = fit_processing_times(&log, &cals, 20).unwrap();
        let key = |r: &str| (r.to_string(), "Review".to_string());
        assert_eq!(fits[&key("rare")], fits[&key("near")]);
        assert_ne!(fits[&key("near")], fits[&key("far")]);
    }

    #[test]
    fn no_fitted_sibling_falls_back_to_activity_pool() {
        let log = single_event_log(&[
            ("ann", monday(0, 9, 0), monday(0, 9, 30)),
            ("bob", monday(0, 10, 0), monday(0, 10, 30)),
        ]);
        let g = TimeGranularity::new(60).unwrap();
        let cals: BTreeMap<String, ProbabilisticCalendar> = ["ann", "bob"]
            .iter()
            .map(|r| (r.to_string(), ProbabilisticCalendar::always_available(g)))
            .collect();
        let fits = fit_processing_times(&log, &cals, 5).unwrap();
        assert_eq!(fits[&("ann".into(), "Review".into())], DistributionSpec::Fixed { value: 1800.0 });
        let partial: BTreeMap<_, _> = cals.into_iter().take(1).collect();
        assert!(matches!(
            fit_processing_times(&log, &partial, 5),
            Err(Error::UnknownResource(r)) if r == "bob"
        ));
    }
}
