//! Event logs: events grouped into traces, enablement times and
//! chronological splitting.

mod csv_io;

use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};

pub use csv_io::{parse_csv_log, read_csv_log, write_csv_log, write_csv_path, ColumnMap};

/// One activity instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub resource: String,
    /// `None` until supplied by the input or derived by
    /// [`EventLog::with_enabling_times`].
    pub enabled_at: Option<DateTime<Utc>>,
    pub started_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
}

impl Event {
    pub fn new(
        case_id: impl Into<String>,
        activity: impl Into<String>,
        resource: impl Into<String>,
        started_at: DateTime<Utc>,
        completed_at: DateTime<Utc>,
    ) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            resource: resource.into(),
            enabled_at: None,
            started_at,
            completed_at,
        }
    }

    pub fn with_enabled(mut self, enabled_at: DateTime<Utc>) -> Self {
        self.enabled_at = Some(enabled_at);
        self
    }

    /// Enablement time, falling back to the start when not yet known.
    pub fn enabled(&self) -> DateTime<Utc> {
        self.enabled_at.unwrap_or(self.started_at)
    }

    pub fn processing_time(&self) -> Duration {
        self.completed_at - self.started_at
    }
}

/// Events of one case, ordered by start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
    arrival_at: DateTime<Utc>,
    explicit_arrival: bool,
}

impl Trace {
    /// Builds a trace. The arrival is `explicit_arrival` when given, otherwise
    /// the earliest known enablement or start among the events.
    pub fn new(
        case_id: impl Into<String>,
        mut events: Vec<Event>,
        explicit_arrival: Option<DateTime<Utc>>,
    ) -> Result<Self> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(Error::Argument(format!("trace `{case_id}` has no events")));
        }
        if let Some(e) = events.iter().find(|e| e.case_id != case_id) {
            return Err(Error::Argument(format!(
                "event of case `{}` placed in trace `{case_id}`",
                e.case_id
            )));
        }
        sort_events(&mut events);
        let arrival_at = explicit_arrival.unwrap_or_else(|| {
            events
                .iter()
                .map(|e| e.enabled().min(e.started_at))
                .min()
                .expect("non-empty")
        });
        Ok(Trace {
            case_id,
            events,
            arrival_at,
            explicit_arrival: explicit_arrival.is_some(),
        })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn arrival_at(&self) -> DateTime<Utc> {
        self.arrival_at
    }

    pub fn has_explicit_arrival(&self) -> bool {
        self.explicit_arrival
    }

    pub fn first_start(&self) -> DateTime<Utc> {
        self.events[0].started_at
    }

    pub fn last_completion(&self) -> DateTime<Utc> {
        self.events
            .iter()
            .map(|e| e.completed_at)
            .max()
            .expect("non-empty")
    }

    /// Last completion minus first start.
    pub fn cycle_time(&self) -> Duration {
        self.last_completion() - self.first_start()
    }

    pub(crate) fn map_events(
        &self,
        arrival: Option<DateTime<Utc>>,
        f: impl FnMut(&Event) -> Event,
    ) -> Trace {
        let events: Vec<Event> = self.events.iter().map(f).collect();
        Trace::new(self.case_id.clone(), events, arrival).expect("same shape as source trace")
    }
}

fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        (a.started_at, a.completed_at, &a.activity, &a.resource).cmp(&(
            b.started_at,
            b.completed_at,
            &b.activity,
            &b.resource,
        ))
    });
}

/// A set of traces plus the resources and activities they mention.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    traces: Vec<Trace>,
    resources: BTreeSet<String>,
    activities: BTreeSet<String>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        let mut resources = BTreeSet::new();
        let mut activities = BTreeSet::new();
        for e in traces.iter().flat_map(|t| t.events.iter()) {
            if !resources.contains(&e.resource) {
                resources.insert(e.resource.clone());
            }
            if !activities.contains(&e.activity) {
                activities.insert(e.activity.clone());
            }
        }
        EventLog {
            traces,
            resources,
            activities,
        }
    }

    /// Groups events by case (in order of first appearance) and drops exact
    /// duplicates.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<Event>> = HashMap::new();
        let mut seen: HashSet<Event> = HashSet::new();
        for e in events {
            if !seen.insert(e.clone()) {
                continue;
            }
            let bucket = grouped.entry(e.case_id.clone()).or_insert_with(|| {
                order.push(e.case_id.clone());
                Vec::new()
            });
            bucket.push(e);
        }
        let traces = order
            .into_iter()
            .map(|case| {
                let events = grouped.remove(&case).expect("grouped");
                Trace::new(case, events, None)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EventLog::new(traces))
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn resources(&self) -> &BTreeSet<String> {
        &self.resources
    }

    pub fn activities(&self) -> &BTreeSet<String> {
        &self.activities
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.traces.iter().flat_map(|t| t.events.iter())
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Fills in missing enablement times.
    ///
    /// An event is enabled at the latest completion among events of its trace
    /// that started strictly before it, or at the case arrival when there is
    /// none, and never after its own start. Supplied enablement times are kept.
    pub fn with_enabling_times(&self) -> EventLog {
        let traces = self
            .traces
            .iter()
            .map(|t| {
                let arrival = t.arrival_at;
                let events = t
                    .events
                    .iter()
                    .map(|e| {
                        if e.enabled_at.is_some() {
                            return e.clone();
                        }
                        let enabled = t
                            .events
                            .iter()
                            .filter(|p| p.started_at < e.started_at)
                            .map(|p| p.completed_at)
                            .fold(arrival, DateTime::max)
                            .min(e.started_at);
                        e.clone().with_enabled(enabled)
                    })
                    .collect();
                Trace {
                    case_id: t.case_id.clone(),
                    events,
                    arrival_at: t.arrival_at,
                    explicit_arrival: t.explicit_arrival,
                }
            })
            .collect();
        EventLog::new(traces)
    }

    /// Traces sorted by arrival; the first `⌈fraction·N⌉` go left, the rest
    /// right.
    pub fn temporal_split(&self, fraction: f64) -> Result<(EventLog, EventLog)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split fraction {fraction} outside (0, 1)"
            )));
        }
        if self.traces.len() < 2 {
            return Err(Error::Argument(format!(
                "cannot split a log with {} trace(s)",
                self.traces.len()
            )));
        }
        let mut sorted: Vec<&Trace> = self.traces.iter().collect();
        sorted.sort_by(|a, b| (a.arrival_at, &a.case_id).cmp(&(b.arrival_at, &b.case_id)));
        let n = sorted.len();
        let cut = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
        let left = sorted[..cut].iter().map(|t| (*t).clone()).collect();
        let right = sorted[cut..].iter().map(|t| (*t).clone()).collect();
        Ok((EventLog::new(left), EventLog::new(right)))
    }

    /// Keeps only the traces accepted by `keep`.
    pub fn filter_traces(&self, mut keep: impl FnMut(&Trace) -> bool) -> EventLog {
        EventLog::new(self.traces.iter().filter(|t| keep(t)).cloned().collect())
    }

    /// Case arrival instants in trace order.
    pub fn arrivals(&self) -> Vec<DateTime<Utc>> {
        self.traces.iter().map(|t| t.arrival_at).collect()
    }

    /// Earliest and latest datetime recorded anywhere in the log.
    pub fn span(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        let lo = self.events().map(|e| e.enabled().min(e.started_at)).min()?;
        let hi = self.events().map(|e| e.completed_at).max()?;
        Some((lo, hi))
    }

    /// Events grouped by resource, in trace order.
    pub fn events_by_resource(&self) -> std::collections::BTreeMap<&str, Vec<&Event>> {
        let mut map: std::collections::BTreeMap<&str, Vec<&Event>> = Default::default();
        for e in self.events() {
            map.entry(e.resource.as_str()).or_default().push(e);
        }
        map
    }
}
