//! Building a complete simulation model from an event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::calendar::{AvailabilityMode, RecurringSlots, TimeGranularity, WeeklyInterval, WeeklySchedule};
use crate::calendar_discovery::{discover_calendars, fit_processing_times};
use crate::distribution::{best_fit_distribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::multitask::{discover_global, discover_local, MultitaskProfile};
use crate::sim::{
    ArrivalModel, Edge, Node, NodeKind, ProcessGraph, ResourceProfile, SimulationModel,
    DEFAULT_MAX_NODE_VISITS, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultitaskMode {
    #[default]
    None,
    Global,
    Local,
}

impl FromStr for MultitaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MultitaskMode::None),
            "global" => Ok(MultitaskMode::Global),
            "local" => Ok(MultitaskMode::Local),
            other => Err(Error::Argument(format!("unknown multitask mode `{other}`"))),
        }
    }
}

impl fmt::Display for MultitaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MultitaskMode::None => "none",
            MultitaskMode::Global => "global",
            MultitaskMode::Local => "local",
        })
    }
}

/// Discovery parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub granule_minutes: u32,
    pub beta: f64,
    pub kappa: usize,
    pub multitask: MultitaskMode,
    /// Granule size for local multitasking; the calendar granule when unset.
    pub local_granule_minutes: Option<u32>,
    pub availability_mode: AvailabilityMode,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            granule_minutes: 60,
            beta: 0.5,
            kappa: 20,
            multitask: MultitaskMode::None,
            local_granule_minutes: None,
            availability_mode: AvailabilityMode::Max,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        TimeGranularity::new(self.granule_minutes)?;
        if let Some(m) = self.local_granule_minutes {
            TimeGranularity::new(m)?;
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Argument(format!("beta {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

/// Resource profiles (calendar, durations, multitasking) learned from `log`.
pub fn discover_profiles(log: &EventLog, cfg: &DiscoveryConfig) -> Result<BTreeMap<String, ResourceProfile>> {
    cfg.validate()?;
    let calendars = discover_calendars(log, cfg.granule_minutes, cfg.beta)?;
    let perf = fit_processing_times(log, &calendars, cfg.kappa)?;
    let mut multitask: BTreeMap<String, MultitaskProfile> = match cfg.multitask {
        MultitaskMode::None => BTreeMap::new(),
        MultitaskMode::Global => discover_global(log)
            .into_iter()
            .map(|(r, m)| (r, MultitaskProfile::Global(m)))
            .collect(),
        MultitaskMode::Local => {
            let g = TimeGranularity::new(cfg.local_granule_minutes.unwrap_or(cfg.granule_minutes))?;
            discover_local(log, g, &RecurringSlots::Weekdays)
                .into_iter()
                .map(|(r, m)| (r, MultitaskProfile::Local(m)))
                .collect()
        }
    };
    let mut by_resource: BTreeMap<String, BTreeMap<String, DistributionSpec>> = BTreeMap::new();
    for ((r, a), d) in perf {
        by_resource.entry(r).or_default().insert(a, d);
    }
    Ok(calendars
        .into_iter()
        .map(|(r, calendar)| {
            let perf = by_resource.remove(&r).unwrap_or_default();
            let profile = ResourceProfile::new(perf)
                .with_calendar(calendar)
                .with_multitask(multitask.remove(&r).unwrap_or_default());
            (r, profile)
        })
        .collect())
}

/// Directly-follows process graph with exclusive choices weighted by the
/// observed successor frequencies.
///
/// Each activity gets a merge gateway before it and a split gateway after
/// it; the split leads to the merge of every observed successor or to the
/// end.
pub fn directly_follows_graph(log: &EventLog) -> (ProcessGraph, BTreeMap<String, f64>) {
    const END: &str = "";
    let mut follows: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for t in log.traces() {
        let mut prev = None;
        for e in t.events() {
            *follows
                .entry(prev.unwrap_or(END))
                .or_default()
                .entry(e.activity.as_str())
                .or_insert(0) += 1;
            prev = Some(e.activity.as_str());
        }
        *follows.entry(prev.unwrap_or(END)).or_default().entry(END).or_insert(0) += 1;
    }

    let mut nodes = vec![Node::new("start", NodeKind::Start), Node::new("split:start", NodeKind::Xor)];
    let mut edges = vec![Edge::new("f0", "start", "split:start")];
    for a in log.activities() {
        nodes.push(Node::new(format!("merge:{a}"), NodeKind::Xor));
        nodes.push(Node::task(format!("task:{a}"), a.clone()));
        nodes.push(Node::new(format!("split:{a}"), NodeKind::Xor));
        let n = edges.len();
        edges.push(Edge::new(format!("f{n}"), format!("merge:{a}"), format!("task:{a}")));
        edges.push(Edge::new(format!("f{}", n + 1), format!("task:{a}"), format!("split:{a}")));
    }
    nodes.push(Node::new("end", NodeKind::End));

    let mut branching = BTreeMap::new();
    for (from, succ) in &follows {
        let source = if from.is_empty() { "split:start".to_string() } else { format!("split:{from}") };
        let total: u64 = succ.values().sum();
        for (to, count) in succ {
            let id = format!("f{}", edges.len());
            let target = if to.is_empty() { "end".to_string() } else { format!("merge:{to}") };
            edges.push(Edge::new(&id, &source, target));
            if succ.len() > 1 {
                branching.insert(id, *count as f64 / total as f64);
            }
        }
    }
    (ProcessGraph { nodes, edges }, branching)
}

/// Hourly weekday windows that saw at least one arrival, merged into runs.
pub fn arrival_windows(arrivals: &[DateTime<Utc>]) -> WeeklySchedule {
    let mut cells: BTreeSet<(u32, u32)> = BTreeSet::new();
    for a in arrivals {
        cells.insert((a.weekday().num_days_from_monday(), a.hour()));
    }
    let mut out = Vec::new();
    let mut iter = cells.into_iter().peekable();
    while let Some((day, first)) = iter.next() {
        let mut last = first;
        while let Some(&(d, h)) = iter.peek() {
            if d == day && h == last + 1 {
                last = h;
                iter.next();
            } else {
                break;
            }
        }
        let wd = Weekday::try_from(day as u8).expect("0..7");
        out.push(WeeklyInterval::new(&[wd], first * 60, (last + 1) * 60));
    }
    WeeklySchedule(out)
}

/// Inter-arrival distribution fitted to the gaps between sorted arrivals.
pub fn inter_arrival_distribution(arrivals: &[DateTime<Utc>]) -> Result<DistributionSpec> {
    let mut sorted = arrivals.to_vec();
    sorted.sort();
    let gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| (w[1] - w[0]).num_milliseconds() as f64 / 1000.0)
        .collect();
    if gaps.is_empty() {
        return Ok(DistributionSpec::Fixed { value: 0.0 });
    }
    best_fit_distribution(&gaps)
}

/// Learns a simulation model from `log`.
///
/// With a template the control flow, branching, arrival process and case
/// count are taken from it and only the resources are learned; otherwise a
/// directly-follows graph and an arrival process fitted to the log are used.
pub fn discover_model(
    log: &EventLog,
    cfg: &DiscoveryConfig,
    template: Option<&SimulationModel>,
) -> Result<SimulationModel> {
    if log.is_empty() {
        return Err(Error::Argument("cannot discover a model from an empty log".into()));
    }
    let resources = discover_profiles(log, cfg)?;
    let model = match template {
        Some(t) => SimulationModel {
            resources,
            availability_mode: cfg.availability_mode,
            ..t.clone()
        },
        None => {
            let (graph, branching) = directly_follows_graph(log);
            let arrivals = log.arrivals();
            SimulationModel {
                schema_version: SCHEMA_VERSION,
                start: *arrivals.iter().min().expect("non-empty log"),
                case_count: log.traces().len(),
                graph,
                branching,
                arrival: ArrivalModel::InterArrival(inter_arrival_distribution(&arrivals)?),
                arrival_calendar: arrival_windows(&arrivals),
                availability_mode: cfg.availability_mode,
                resources,
                max_node_visits: DEFAULT_MAX_NODE_VISITS,
            }
        }
    };
    model.validate()?;
    Ok(model)
}
