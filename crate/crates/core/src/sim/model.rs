//! Simulation model and its JSON representation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::calendar::{
    AvailabilityMode, ProbabilisticCalendar, RecurringSlots, SlotPattern, TimeGranularity,
    WeeklySchedule,
};
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};
use crate::multitask::{LocalMultitask, Mdpd, MultitaskProfile};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_NODE_VISITS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Start,
    End,
    Task,
    Xor,
    And,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: NodeKind,
    /// Activity label of a task; defaults to the id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Node {
            id: id.into(),
            kind,
            name: None,
        }
    }

    pub fn task(id: impl Into<String>, activity: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Task,
            name: Some(activity.into()),
        }
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub source: String,
    pub target: String,
}

impl Edge {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        Edge {
            id: id.into(),
            source: source.into(),
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProcessGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ProcessGraph {
    /// Activity labels of all task nodes.
    pub fn activities(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Task)
            .map(|n| n.label().to_string())
            .collect()
    }

    /// Checks structure: unique ids, one start, at least one end, tasks with
    /// exactly one incoming and one outgoing flow, every node reachable from
    /// the start and able to reach an end.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Model(msg));
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return bad(format!("duplicate node id `{}`", n.id));
            }
        }
        let mut edge_ids = BTreeSet::new();
        let mut out = vec![Vec::new(); self.nodes.len()];
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if !edge_ids.insert(e.id.as_str()) {
                return bad(format!("duplicate edge id `{}`", e.id));
            }
            let (Some(&s), Some(&t)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) else {
                return bad(format!("edge `{}` references an unknown node", e.id));
            };
            out[s].push(t);
            inc[t].push(s);
        }
        let starts: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == NodeKind::Start)
            .collect();
        if starts.len() != 1 {
            return bad(format!("expected one start node, found {}", starts.len()));
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::End) {
            return bad("no end node".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let (ins, outs) = (inc[i].len(), out[i].len());
            let ok = match n.kind {
                NodeKind::Start => ins == 0 && outs == 1,
                NodeKind::End => outs == 0,
                NodeKind::Task => ins == 1 && outs == 1,
                NodeKind::Xor | NodeKind::And => ins >= 1 && outs >= 1,
            };
            if !ok {
                return bad(format!(
                    "node `{}` has {ins} incoming and {outs} outgoing flows, which its type does not allow",
                    n.id
                ));
            }
        }
        let reach = |from: Vec<usize>, adj: &[Vec<usize>]| {
            let mut seen = vec![false; adj.len()];
            let mut queue: VecDeque<usize> = from.into();
            for &i in &queue {
                seen[i] = true;
            }
            while let Some(i) = queue.pop_front() {
                for &j in &adj[i] {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen
        };
        let forward = reach(starts, &out);
        if let Some(i) = forward.iter().position(|s| !s) {
            return bad(format!("node `{}` is unreachable from the start", self.nodes[i].id));
        }
        let ends: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == NodeKind::End)
            .collect();
        let backward = reach(ends, &inc);
        if let Some(i) = backward.iter().position(|s| !s) {
            return bad(format!("node `{}` cannot reach an end", self.nodes[i].id));
        }
        Ok(())
    }
}

/// How case creation instants are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Cumulative inter-arrival draws.
    InterArrival(DistributionSpec),
    /// Groups of simultaneous arrivals at fixed times of day.
    Batched {
        /// Minutes after midnight, written "HH:MM".
        #[serde(with = "hhmm_list")]
        times_of_day: Vec<u32>,
        batch_size: usize,
    },
}

/// A resource's capabilities and behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFile", into = "ProfileFile")]
pub struct ResourceProfile {
    pub activities: BTreeSet<String>,
    pub perf: BTreeMap<String, DistributionSpec>,
    pub calendar: ProbabilisticCalendar,
    pub multitask: MultitaskProfile,
    pub cost_per_hour: f64,
}

impl ResourceProfile {
    /// Always available, single-task, one fixed duration per activity.
    pub fn new(perf: BTreeMap<String, DistributionSpec>) -> Self {
        ResourceProfile {
            activities: perf.keys().cloned().collect(),
            perf,
            calendar: ProbabilisticCalendar::always_available(
                TimeGranularity::new(60).expect("60 divides a day"),
            ),
            multitask: MultitaskProfile::default(),
            cost_per_hour: 0.0,
        }
    }

    pub fn with_calendar(mut self, calendar: ProbabilisticCalendar) -> Self {
        self.calendar = calendar;
        self
    }

    pub fn with_multitask(mut self, multitask: MultitaskProfile) -> Self {
        self.multitask = multitask;
        self
    }

    pub fn can_execute(&self, activity: &str) -> bool {
        self.activities.contains(activity)
    }
}

/// Calendar section of a resource in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarFile {
    pub granule_minutes: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub start_offset_minutes: u32,
    /// Custom recurring slots; weekdays when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<SlotPattern>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_abs: Option<Vec<Vec<f64>>>,
    /// Defaults to `p_abs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_rel: Option<Vec<Vec<f64>>>,
    /// On/off weekly windows instead of probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crisp: Option<WeeklySchedule>,
}

fn is_zero(x: &u32) -> bool {
    *x == 0
}

fn slots_from(patterns: Option<Vec<SlotPattern>>) -> Result<RecurringSlots> {
    match patterns {
        None => Ok(RecurringSlots::Weekdays),
        Some(p) => RecurringSlots::custom(p),
    }
}

fn slots_to(slots: &RecurringSlots) -> Option<Vec<SlotPattern>> {
    match slots {
        RecurringSlots::Weekdays => None,
        RecurringSlots::Custom(p) => Some(p.clone()),
    }
}

impl CalendarFile {
    pub fn build(self) -> Result<ProbabilisticCalendar> {
        let granularity = TimeGranularity::with_offset(self.start_offset_minutes, self.granule_minutes)?;
        match (self.crisp, self.p_abs) {
            (Some(schedule), None) => {
                if self.slots.is_some() {
                    return Err(Error::Model("crisp calendars use weekday slots".into()));
                }
                ProbabilisticCalendar::crisp(granularity, &schedule)
            }
            (None, Some(p_abs)) => {
                let p_rel = self.p_rel.unwrap_or_else(|| p_abs.clone());
                ProbabilisticCalendar::new(granularity, slots_from(self.slots)?, p_abs, p_rel)
            }
            _ => Err(Error::Model(
                "a calendar needs exactly one of `p_abs` or `crisp`".into(),
            )),
        }
    }
}

impl From<&ProbabilisticCalendar> for CalendarFile {
    fn from(cal: &ProbabilisticCalendar) -> Self {
        CalendarFile {
            granule_minutes: cal.granularity().granule_minutes(),
            start_offset_minutes: cal.granularity().start_offset_minutes(),
            slots: slots_to(cal.slots()),
            p_abs: Some(cal.p_abs().to_vec()),
            p_rel: Some(cal.p_rel().to_vec()),
            crisp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFile {
    pub granule_minutes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<SlotPattern>>,
    /// `[slot, granule, [p1..pn]]`; unlisted cells are single-task.
    pub cells: Vec<(usize, usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultitaskFile {
    Global(Vec<f64>),
    Local(LocalFile),
}

impl MultitaskFile {
    fn build(self) -> Result<MultitaskProfile> {
        match self {
            MultitaskFile::Global(p) => Ok(MultitaskProfile::Global(Mdpd::from_probabilities(p)?)),
            MultitaskFile::Local(l) => {
                let granularity = TimeGranularity::new(l.granule_minutes)?;
                let mut local = LocalMultitask::single_task(granularity, slots_from(l.slots)?);
                for (slot, granule, p) in l.cells {
                    local.set_cell(slot, granule, Mdpd::from_probabilities(p)?)?;
                }
                Ok(MultitaskProfile::Local(local))
            }
        }
    }
}

impl From<&MultitaskProfile> for Option<MultitaskFile> {
    fn from(m: &MultitaskProfile) -> Self {
        match m {
            MultitaskProfile::Global(mdpd) if mdpd.is_single_task() => None,
            MultitaskProfile::Global(mdpd) => Some(MultitaskFile::Global(mdpd.probs().to_vec())),
            MultitaskProfile::Local(l) => Some(MultitaskFile::Local(LocalFile {
                granule_minutes: l.granularity().granule_minutes(),
                slots: slots_to(l.slots()),
                cells: l
                    .cells()
                    .filter(|(_, _, m)| !m.is_single_task())
                    .map(|(s, g, m)| (s, g, m.probs().to_vec()))
                    .collect(),
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub activities: BTreeSet<String>,
    pub perf: BTreeMap<String, DistributionSpec>,
    /// Always available when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calendar: Option<CalendarFile>,
    /// Single-task when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multitask: Option<MultitaskFile>,
    #[serde(default)]
    pub cost_per_hour: f64,
}

impl TryFrom<ProfileFile> for ResourceProfile {
    type Error = Error;

    fn try_from(f: ProfileFile) -> Result<Self> {
        let calendar = match f.calendar {
            Some(c) => c.build()?,
            None => ProbabilisticCalendar::always_available(TimeGranularity::new(60)?),
        };
        let multitask = match f.multitask {
            Some(m) => m.build()?,
            None => MultitaskProfile::default(),
        };
        Ok(ResourceProfile {
            activities: f.activities,
            perf: f.perf,
            calendar,
            multitask,
            cost_per_hour: f.cost_per_hour,
        })
    }
}

impl From<ResourceProfile> for ProfileFile {
    fn from(p: ResourceProfile) -> Self {
        ProfileFile {
            calendar: Some(CalendarFile::from(&p.calendar)),
            multitask: (&p.multitask).into(),
            activities: p.activities,
            perf: p.perf,
            cost_per_hour: p.cost_per_hour,
        }
    }
}

fn default_max_visits() -> usize {
    DEFAULT_MAX_NODE_VISITS
}

/// Everything needed to run a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationModel {
    pub schema_version: u32,
    /// Earliest instant a case may be created.
    pub start: DateTime<Utc>,
    pub case_count: usize,
    pub graph: ProcessGraph,
    /// Probability of each flow leaving an exclusive split.
    #[serde(default)]
    pub branching: BTreeMap<String, f64>,
    pub arrival: ArrivalModel,
    /// Windows in which cases may be created.
    pub arrival_calendar: WeeklySchedule,
    #[serde(default)]
    pub availability_mode: AvailabilityMode,
    pub resources: BTreeMap<String, ResourceProfile>,
    #[serde(default = "default_max_visits")]
    pub max_node_visits: usize,
}

impl SimulationModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: SimulationModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn capable_resources(&self, activity: &str) -> Vec<&str> {
        self.resources
            .iter()
            .filter(|(_, p)| p.can_execute(activity))
            .map(|(r, _)| r.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Model(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.case_count == 0 {
            return bad("case_count must be positive".into());
        }
        if self.max_node_visits == 0 {
            return bad("max_node_visits must be positive".into());
        }
        self.graph.validate()?;

        let kinds: HashMap<&str, NodeKind> =
            self.graph.nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
        let mut splits: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.graph.edges {
            if kinds[e.source.as_str()] == NodeKind::Xor {
                splits.entry(&e.source).or_default().push(&e.id);
            }
        }
        let mut covered = BTreeSet::new();
        for (node, edges) in &splits {
            if edges.len() < 2 {
                continue;
            }
            let mut total = 0.0;
            for e in edges {
                let Some(&p) = self.branching.get(*e) else {
                    return bad(format!("flow `{e}` leaving exclusive gateway `{node}` has no probability"));
                };
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("probability of flow `{e}` is outside [0, 1]"));
                }
                total += p;
                covered.insert(*e);
            }
            if (total - 1.0).abs() > 1e-9 {
                return bad(format!("probabilities leaving `{node}` sum to {total}, not 1"));
            }
        }
        if let Some(extra) = self.branching.keys().find(|k| !covered.contains(k.as_str())) {
            return bad(format!("branching probability given for `{extra}`, which is not an exclusive split flow"));
        }

        match &self.arrival {
            ArrivalModel::InterArrival(d) => d.validate()?,
            ArrivalModel::Batched {
                times_of_day,
                batch_size,
            } => {
                if times_of_day.is_empty() || *batch_size == 0 {
                    return bad("batched arrivals need times of day and a positive batch size".into());
                }
            }
        }
        if self.arrival_calendar.is_empty() {
            return bad("arrival calendar has no open window".into());
        }

        for (name, p) in &self.resources {
            if let Some(a) = p.perf.keys().find(|a| !p.activities.contains(*a)) {
                return bad(format!("resource `{name}` has a duration for `{a}` but cannot execute it"));
            }
            if let Some(a) = p.activities.iter().find(|a| !p.perf.contains_key(*a)) {
                return bad(format!("resource `{name}` can execute `{a}` but has no duration for it"));
            }
            for d in p.perf.values() {
                d.validate()?;
            }
            if !(p.cost_per_hour.is_finite() && p.cost_per_hour >= 0.0) {
                return bad(format!("resource `{name}` has a negative cost"));
            }
        }
        for a in self.graph.activities() {
            if self.capable_resources(&a).is_empty() {
                return Err(Error::NoCapableResource(a));
            }
        }
        Ok(())
    }
}

/// Standalone calendar document with the same per-resource schema as the
/// model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarDocument {
    pub schema_version: u32,
    pub calendars: BTreeMap<String, CalendarFile>,
}

impl CalendarDocument {
    pub fn new(calendars: &BTreeMap<String, ProbabilisticCalendar>) -> Self {
        CalendarDocument {
            schema_version: SCHEMA_VERSION,
            calendars: calendars
                .iter()
                .map(|(r, c)| (r.clone(), CalendarFile::from(c)))
                .collect(),
        }
    }
}

mod hhmm_list {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(minutes: &[u32], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(minutes.iter().map(|m| format!("{:02}:{:02}", m / 60, m % 60)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u32>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| {
                let (h, m) = t
                    .split_once(':')
                    .ok_or_else(|| D::Error::custom(format!("time `{t}` is not HH:MM")))?;
                let h: u32 = h.parse().map_err(D::Error::custom)?;
                let m: u32 = m.parse().map_err(D::Error::custom)?;
                if h >= 24 || m >= 60 {
                    return Err(D::Error::custom(format!("time `{t}` out of range")));
                }
                Ok(h * 60 + m)
            })
            .collect()
    }
}
