//! Ground-truth log generation and vacation-style perturbations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::{AvailabilityMode, AvailabilitySampler, ProbabilisticCalendar};
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::sim::{run_cases, sample_arrivals, seconds, Allocation, Allocator, ResourceProfile, SimulationModel};

/// Maximum number of unbalanced allocation groups per profile.
pub const UNBALANCED_GROUPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    #[default]
    Balanced,
    Unbalanced,
}

impl FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Balance::Balanced),
            "unbalanced" => Ok(Balance::Unbalanced),
            other => Err(Error::Argument(format!("unknown balance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub balance: Balance,
    pub seed: u64,
    /// Overrides the model's case count.
    pub case_count: Option<usize>,
}

/// Calendar with every probability rounded to 0 or 1 at 0.5.
fn crisp_version(cal: &ProbabilisticCalendar, mode: AvailabilityMode) -> Result<ProbabilisticCalendar> {
    let grid: Vec<Vec<f64>> = (0..cal.slots().len())
        .map(|s| {
            (0..cal.granularity().granule_count())
                .map(|g| if cal.probability(s, g, mode) >= 0.5 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    ProbabilisticCalendar::new(*cal.granularity(), cal.slots().clone(), grid.clone(), grid)
}

/// Split of `n` sorted members into `min(6, n)` contiguous groups, with
/// group `k` (1-based) taking `k` of every `k(k+1)/2` assignments.
#[derive(Debug, Clone)]
struct GroupPlan {
    groups: Vec<Vec<usize>>,
    pattern: Vec<usize>,
    next_in_group: Vec<usize>,
    counter: usize,
}

impl GroupPlan {
    fn new(members: Vec<usize>, balance: Balance) -> Self {
        let n = members.len();
        let k = match balance {
            Balance::Balanced => 1,
            Balance::Unbalanced => n.min(UNBALANCED_GROUPS),
        };
        let groups: Vec<Vec<usize>> = (0..k)
            .map(|i| members[i * n / k..(i + 1) * n / k].to_vec())
            .collect();
        let pattern = (0..k).flat_map(|g| std::iter::repeat_n(g, g + 1)).collect();
        GroupPlan {
            next_in_group: vec![0; k],
            groups,
            pattern,
            counter: 0,
        }
    }

    fn next(&mut self) -> usize {
        let g = self.pattern[self.counter % self.pattern.len()];
        self.counter += 1;
        let members = &self.groups[g];
        let r = members[self.next_in_group[g] % members.len()];
        self.next_in_group[g] += 1;
        r
    }
}

/// Round-robin allocation with crisp, deterministic calendars. A resource
/// runs at most as many instances at once as its multitasking level allows.
struct RoundRobin<'m> {
    names: Vec<&'m str>,
    profiles: Vec<&'m ResourceProfile>,
    samplers: Vec<AvailabilitySampler<'m>>,
    in_flight: Vec<Vec<DateTime<Utc>>>,
    /// Profile plans, keyed by the profile's activity set.
    plans: BTreeMap<Vec<&'m str>, GroupPlan>,
    /// Per activity: profiles able to run it, and a rotation counter.
    routes: BTreeMap<&'m str, (Vec<Vec<&'m str>>, usize)>,
}

impl<'m> RoundRobin<'m> {
    fn new(model: &'m SimulationModel, crisp: &'m [ProbabilisticCalendar], balance: Balance) -> Self {
        let names: Vec<&str> = model.resources.keys().map(String::as_str).collect();
        let profiles: Vec<&ResourceProfile> = model.resources.values().collect();
        let mut members: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
        for (i, p) in profiles.iter().enumerate() {
            let key: Vec<&str> = p.activities.iter().map(String::as_str).collect();
            members.entry(key).or_default().push(i);
        }
        let mut routes: BTreeMap<&str, (Vec<Vec<&str>>, usize)> = BTreeMap::new();
        for key in members.keys() {
            for a in key {
                routes.entry(a).or_default().0.push(key.clone());
            }
        }
        let plans = members
            .into_iter()
            .map(|(k, m)| (k, GroupPlan::new(m, balance)))
            .collect();
        let samplers = crisp
            .iter()
            .map(|c| AvailabilitySampler::new(c, AvailabilityMode::Abs, 0))
            .collect();
        RoundRobin {
            in_flight: vec![Vec::new(); names.len()],
            names,
            profiles,
            samplers,
            plans,
            routes,
        }
    }
}

impl Allocator for RoundRobin<'_> {
    fn resource_name(&self, index: usize) -> &str {
        self.names[index]
    }

    fn allocate(
        &mut self,
        activity: &str,
        enabled: DateTime<Utc>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Allocation> {
        let (profiles, turn) = self
            .routes
            .get_mut(activity)
            .ok_or_else(|| Error::NoCapableResource(activity.to_string()))?;
        let key = &profiles[*turn % profiles.len()];
        *turn += 1;
        let r = self.plans.get_mut(key).expect("plan per profile").next();

        let cap = self.profiles[r].multitask.max_level();
        let sampler = &mut self.samplers[r];
        let running = &mut self.in_flight[r];
        let mut start = enabled;
        loop {
            start = sampler.next_available_time(start)?;
            let mut active: Vec<DateTime<Utc>> = running.iter().copied().filter(|&c| c > start).collect();
            if active.len() < cap {
                break;
            }
            active.sort();
            start = active[active.len() - cap];
        }
        let pt = self.profiles[r].perf[activity].sample(rng);
        let completion = sampler.adjust_processing_time(start, seconds(pt))?;
        running.retain(|&c| c > start);
        running.push(completion);
        Ok(Allocation {
            resource: r,
            start,
            completion,
        })
    }
}

/// Generates a ground-truth log from `model` with round-robin allocation
/// and crisp calendars (probabilities thresholded at 0.5).
///
/// Balanced mode rotates over every resource able to run an activity.
/// Unbalanced mode splits each group of resources sharing the same
/// activities into up to six groups; group `k` receives `k` of every 21
/// assignments of that group.
pub fn generate_synthetic_log(model: &SimulationModel, cfg: &GenerationConfig) -> Result<EventLog> {
    let mut model = model.clone();
    if let Some(n) = cfg.case_count {
        model.case_count = n;
    }
    model.validate()?;
    let crisp = model
        .resources
        .values()
        .map(|p| crisp_version(&p.calendar, model.availability_mode))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = sample_arrivals(&model, &mut rng)?;
    let mut allocator = RoundRobin::new(&model, &crisp, cfg.balance);
    run_cases(&model, &arrivals, &mut allocator, &mut rng)
}

/// Which part of a chronological train/test protocol is disturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Train,
    Test,
    #[serde(rename = "tnt")]
    TrainAndTest,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Scenario::Train),
            "test" => Ok(Scenario::Test),
            "tnt" => Ok(Scenario::TrainAndTest),
            other => Err(Error::Argument(format!("unknown scenario `{other}`"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Train => "train",
            Scenario::Test => "test",
            Scenario::TrainAndTest => "tnt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PerturbationMode {
    /// Every datetime from the anchor on moves forward by the break.
    Shift,
    /// Events of `resource` starting inside the break window are handed to
    /// `substitute`; timestamps stay put.
    Relabel { resource: String, substitute: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub scenario: Scenario,
    pub break_weeks: u32,
    pub train_anchor: f64,
    pub test_anchor: f64,
    pub mode: PerturbationMode,
}

impl PerturbationConfig {
    pub fn new(scenario: Scenario, break_weeks: u32) -> Self {
        PerturbationConfig {
            scenario,
            break_weeks,
            train_anchor: 0.10,
            test_anchor: 0.60,
            mode: PerturbationMode::Shift,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        match self.scenario {
            Scenario::Train => vec![self.train_anchor],
            Scenario::Test => vec![self.test_anchor],
            Scenario::TrainAndTest => vec![self.train_anchor, self.test_anchor],
        }
    }
}

/// Datetimes at the given fractions of the sorted start/completion sequence.
pub fn anchor_datetimes(log: &EventLog, fractions: &[f64]) -> Result<Vec<DateTime<Utc>>> {
    let mut all: Vec<DateTime<Utc>> = log
        .events()
        .flat_map(|e| [e.started_at, e.completed_at])
        .collect();
    if all.is_empty() {
        return Err(Error::Argument("cannot perturb an empty log".into()));
    }
    all.sort();
    let (lo, hi) = (all[0], all[all.len() - 1]);
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Argument(format!("anchor fraction {f} outside (0, 1)")));
            }
            let idx = ((f * all.len() as f64).floor() as usize).min(all.len() - 1);
            let anchor = all[idx];
            if anchor <= lo || anchor >= hi {
                return Err(Error::Argument(format!(
                    "anchor {anchor} at fraction {f} is not strictly inside the log span"
                )));
            }
            Ok(anchor)
        })
        .collect()
}

/// Simulates a resource break in a log.
pub fn inject_unavailability(log: &EventLog, cfg: &PerturbationConfig) -> Result<EventLog> {
    if cfg.break_weeks == 0 {
        return Err(Error::Argument("break must last at least one week".into()));
    }
    let anchors = anchor_datetimes(log, &cfg.fractions())?;
    let gap = Duration::weeks(cfg.break_weeks as i64);
    let traces = match &cfg.mode {
        PerturbationMode::Shift => {
            let shift = |t: DateTime<Utc>| t + gap * anchors.iter().filter(|&&a| t >= a).count() as i32;
            log.traces()
                .iter()
                .map(|t| {
                    let arrival = t.has_explicit_arrival().then(|| shift(t.arrival_at()));
                    t.map_events(arrival, |e| {
                        let mut e = e.clone();
                        e.enabled_at = e.enabled_at.map(shift);
                        e.started_at = shift(e.started_at);
                        e.completed_at = shift(e.completed_at);
                        e
                    })
                })
                .collect()
        }
        PerturbationMode::Relabel {
            resource,
            substitute,
        } => {
            if !log.resources().contains(resource) {
                return Err(Error::Argument(format!("resource `{resource}` is not in the log")));
            }
            let on_break = |t: DateTime<Utc>| anchors.iter().any(|&a| a <= t && t < a + gap);
            log.traces()
                .iter()
                .map(|t| {
                    let arrival = t.has_explicit_arrival().then(|| t.arrival_at());
                    t.map_events(arrival, |e| {
                        let mut e = e.clone();
                        if &e.resource == resource && on_break(e.started_at) {
                            e.resource = substitute.clone();
                        }
                        e
                    })
                })
                .collect()
        }
    };
    Ok(EventLog::new(traces))
}
