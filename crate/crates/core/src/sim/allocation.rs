//! Probabilistic resource allocation.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::arrivals::seconds;
use super::model::{ResourceProfile, SimulationModel};
use crate::calendar::AvailabilitySampler;
use crate::error::{Error, Result};
use crate::multitask::can_multitask;

/// Outcome of assigning one activity instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub resource: usize,
    pub start: DateTime<Utc>,
    pub completion: DateTime<Utc>,
}

/// Anything that can place an enabled activity instance on a resource.
pub trait Allocator {
    fn resource_name(&self, index: usize) -> &str;

    fn allocate(
        &mut self,
        activity: &str,
        enabled: DateTime<Utc>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Allocation>;
}

/// Resources ordered by the instant from which they accept new work. Every
/// resource is present exactly once.
#[derive(Debug, Clone)]
pub struct ResourceQueue {
    order: BTreeSet<(DateTime<Utc>, usize)>,
    at: Vec<DateTime<Utc>>,
}

impl ResourceQueue {
    pub fn new(resources: usize, from: DateTime<Utc>) -> Self {
        ResourceQueue {
            order: (0..resources).map(|r| (from, r)).collect(),
            at: vec![from; resources],
        }
    }

    pub fn len(&self) -> usize {
        self.at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.at.is_empty()
    }

    pub fn time_of(&self, resource: usize) -> DateTime<Utc> {
        self.at[resource]
    }

    /// Resources accepting work at or before `t`, earliest first.
    pub fn ready_by(&self, t: DateTime<Utc>) -> impl Iterator<Item = usize> + '_ {
        self.order
            .range(..=(t, usize::MAX))
            .map(|&(_, r)| r)
    }

    /// Earliest resource satisfying `keep`.
    pub fn earliest(&self, mut keep: impl FnMut(usize) -> bool) -> Option<usize> {
        self.order.iter().map(|&(_, r)| r).find(|&r| keep(r))
    }

    pub fn set(&mut self, resource: usize, t: DateTime<Utc>) {
        self.order.remove(&(self.at[resource], resource));
        self.at[resource] = t;
        self.order.insert((t, resource));
    }
}

/// Allocation under probabilistic calendars and multitasking.
///
/// Candidates are the capable resources already free at enablement; one is
/// picked uniformly. Without candidates the capable resource that frees up
/// first is used. In-flight completions at or before the new start are
/// released before the multitasking gate decides whether the resource keeps
/// accepting work.
pub struct ProbabilisticAllocator<'m> {
    names: Vec<&'m str>,
    profiles: Vec<&'m ResourceProfile>,
    capable: BTreeMap<&'m str, Vec<usize>>,
    samplers: Vec<AvailabilitySampler<'m>>,
    queue: ResourceQueue,
    in_flight: Vec<Vec<DateTime<Utc>>>,
}

impl<'m> ProbabilisticAllocator<'m> {
    /// Seeds one availability sampler per resource from `rng`, in resource
    /// name order.
    pub fn new(model: &'m SimulationModel, rng: &mut ChaCha8Rng) -> Self {
        let names: Vec<&str> = model.resources.keys().map(String::as_str).collect();
        let profiles: Vec<&ResourceProfile> = model.resources.values().collect();
        let mut capable: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, p) in profiles.iter().enumerate() {
            for a in &p.activities {
                capable.entry(a.as_str()).or_default().push(i);
            }
        }
        let samplers = profiles
            .iter()
            .map(|p| AvailabilitySampler::new(&p.calendar, model.availability_mode, rng.random()))
            .collect();
        ProbabilisticAllocator {
            queue: ResourceQueue::new(names.len(), DateTime::<Utc>::MIN_UTC),
            in_flight: vec![Vec::new(); names.len()],
            names,
            profiles,
            capable,
            samplers,
        }
    }

    pub fn queue(&self) -> &ResourceQueue {
        &self.queue
    }

    pub fn index_of(&self, resource: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == resource)
    }

    /// Instances still running on `resource` after `t`.
    pub fn load_at(&self, resource: usize, t: DateTime<Utc>) -> usize {
        self.in_flight[resource].iter().filter(|&&c| c > t).count()
    }
}

impl Allocator for ProbabilisticAllocator<'_> {
    fn resource_name(&self, index: usize) -> &str {
        self.names[index]
    }

    fn allocate(
        &mut self,
        activity: &str,
        enabled: DateTime<Utc>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Allocation> {
        let capable = self
            .capable
            .get(activity)
            .ok_or_else(|| Error::NoCapableResource(activity.to_string()))?;
        let is_capable = |r: usize| capable.binary_search(&r).is_ok();
        let candidates: Vec<usize> = self.queue.ready_by(enabled).filter(|&r| is_capable(r)).collect();
        let r = if candidates.is_empty() {
            self.queue
                .earliest(is_capable)
                .expect("capable resources are queued")
        } else {
            candidates[rng.random_range(0..candidates.len())]
        };

        let queued = self.queue.time_of(r);
        let sampler = &mut self.samplers[r];
        let start = sampler.next_available_time(enabled.max(queued))?;
        let profile = self.profiles[r];
        let pt = profile
            .perf
            .get(activity)
            .ok_or_else(|| Error::Model(format!("resource `{}` has no duration for `{activity}`", self.names[r])))?
            .sample(rng);
        let completion = sampler.adjust_processing_time(start, seconds(pt))?;

        let running = &mut self.in_flight[r];
        running.retain(|&c| c > start);
        running.push(completion);
        let load = running.len();
        if !can_multitask(profile.multitask.mdpd_at(start), load, rng) {
            let busy_until = *running.iter().max().expect("just pushed");
            let free = sampler.next_available_time(busy_until)?;
            self.queue.set(r, free);
        }
        Ok(Allocation {
            resource: r,
            start,
            completion,
        })
    }
}
