//! Token game driving case execution.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::allocation::{Allocator, ProbabilisticAllocator};
use super::arrivals::sample_arrivals;
use super::model::{NodeKind, SimulationModel};
use crate::error::{Error, Result};
use crate::event_log::{Event, EventLog, Trace};

struct Compiled<'m> {
    model: &'m SimulationModel,
    /// Outgoing edge indices per node, ordered by target node id.
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    target: Vec<usize>,
    probability: Vec<f64>,
    rank: Vec<usize>,
    start: usize,
}

impl<'m> Compiled<'m> {
    fn new(model: &'m SimulationModel) -> Self {
        let g = &model.graph;
        let index: HashMap<&str, usize> =
            g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut out = vec![Vec::new(); g.nodes.len()];
        let mut inc = vec![Vec::new(); g.nodes.len()];
        let mut target = Vec::with_capacity(g.edges.len());
        for (k, e) in g.edges.iter().enumerate() {
            out[index[e.source.as_str()]].push(k);
            inc[index[e.target.as_str()]].push(k);
            target.push(index[e.target.as_str()]);
        }
        for edges in &mut out {
            edges.sort_by(|&a, &b| {
                (&g.edges[a].target, &g.edges[a].id).cmp(&(&g.edges[b].target, &g.edges[b].id))
            });
        }
        let mut by_id: Vec<usize> = (0..g.nodes.len()).collect();
        by_id.sort_by(|&a, &b| g.nodes[a].id.cmp(&g.nodes[b].id));
        let mut rank = vec![0; g.nodes.len()];
        for (r, &i) in by_id.iter().enumerate() {
            rank[i] = r;
        }
        let probability = g
            .edges
            .iter()
            .map(|e| model.branching.get(&e.id).copied().unwrap_or(1.0))
            .collect();
        let start = g
            .nodes
            .iter()
            .position(|n| n.kind == NodeKind::Start)
            .expect("validated");
        Compiled {
            model,
            out,
            inc,
            target,
            probability,
            rank,
            start,
        }
    }
}

#[derive(Default)]
struct CaseState {
    visits: HashMap<usize, usize>,
    join_tokens: HashMap<usize, Vec<VecDeque<DateTime<Utc>>>>,
    events: Vec<Event>,
}

/// Pending task enablement: (time, case, node rank, sequence, node).
type Pending = Reverse<(DateTime<Utc>, usize, usize, u64, usize)>;

struct Game<'m, 'a, A: Allocator> {
    graph: Compiled<'m>,
    allocator: &'a mut A,
    cases: Vec<CaseState>,
    case_ids: Vec<String>,
    pending: BinaryHeap<Pending>,
    seq: u64,
}

impl<A: Allocator> Game<'_, '_, A> {
    fn visit(&mut self, case: usize, node: usize) -> Result<()> {
        let count = self.cases[case].visits.entry(node).or_insert(0);
        *count += 1;
        let limit = self.graph.model.max_node_visits;
        if *count > limit {
            return Err(Error::LoopLimit {
                case: self.case_ids[case].clone(),
                node: self.graph.model.graph.nodes[node].id.clone(),
                limit,
            });
        }
        Ok(())
    }

    /// Moves a token along `edge` at `time`, passing through gateways until
    /// it reaches tasks, ends or a waiting join.
    fn fire(&mut self, case: usize, edge: usize, time: DateTime<Utc>, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut stack = vec![(edge, time)];
        while let Some((e, t)) = stack.pop() {
            let node = self.graph.target[e];
            match self.graph.model.graph.nodes[node].kind {
                NodeKind::End => {}
                NodeKind::Start => unreachable!("start nodes have no incoming flows"),
                NodeKind::Task => {
                    self.visit(case, node)?;
                    self.seq += 1;
                    self.pending
                        .push(Reverse((t, case, self.graph.rank[node], self.seq, node)));
                }
                NodeKind::Xor => {
                    self.visit(case, node)?;
                    let outs = &self.graph.out[node];
                    let chosen = if outs.len() == 1 {
                        outs[0]
                    } else {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        *outs
                            .iter()
                            .find(|&&o| {
                                acc += self.graph.probability[o];
                                u < acc
                            })
                            .unwrap_or_else(|| outs.last().expect("validated"))
                    };
                    stack.push((chosen, t));
                }
                NodeKind::And => {
                    let incoming = &self.graph.inc[node];
                    let slot = incoming.iter().position(|&i| i == e).expect("edge enters node");
                    let tokens = self.cases[case]
                        .join_tokens
                        .entry(node)
                        .or_insert_with(|| vec![VecDeque::new(); incoming.len()]);
                    tokens[slot].push_back(t);
                    if tokens.iter().all(|q| !q.is_empty()) {
                        let joined = tokens
                            .iter_mut()
                            .map(|q| q.pop_front().expect("non-empty"))
                            .max()
                            .expect("at least one incoming flow");
                        self.visit(case, node)?;
                        for &o in self.graph.out[node].iter().rev() {
                            stack.push((o, joined));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn run(&mut self, arrivals: &[DateTime<Utc>], rng: &mut ChaCha8Rng) -> Result<()> {
        for (case, &arrival) in arrivals.iter().enumerate() {
            self.visit(case, self.graph.start)?;
            let first = self.graph.out[self.graph.start][0];
            self.fire(case, first, arrival, rng)?;
        }
        while let Some(Reverse((enabled, case, _, _, node))) = self.pending.pop() {
            let activity = self.graph.model.graph.nodes[node].label();
            let a = self.allocator.allocate(activity, enabled, rng)?;
            let event = Event::new(
                self.case_ids[case].clone(),
                activity,
                self.allocator.resource_name(a.resource),
                a.start,
                a.completion,
            )
            .with_enabled(enabled);
            self.cases[case].events.push(event);
            let next = self.graph.out[node][0];
            self.fire(case, next, a.completion, rng)?;
        }
        Ok(())
    }
}

/// Runs every case with the given allocator. Cases whose path contains no
/// task produce no trace.
pub fn run_cases<A: Allocator>(
    model: &SimulationModel,
    arrivals: &[DateTime<Utc>],
    allocator: &mut A,
    rng: &mut ChaCha8Rng,
) -> Result<EventLog> {
    let mut game = Game {
        graph: Compiled::new(model),
        allocator,
        cases: (0..arrivals.len()).map(|_| CaseState::default()).collect(),
        case_ids: (1..=arrivals.len()).map(|i| i.to_string()).collect(),
        pending: BinaryHeap::new(),
        seq: 0,
    };
    game.run(arrivals, rng)?;
    let traces = game
        .cases
        .into_iter()
        .zip(game.case_ids)
        .zip(arrivals)
        .filter(|((c, _), _)| !c.events.is_empty())
        .map(|((c, id), &arrival)| Trace::new(id, c.events, Some(arrival)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EventLog::new(traces))
}

/// Simulates `model.case_count` cases with arrivals drawn from the model.
pub fn simulate(model: &SimulationModel, seed: u64) -> Result<EventLog> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut allocator = ProbabilisticAllocator::new(model, &mut rng);
    let arrivals = sample_arrivals(model, &mut rng)?;
    run_cases(model, &arrivals, &mut allocator, &mut rng)
}

/// Simulates one case per given arrival instant, ignoring the model's
/// arrival process and case count.
pub fn simulate_with_arrivals(
    model: &SimulationModel,
    arrivals: &[DateTime<Utc>],
    seed: u64,
) -> Result<EventLog> {
    model.validate()?;
    let mut sorted = arrivals.to_vec();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut allocator = ProbabilisticAllocator::new(model, &mut rng);
    run_cases(model, &sorted, &mut allocator, &mut rng)
}
