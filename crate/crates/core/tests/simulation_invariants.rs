use std::collections::BTreeMap;

use chrono::{Datelike, Duration, Timelike, Weekday};
use proptest::prelude::*;
use serde_json::{json, Value};

use prosim_core::calendar_discovery::adjusted_duration;
use prosim_core::event_log::{parse_csv_log, write_csv_log, ColumnMap, EventLog};
use prosim_core::sim::{simulate, SimulationModel};

const WORKDAYS: [&str; 5] = ["Mon", "Tue", "Wed", "Thu", "Fri"];

#[derive(Debug, Clone)]
struct Setup {
    activities: usize,
    resources: usize,
    mdpd: Vec<f64>,
    crisp: bool,
    service_minutes: u32,
    gap_minutes: u32,
    cases: usize,
}

fn setup() -> impl Strategy<Value = Setup> {
    (
        1usize..4,
        1usize..4,
        prop::collection::vec(0.0f64..=1.0, 0..3),
        any::<bool>(),
        1u32..120,
        1u32..90,
        2usize..40,
    )
        .prop_map(|(activities, resources, mut tail, crisp, service_minutes, gap_minutes, cases)| {
            tail.sort_by(|a, b| b.total_cmp(a));
            let mut mdpd = vec![1.0];
            mdpd.extend(tail.into_iter().filter(|&p| p > 0.0));
            Setup {
                activities,
                resources,
                mdpd,
                crisp,
                service_minutes,
                gap_minutes,
                cases,
            }
        })
}

fn build(s: &Setup) -> SimulationModel {
    let names: Vec<String> = (0..s.activities).map(|i| format!("A{i}")).collect();
    let mut nodes = vec![json!({"id": "s", "type": "start"})];
    let mut edges = Vec::new();
    let mut prev = "s".to_string();
    for (i, name) in names.iter().enumerate() {
        let id = format!("t{i}");
        nodes.push(json!({"id": id, "type": "task", "name": name}));
        edges.push(json!({"id": format!("f{i}"), "source": prev, "target": id}));
        prev = id;
    }
    nodes.push(json!({"id": "e", "type": "end"}));
    edges.push(json!({"id": "fe", "source": prev, "target": "e"}));

    let service = s.service_minutes as f64 * 60.0;
    let perf: BTreeMap<&String, Value> = names
        .iter()
        .map(|n| (n, json!({"distribution": "uniform", "min": service / 2.0, "max": service})))
        .collect();
    let mut resources = serde_json::Map::new();
    for r in 0..s.resources {
        let mut profile = json!({"activities": names, "perf": perf});
        if s.crisp {
            profile["calendar"] = json!({
                "granule_minutes": 60,
                "crisp": [{"weekdays": WORKDAYS, "from": "09:00", "to": "17:00"}]
            });
        }
        if s.mdpd.len() > 1 {
            profile["multitask"] = json!({"global": s.mdpd});
        }
        resources.insert(format!("r{r}"), profile);
    }
    let text = json!({
        "schema_version": 1,
        "start": "2024-01-01T00:00:00Z",
        "case_count": s.cases,
        "graph": {"nodes": nodes, "edges": edges},
        "arrival": {"inter_arrival": {"distribution": "exponential", "mean": s.gap_minutes as f64 * 60.0}},
        "arrival_calendar": [{"weekdays": WORKDAYS, "from": "08:00", "to": "18:00"}],
        "resources": resources
    });
    SimulationModel::from_json(&text.to_string()).expect("valid model")
}

fn max_concurrency(log: &EventLog, resource: &str) -> usize {
    let mut points: Vec<(chrono::DateTime<chrono::Utc>, i32)> = Vec::new();
    for e in log.events().filter(|e| e.resource == resource) {
        points.push((e.started_at, 1));
        points.push((e.completed_at, -1));
    }
    points.sort();
    let (mut active, mut peak) = (0i32, 0i32);
    for (_, d) in points {
        active += d;
        peak = peak.max(active);
    }
    peak as usize
}

fn working(t: chrono::DateTime<chrono::Utc>) -> bool {
    !matches!(t.weekday(), Weekday::Sat | Weekday::Sun) && (9..17).contains(&t.hour())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_logs_respect_invariants(s in setup(), seed in 0u64..1000) {
        let m = build(&s);
        let log = simulate(&m, seed).unwrap();
        prop_assert_eq!(log.traces().len(), s.cases);
        prop_assert_eq!(log.event_count(), s.cases * s.activities);
        for e in log.events() {
            let enabled = e.enabled_at.expect("simulated events carry enablement");
            prop_assert!(enabled <= e.started_at && e.started_at <= e.completed_at);
        }
        for r in log.resources() {
            prop_assert!(max_concurrency(&log, r) <= s.mdpd.len());
        }
        if s.crisp {
            for e in log.events() {
                prop_assert!(working(e.started_at), "start {} outside working hours", e.started_at);
                prop_assert!(working(e.completed_at - Duration::milliseconds(1)));
                let worked = adjusted_duration(e, &m.resources[&e.resource].calendar);
                prop_assert!(worked <= s.service_minutes as f64 * 60.0 + 1e-3);
            }
        }
    }

    #[test]
    fn single_task_resources_never_overlap(mut s in setup(), seed in 0u64..1000) {
        s.mdpd = vec![1.0];
        let log = simulate(&build(&s), seed).unwrap();
        for (_, mut events) in log.events_by_resource() {
            events.sort_by_key(|e| e.started_at);
            for w in events.windows(2) {
                prop_assert!(w[0].completed_at <= w[1].started_at);
            }
        }
    }

    #[test]
    fn csv_round_trip_preserves_simulated_logs(s in setup(), seed in 0u64..1000) {
        let log = simulate(&build(&s), seed).unwrap();
        let mut bytes = Vec::new();
        write_csv_log(&log, &mut bytes).unwrap();
        let back = parse_csv_log(bytes.as_slice(), &ColumnMap::default()).unwrap();
        prop_assert_eq!(&back, &log);
        let mut again = Vec::new();
        write_csv_log(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn model_json_round_trip(s in setup()) {
        let m = build(&s);
        let back = SimulationModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}
