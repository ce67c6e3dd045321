use std::path::{Path, PathBuf};

use prosim_core::discovery::{discover_model, DiscoveryConfig, MultitaskMode};
use prosim_core::evaluation::{evaluate_model, sweep, SweepGrid};
use prosim_core::event_log::{read_csv_log, ColumnMap, EventLog};
use prosim_core::sim::SimulationModel;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn claims_log() -> EventLog {
    read_csv_log(fixture("claims_log.csv"), &ColumnMap::default()).unwrap()
}

fn claims_model() -> SimulationModel {
    SimulationModel::from_json(&std::fs::read_to_string(fixture("claims_model.json")).unwrap()).unwrap()
}

#[test]
fn every_multitask_mode_yields_a_runnable_model() {
    let log = claims_log();
    for mode in [MultitaskMode::None, MultitaskMode::Global, MultitaskMode::Local] {
        let cfg = DiscoveryConfig { multitask: mode, ..DiscoveryConfig::default() };
        let m = discover_model(&log, &cfg, None).unwrap();
        assert_eq!(m.resources.keys().collect::<Vec<_>>(), log.resources().iter().collect::<Vec<_>>());
        assert_eq!(m.graph.activities(), *log.activities());
        let report = evaluate_model(&log, &m, Some(&log.arrivals()), 3, 1).unwrap();
        assert_eq!(report.mmr, 0.0, "{mode}");
        assert_eq!(report.runs.len(), 3);
        assert!(report.red.is_finite() && report.ctd.is_finite());
    }
}

#[test]
fn template_keeps_control_flow_and_arrivals() {
    let template = claims_model();
    let m = discover_model(&claims_log(), &DiscoveryConfig::default(), Some(&template)).unwrap();
    assert_eq!(m.graph, template.graph);
    assert_eq!(m.branching, template.branching);
    assert_eq!(m.arrival, template.arrival);
    assert_eq!(m.case_count, template.case_count);
    assert_ne!(m.resources, template.resources);
}

#[test]
fn replaying_arrivals_reproduces_case_count() {
    let log = claims_log();
    let m = discover_model(&log, &DiscoveryConfig::default(), None).unwrap();
    let report = evaluate_model(&log, &m, Some(&log.arrivals()), 1, 9).unwrap();
    assert_eq!(report.runs[0].sim_cases, log.traces().len());
}

#[test]
fn sweep_covers_the_grid_and_picks_the_lowest_red() {
    let grid = SweepGrid {
        granule_minutes: vec![30, 60],
        beta: vec![0.0, 1.0],
        kappa: vec![5],
    };
    let result = sweep(&claims_log(), &grid, &DiscoveryConfig::default(), None, 0.5, 2, 4).unwrap();
    assert_eq!(result.cells.len(), 4);
    let best = result.best.report.as_ref().unwrap().red;
    for cell in &result.cells {
        if let Some(r) = &cell.report {
            assert!(best <= r.red);
        }
    }
}
