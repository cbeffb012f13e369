mod common;

use std::collections::BTreeSet;

use chrono::Duration;

use eventstudy::config::RunConfig;
use eventstudy::ingest::{
    load_events_csv, load_sentiment_csv, panel_members, panel_mismatches, parse_events_csv, write_events_csv, Panel,
};

use common::fixtures_dir;

#[test]
fn registry_lists_every_classification_row() {
    let events = load_events_csv(fixtures_dir().join("sec_registry.csv")).unwrap();
    assert_eq!(events.len(), 117);
    let serials: Vec<u32> = events.iter().map(|e| e.serial).collect();
    assert_eq!(serials, (1..=117).collect::<Vec<_>>());
    let ids: BTreeSet<u32> = events.iter().filter_map(|e| e.event_id).collect();
    assert_eq!(ids, (1..=48).collect());
}

#[test]
fn registry_panels_have_documented_sizes() {
    let events = load_events_csv(fixtures_dir().join("sec_registry.csv")).unwrap();
    let sizes: Vec<usize> = Panel::ALL_PANELS.iter().map(|p| panel_members(&events, *p).len()).collect();
    assert_eq!(sizes, vec![48, 16, 9, 6]);
    assert!(panel_mismatches(&events).is_empty());
}

#[test]
fn registry_round_trips_through_writer() {
    let events = load_events_csv(fixtures_dir().join("sec_registry.csv")).unwrap();
    let mut buf = Vec::new();
    write_events_csv(&events, &mut buf).unwrap();
    let again = parse_events_csv(std::str::from_utf8(&buf).unwrap(), "memory").unwrap();
    assert_eq!(again, events);
}

#[test]
fn bundled_sentiment_covers_every_registry_date() {
    let events = load_events_csv(fixtures_dir().join("sec_registry.csv")).unwrap();
    let index = load_sentiment_csv(fixtures_dir().join("sentiment_synthetic.csv")).unwrap();
    for e in events.iter().filter(|e| e.event_id.is_some()) {
        let hit = index.lookup(e.date).expect("reading available");
        assert_eq!(hit.lag_days, 0, "event {:?}", e.event_id);
        assert!((0.0..=100.0).contains(&hit.point.value));
    }
    let first = index.iter().next().unwrap().date;
    let last = index.iter().last().unwrap().date;
    assert_eq!((last - first).num_days() + 1, index.len() as i64);
    assert!(index.get(first + Duration::days(1)).is_some());
}

#[test]
fn bundled_run_config_passes_validation() {
    let cfg = RunConfig::load(&fixtures_dir().join("synthetic/config.toml")).unwrap();
    assert!(cfg.events.is_file());
    assert!(cfg.sentiment.is_file());
    assert!(cfg.asset_path(&cfg.benchmark).is_file());
    assert!(cfg.check().iter().all(|f| !f.is_fatal()));
}
