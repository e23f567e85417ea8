//! Grid first-entry counts against the recorded numpy oracle
//! (tools/entry_stats_oracle.py).

use std::f64::consts::TAU;

use expdyn::certify::Disk;
use expdyn::measure::{deep_left_stats, entry_stats, DeepLeftThresholds, EntryStatsConfig, SampleDomain};
use expdyn::orbit::ExpParameter;
use num_complex::Complex64;
use serde_json::Value;

fn oracle() -> Value {
    serde_json::from_str(include_str!("data/entry_stats_oracle.json")).unwrap()
}

#[test]
fn right_entry_counts_match_oracle() {
    let o = oracle();
    let p = ExpParameter::from_parts(0.0, TAU).unwrap();
    let domain = SampleDomain::Disk(Disk::new(Complex64::new(0.0, 0.0), 1.0));
    for e in o["entry"].as_array().unwrap() {
        let x = e["x"].as_f64().unwrap();
        let r = entry_stats(p, &domain, &EntryStatsConfig::new(x)).unwrap();
        assert_eq!(r.total as u64, e["total"].as_u64().unwrap(), "x={x}");
        assert_eq!(r.entered as u64, e["entered"].as_u64().unwrap(), "x={x}");
    }
}

#[test]
fn deep_left_counts_match_oracle() {
    let o = &oracle()["deep_left"];
    let p = ExpParameter::from_parts(0.0, TAU).unwrap();
    let x = o["x"].as_f64().unwrap();
    let th = DeepLeftThresholds::at_level(x);
    assert_eq!(th.l1, o["L1"].as_f64().unwrap());
    let disk = Disk::new(Complex64::new(0.0, TAU), 0.9);
    let r = deep_left_stats(p, &disk, x, &th, &EntryStatsConfig::new(x)).unwrap();
    assert_eq!(r.total as u64, o["total"].as_u64().unwrap());
    assert_eq!(r.entered_left as u64, o["entered_left"].as_u64().unwrap());
}
