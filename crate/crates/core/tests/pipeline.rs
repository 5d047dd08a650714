mod common;

use std::fs;

use common::scenarios_dir;
use mmot_core::decompose::Verdict;
use mmot_core::scenario::{execute, sweep, write_reports, Scenario};
use mmot_core::twist::AccumulationVerdict;
use mmot_core::{Error, ProductIndex};
use serde_json::Value;

fn load(name: &str) -> Scenario {
    Scenario::load(&scenarios_dir().join(name)).unwrap()
}

#[test]
fn singleton_scenario() {
    let r = execute(&load("singleton.json")).unwrap();
    let s = &r.summary;
    assert_eq!((s.gap, s.k, s.m_observed, s.verdict), (Some(0.0), Some(1), Some(1), Some(Verdict::Consistent)));
    assert_eq!(s.primal, Some(0.25));
    assert!(r.entropic.as_ref().unwrap().converged);
}

#[test]
fn monotone_scenario_matches_sorted_order() {
    let r = execute(&load("monotone_quadratic.json")).unwrap();
    let (dec, _) = r.decomposition.as_ref().unwrap();
    assert_eq!(dec.k, 1);
    // x1 = [0.9, 0.1, 0.5, 0.3, 0.7], x2 = [0.15, 0.95, 0.2, 0.6, 0.4]
    let expect = [1, 0, 4, 2, 3];
    for (a, &b) in expect.iter().enumerate() {
        assert_eq!(dec.maps[0][a], ProductIndex(vec![b]));
    }
    assert!((r.summary.primal.unwrap() - 0.007).abs() < 1e-15);
}

#[test]
fn two_level_scenario_splits_every_atom() {
    let r = execute(&load("two_level_split.json")).unwrap();
    let (dec, _) = r.decomposition.as_ref().unwrap();
    assert_eq!(dec.k, 2);
    let spaces = r.cost.spaces();
    for a in 0..spaces[0].len() {
        assert!((dec.alphas[0][a] - 0.5).abs() < 1e-12 && (dec.alphas[1][a] - 0.5).abs() < 1e-12);
        let y0 = spaces[1].coords(dec.maps[0][a].first())[0];
        let y1 = spaces[1].coords(dec.maps[1][a].first())[0];
        assert!((y0 + y1).abs() < 1e-12);
        assert!((y0 * y0 - spaces[0].coords(a)[0]).abs() < 1e-12);
    }
    let acc = r.accumulation.as_ref().unwrap();
    assert!(matches!(acc.verdict, AccumulationVerdict::Violation { .. }));
}

#[test]
fn zero_cost_classes_cover_whole_fibers() {
    let r = execute(&load("zero_cost.json")).unwrap();
    let twist = r.twist.as_ref().unwrap();
    assert_eq!(twist.m_observed, 8);
    assert_eq!(twist.classes.len(), 8);
    assert_eq!(r.summary.verdict, Some(Verdict::Consistent));
}

#[test]
fn tabulated_scenario_uses_finite_differences() {
    let r = execute(&load("tabulated_cosine.json")).unwrap();
    assert!(r.twist.as_ref().unwrap().excluded_nondifferentiable.is_empty());
    assert_eq!(r.summary.k, Some(1));
}

#[test]
fn reports_are_written_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let s = load("product_three.json");
    let r = execute(&s).unwrap();
    let written = write_reports(&r, &s, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "solve.json",
            "certificate.json",
            "plan.csv",
            "entropic.json",
            "entropic_plan.csv",
            "splitting.json",
            "twist.json",
            "decomposition.json",
            "verify.json",
            "summary.json"
        ]
    );
    let dec: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("decomposition.json")).unwrap()).unwrap();
    assert_eq!(dec["k"], r.summary.k.unwrap());
    assert_eq!(dec["trace"]["B"].as_array().unwrap().len(), r.summary.k.unwrap());
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    for key in ["primal", "dual", "gap", "iterations", "vertex"] {
        assert!(cert.get(key).is_some(), "{key}");
    }
    let plan = fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert!(plan.starts_with("i1,i2,i3,mass\n"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["instance_hash"].as_str().unwrap().len(), 64);
    let verify: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    // an atom of mu_1 splits over several tails although their gradients differ
    assert_eq!(verify["verdict"], "inconsistent");
    assert!(verify["witness"]["fiber_count"].as_u64().unwrap() > verify["witness"]["max_class_size"].as_u64().unwrap());
}

#[test]
fn file_marginals_resolve_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("mu.json"),
        r#"{"dim": 1, "atoms": [{"coords": [0.0], "weight": 0.5}, {"coords": [1.0], "weight": 0.5}]}"#,
    )
    .unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"marginals": [{"file": "mu.json"}, {"file": "mu.json"}],
            "cost": {"kind": "builtin", "id": "quadratic"},
            "pipeline": ["solve", "decompose"]}"#,
    )
    .unwrap();
    let s = Scenario::load(&path).unwrap();
    assert_eq!(s.name, "s");
    let r = execute(&s).unwrap();
    assert_eq!(r.summary.primal, Some(0.0));
    assert_eq!(r.summary.k, Some(1));

    fs::write(&path, r#"{"marginals": [{"file": "missing.json"}, {"file": "mu.json"}],
        "cost": {"kind": "builtin", "id": "zero"}, "pipeline": ["solve"]}"#).unwrap();
    assert!(matches!(execute(&Scenario::load(&path).unwrap()), Err(Error::Io { .. })));
}

#[test]
fn instance_hash_tracks_the_instance() {
    let a = execute(&load("quadratic_random.json")).unwrap();
    let b = execute(&load("quadratic_random.json").reseeded(99)).unwrap();
    let c = execute(&load("quadratic_random.json")).unwrap();
    assert_ne!(a.summary.instance_hash, b.summary.instance_hash);
    assert_eq!(a.summary.instance_hash, c.summary.instance_hash);
}

#[test]
fn sweep_csv_has_one_row_per_resolution() {
    let rep = sweep(&load("sweeps/two_level_grid.json"), &[4, 8]).unwrap();
    let csv = rep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "resolution,m_observed,k,max_gradient_spread,primal,gap,verdict");
    assert!(lines[1].starts_with("4,2,2,"));
    assert!(lines[2].starts_with("8,2,2,"));
}
