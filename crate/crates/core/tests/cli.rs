use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relpose::bench::{MetricsReport, CSV_HEADER, IDENTITY_LABEL};
use relpose::nalgebra::Vector3;
use relpose::synth::{generate, GenSpec};
use relpose::tuner::TunedParams;
use relpose::{Keypoint, KeypointSet, MatchResult};

fn relpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relpose")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    fs::write(path, serde_json::to_vec(value).unwrap()).unwrap();
}

/// Two specs, 15 seeds each: 30 pairs spread over the overlap bins.
fn corpus(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    write_json(
        &spec,
        &vec![
            GenSpec { sigma_p: 0.01, sigma_f: 0.05, outlier_rate: 0.2, ..GenSpec::default() },
            GenSpec { overlap_target: 0.0, disjoint_views: true, ..GenSpec::default() },
        ],
    );
    let out = dir.join("corpus");
    let o = relpose(&["generate", "--spec", s(&spec), "--seeds", "0..15", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.json")
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(relpose(&["--help"]).status.code(), Some(0));
    assert_eq!(relpose(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(relpose(&[]).status.code(), Some(1));
    assert_eq!(relpose(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_json(&spec, &GenSpec::default());
    let o = relpose(&["generate", "--spec", s(&spec), "--seeds", "5..5", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
    let o = relpose(&["generate", "--spec", s(&spec), "--seeds", "five", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = relpose(&["solve", "--source", s(&missing), "--target", s(&missing), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn malformed_json_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"id":"a","k":1,"points":[{"p":[0,0,0],"n":[0,0,1],"f":[0]},{"p":[0,"x",0],"n":[0,0,1],"f":[0]}]}"#).unwrap();
    let o = relpose(&["solve", "--source", s(&bad), "--target", s(&bad), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.json") && err.contains("points[1].p"), "{err}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"outer_iter": 3}"#).unwrap();
    let o = relpose(&["bench", "--manifest", s(&manifest), "--config", s(&config), "--report", s(&dir.path().join("r.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("outer_iter"), "{}", stderr(&o));
}

fn set(id: &str, descriptors: &[f64]) -> KeypointSet {
    let pts = descriptors
        .iter()
        .enumerate()
        .map(|(i, d)| Keypoint::new(Vector3::new(i as f64, (i * i) as f64 * 0.1, 0.3 * i as f64), Vector3::z(), vec![*d]).unwrap())
        .collect();
    KeypointSet::new(id, 1, pts).unwrap()
}

#[test]
fn unmatchable_and_degenerate_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("c.json"));
    write_json(&a, &set("a", &[0.0, 0.1, 0.2, 0.3]));
    write_json(&b, &set("b", &[5.0, 5.1, 5.2, 5.3]));
    // Descriptors 1 apart: only (0,0) and (1,1) survive pruning against `c`.
    let d = dir.path().join("d.json");
    write_json(&d, &set("d", &[0.0, 1.0, 2.0, 3.0]));
    write_json(&c, &set("c", &[0.0, 1.0, 9.0, 9.1]));
    let out = dir.path().join("r.json");

    let o = relpose(&["solve", "--source", s(&a), "--target", s(&b), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unmatchable"), "{}", stderr(&o));
    let o = relpose(&["solve", "--source", s(&d), "--target", s(&c), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn solve_writes_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let pair = generate(&GenSpec::default(), 3).unwrap();
    let (a, b, out) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("r.json"));
    write_json(&a, &pair.source);
    write_json(&b, &pair.target);
    for mode in ["nr", "r", "sm", "r_sm"] {
        let o = relpose(&["solve", "--source", s(&a), "--target", s(&b), "--mode", mode, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r: MatchResult = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
        assert_eq!(r.mode.as_str(), mode);
        let err = relpose::geometry::rotation_error(r.transform.rotation(), pair.gt.rotation()).unwrap();
        assert!(err < 1e-6, "{mode}: {err}");
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    (!cell.is_empty()).then(|| cell.parse().unwrap())
}

#[test]
fn bench_report_layout_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let (csv, json) = (dir.path().join("report.csv"), dir.path().join("report.json"));
    let o = relpose(&["bench", "--manifest", s(&manifest), "--report", s(&csv), "--json", s(&json)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect();
    assert_eq!(rows.len(), 4);
    let labels: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(labels, ["[0.5,1]", "[0.1,0.5)", "[0,0.1)", IDENTITY_LABEL]);

    let report: MetricsReport = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(report.pairs.len(), 30);
    assert_eq!(report.bins.iter().map(|b| b.count).sum::<usize>(), 30);
    for (row, stats) in rows.iter().zip(report.bins.iter().chain([&report.identity_baseline])) {
        let line = &row[0];
        let cells: Vec<Option<f64>> = row.iter().skip(1).map(parse_cell).collect();
        assert_eq!(cells.len(), 10);
        for (c, v) in cells.iter().zip(stats.columns()) {
            match (c, v) {
                (Some(c), Some(v)) => assert!((c - v).abs() <= 1e-12 * v.abs().max(1.0), "{line}"),
                (None, None) => {}
                _ => panic!("CSV and JSON disagree on {line}"),
            }
        }
        for acc in [&cells[0..3], &cells[3..6]] {
            let v: Vec<f64> = acc.iter().flatten().copied().collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{line}");
            assert!(v.iter().all(|a| (0.0..=100.0).contains(a)));
        }
    }
    // The disjoint spec puts 15 pairs in the non-overlap bin.
    assert_eq!(report.bins[2].count, 15);
    assert_eq!(report.identity_baseline.count, 15);
}

#[test]
fn tune_then_bench_with_tuned_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let gamma = dir.path().join("gamma.json");
    let o = relpose(&["tune", "--manifest", s(&manifest), "--max-iters", "1", "--out", s(&gamma)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tuned: TunedParams = serde_json::from_slice(&fs::read(&gamma).unwrap()).unwrap();
    assert!(tuned.final_loss <= tuned.initial_loss);
    assert!(tuned.per_iter_gammas.is_none());
    let o = relpose(&["bench", "--manifest", s(&manifest), "--gamma", s(&gamma), "--report", s(&dir.path().join("r.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn layerwise_gamma_file_drives_the_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"outer_iters": 2}"#).unwrap();
    let gamma = dir.path().join("gamma.json");
    let o = relpose(&[
        "tune", "--manifest", s(&manifest), "--config", s(&config), "--layerwise", "--max-iters", "1", "--out", s(&gamma),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tuned: TunedParams = serde_json::from_slice(&fs::read(&gamma).unwrap()).unwrap();
    assert_eq!(tuned.per_iter_gammas.as_ref().map(Vec::len), Some(2));
    let o = relpose(&["bench", "--manifest", s(&manifest), "--gamma", s(&gamma), "--report", s(&dir.path().join("r.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}
