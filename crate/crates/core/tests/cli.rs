//! The command-line tool driven as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tempograph::ingest::{save_bundle, DatasetBundle, DistanceEntry, DistanceTable, SensorRegistry, DEFAULT_KAPPA};
use tempograph::matrix::{DurationMatrix, Unit};
use tempograph::types::{IntervalWidth, SensorId};

fn tool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempograph"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two sensors, hourly slots, 40 days of noisy daily profiles.
fn write_hourly_bundle(dir: &Path) {
    let ids: Vec<SensorId> = ["north", "south"].iter().map(|i| SensorId::new(*i).unwrap()).collect();
    let mut m = DurationMatrix::empty(ids.clone(), IntervalWidth::new(60).unwrap(), 40, Unit::DurationSeconds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for sensor in 0..2 {
        for d in 0..40 {
            for t in 0..24 {
                let rush = if (7..9).contains(&t) || (16..18).contains(&t) { 80.0 } else { 0.0 };
                m.set(sensor, d, t, 100.0 + rush + rng.random_range(-10.0..10.0)).unwrap();
            }
        }
    }
    let distances = DistanceTable {
        entries: vec![
            DistanceEntry { from: ids[0].clone(), to: ids[1].clone(), distance_meters: 800.0 },
            DistanceEntry { from: ids[1].clone(), to: ids[0].clone(), distance_meters: 800.0 },
        ],
    };
    let registry = SensorRegistry::new(ids).unwrap();
    let bundle = DatasetBundle::new("hourly", registry, distances, DEFAULT_KAPPA, m, None).unwrap();
    save_bundle(dir, &bundle, None).unwrap();
}

#[test]
fn help_exits_zero() {
    let o = tool(&["eval", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--bundle"));
}

#[test]
fn unknown_flag_is_named() {
    let o = tool(&["train", "--bogus-flag", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus-flag"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = tool(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tool(&["synth", "--bundle", s(&dir.path().join("nope")), "--seed", "1", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn baseline_eval_in_three_formats_then_merge() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy");
    assert!(tool(&["toy", "--seed", "2", "--out", s(&toy)]).status.success());
    for ext in ["txt", "json", "csv"] {
        let out = dir.path().join(format!("ha.{ext}"));
        let o = tool(&["eval", "--bundle", s(&toy), "--model", "baseline:ha", "--seed", "2", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(fs::read_to_string(&out).unwrap().contains("HA"));
    }
    let bad = tool(&["eval", "--bundle", s(&toy), "--model", "baseline:ha", "--out", s(&dir.path().join("ha.xml"))]);
    assert_eq!(bad.status.code(), Some(1));

    let o = tool(&["report", "--merge", s(&dir.path().join("ha.json")), s(&dir.path().join("ha.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("Model"));
    assert!(table.lines().any(|l| l.starts_with("HA")));
}

#[test]
fn train_eval_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy");
    let model = dir.path().join("model");
    let manifest = dir.path().join("train.json");
    assert!(tool(&["toy", "--out", s(&toy)]).status.success());
    let o = tool(&[
        "train", "--bundle", s(&toy), "--model", "stgcn", "--epochs", "1", "--hidden", "4", "--seed", "5", "--out",
        s(&model), "--manifest", s(&manifest),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.json", "params.bin", "train_report.json"] {
        assert!(model.join(f).is_file(), "{f} missing");
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 5);
    assert!(!m["flags"].as_array().unwrap().iter().any(|f| f == "--manifest"));
    assert!(m["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("durations.csv")));
    assert_eq!(m["outputs"].as_object().unwrap().len(), 3);

    let report = dir.path().join("stgcn.json");
    let o = tool(&["eval", "--bundle", s(&toy), "--model", s(&model), "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["rows"][0]["model"], "STGCN");
    assert_eq!(r["metadata"]["seed"], 5);
    assert!(r["metadata"]["timestamp"].is_null());
}

#[test]
fn analyze_writes_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("hourly");
    write_hourly_bundle(&bundle);
    let out = dir.path().join("analysis.json");
    let o = tool(&["analyze", "--bundle", s(&bundle), "--sensor", "north", "--interval", "08:00", "--anova-groups", "hourly", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["adf", "arima", "forecasts", "anova", "boxplots", "peaks"] {
        assert!(!r[key].is_null(), "{key} missing");
    }
    assert_eq!(r["series_len"], 40);
    assert!(r["anova"]["p_value"].as_f64().unwrap() < 1e-6);

    let o = tool(&["analyze", "--bundle", s(&bundle), "--sensor", "east", "--interval", "08:00", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = tool(&["analyze", "--bundle", s(&bundle), "--sensor", "north", "--interval", "08:00", "--anova-groups", "weekly", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_then_synth() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("ids.txt");
    fs::write(&registry, "A\nB\nC\n").unwrap();
    let routes = dir.path().join("routes.json");
    fs::write(
        &routes,
        r#"{"routes":[{"from":"A","to":"C","via":[{"road_id":"B","length_m":300,"locality":"Msida"}]}]}"#,
    )
    .unwrap();
    let mut lines = String::new();
    for day in 1..=3 {
        for (k, hour) in ["07", "08"].iter().enumerate() {
            lines.push_str(&format!(
                concat!(
                    r#"{{"trip_id":"d{day}t{k}","start_ts":"2021-09-0{day}T{h}:00:00","end_ts":"2021-09-0{day}T{h}:12:00","#,
                    r#""points":[{{"lat":35.88,"lon":14.50,"ts":"2021-09-0{day}T{h}:00:00"}}],"#,
                    r#""roads":[{{"road_id":"A","length_m":600,"locality":"Marsa"}},null,{{"road_id":"C","length_m":300,"locality":"Marsa"}}]}}"#,
                    "\n"
                ),
                day = day,
                k = k,
                h = hour
            ));
        }
    }
    let trips = dir.path().join("trips.jsonl");
    fs::write(&trips, lines).unwrap();
    let out = dir.path().join("bundle");
    let provider = format!("fixture:{}", s(&routes));
    let o = tool(&["pipeline", "--trips", s(&trips), "--registry", s(&registry), "--provider", &provider, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pipeline_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trips"], 6);
    let bundle = tempograph::ingest::load_bundle(&out).unwrap();
    assert_eq!(bundle.matrix.num_days(), 3);
    // A takes 6 of 12 minutes, B 3 of 12
    let a = bundle.registry.index_of(&SensorId::new("A").unwrap()).unwrap();
    let b = bundle.registry.index_of(&SensorId::new("B").unwrap()).unwrap();
    assert_eq!(bundle.matrix.get(a, 0, 7 * 12), Some(360.0));
    assert_eq!(bundle.matrix.get(b, 0, 7 * 12 + 1), Some(180.0));

    // every sensor-day has data, so synthesis completes the matrix
    let filled = dir.path().join("filled");
    let o = tool(&["synth", "--bundle", s(&out), "--seed", "4", "--out", s(&filled)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(filled.join("synth_report.json").is_file());
    assert_eq!(tempograph::ingest::load_bundle(&filled).unwrap().matrix.completeness(), 1.0);

    let bad = tool(&["pipeline", "--trips", s(&trips), "--registry", s(&registry), "--provider", "carrier-pigeon", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn incremental_sensor_counts() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy");
    assert!(tool(&["toy", "--out", s(&toy)]).status.success());
    let out = dir.path().join("inc.json");
    let o = tool(&[
        "incremental", "--bundle", s(&toy), "--model", "dcrnn", "--epochs", "1", "--hidden", "4", "--counts", "2,4",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let points: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(points.as_array().unwrap().len(), 2);
    assert_eq!(points[1]["sensors"], 4);
}
