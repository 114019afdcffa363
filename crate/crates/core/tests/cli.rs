use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aisroute::pipeline::RunStats;
use aisroute::routes::StandardRoute;

fn aisroute(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aisroute"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    _dir: tempfile::TempDir,
    root: PathBuf,
    csv: PathBuf,
    reference: PathBuf,
}

fn synth(preset: &str, seed: u64) -> Data {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let out = aisroute(&root, &["synth", "--preset", preset, "--seed", &seed.to_string()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    Data {
        csv: root.join("ais.csv"),
        reference: root.join("reference.csv"),
        root,
        _dir: dir,
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn routes_before_aggregate_is_missing_input() {
    let d = synth("small", 1);
    let wd = d.root.join("work");
    assert_eq!(code(&aisroute(&wd, &["ingest", "--input", s(&d.csv)])), 0);
    let out = aisroute(&wd, &["routes"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).starts_with("error code=3 kind=missing_input msg=\""), "{}", stderr(&out));
    assert!(!wd.join("routes.json").exists());
    assert!(!wd.join("audit.json").exists());
    // no temporary files left behind either
    let stray: Vec<_> = std::fs::read_dir(&wd)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains("tmp"))
        .collect();
    assert!(stray.is_empty(), "{stray:?}");
}

#[test]
fn missing_input_file_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = aisroute(dir.path(), &["ingest", "--input", "/nonexistent/ais.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_flag = aisroute(dir.path(), &["--no_such_key", "5", "report"]);
    assert_eq!(code(&unknown_flag), 2);
    assert!(stderr(&unknown_flag).contains("kind=config"));

    let bad_value = aisroute(dir.path(), &["--route_eps_m", "-10", "report"]);
    assert_eq!(code(&bad_value), 2, "{}", stderr(&bad_value));

    let not_a_number = aisroute(dir.path(), &["--workers", "many", "report"]);
    assert_eq!(code(&not_a_number), 2);

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "route_eps_m = 2000\nbogus_key = 1\n").unwrap();
    let out = aisroute(dir.path(), &["--config", s(&cfg), "report"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus_key"), "{}", stderr(&out));

    let missing = aisroute(dir.path(), &["--config", "/nonexistent.conf", "report"]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn config_file_and_flags_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.conf");
    std::fs::write(&cfg, "# tuned\nroute_eps_m = 2500\n\nworkers = 2\n").unwrap();
    let out = aisroute(dir.path(), &["--config", s(&cfg), "--route-r-m", "7000", "report"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn report_on_empty_workdir() {
    let dir = tempfile::tempdir().unwrap();
    let out = aisroute(dir.path(), &["report", "--json"]);
    assert_eq!(code(&out), 0);
    let stats: RunStats = serde_json::from_slice(&out.stdout).unwrap();
    assert!(stats.ingest.is_none() && stats.routes.is_none());
}

#[test]
fn rerun_is_byte_identical_and_outputs_roundtrip() {
    let d = synth("small", 4);
    let wd = d.root.join("work");
    let args = ["run", "--input", s(&d.csv), "--reference", s(&d.reference)];
    assert_eq!(code(&aisroute(&wd, &args)), 0);
    let first = snapshot(&wd);
    assert_eq!(code(&aisroute(&wd, &args)), 0);
    assert_eq!(first, snapshot(&wd));

    // the stored routes survive a deserialize/serialize cycle unchanged
    let text = std::fs::read_to_string(wd.join("routes.json")).unwrap();
    let routes: Vec<StandardRoute> = serde_json::from_str(&text).unwrap();
    assert!(!routes.is_empty());
    assert_eq!(serde_json::to_string_pretty(&routes).unwrap() + "\n", text);

    let report = aisroute(&wd, &["report", "--json"]);
    let stats: RunStats = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(stats.routes.unwrap().routes, routes.len());
    assert_eq!(stats.export.unwrap().route_features, routes.len());
}

#[test]
fn stage_by_stage_matches_run() {
    let d = synth("small", 5);
    let staged = d.root.join("staged");
    let steps: [&[&str]; 6] = [
        &["ingest", "--input", s(&d.csv)],
        &["ports", "--reference", s(&d.reference)],
        &["segments"],
        &["aggregate"],
        &["routes"],
        &["export"],
    ];
    for step in steps {
        let out = aisroute(&staged, step);
        assert_eq!(code(&out), 0, "{step:?}: {}", stderr(&out));
    }
    let whole = d.root.join("whole");
    let out = aisroute(&whole, &["run", "--input", s(&d.csv), "--reference", s(&d.reference)]);
    assert_eq!(code(&out), 0);
    assert_eq!(snapshot(&staged), snapshot(&whole));
}

#[test]
fn geojson_outputs_are_valid() {
    let d = synth("small", 6);
    let wd = d.root.join("work");
    let out = aisroute(&wd, &["run", "--input", s(&d.csv), "--reference", s(&d.reference)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let text = std::fs::read_to_string(wd.join("routes.geojson")).unwrap();
    let fc: geojson::FeatureCollection = text.parse::<geojson::GeoJson>().unwrap().try_into().unwrap();
    assert!(!fc.features.is_empty());
    for f in &fc.features {
        let props = f.properties.as_ref().unwrap();
        for key in ["route_id", "label", "departure_port", "destination_port", "vessel_type", "support", "completed", "outlier_points"] {
            assert!(props.contains_key(key), "missing {key}");
        }
        match &f.geometry.as_ref().unwrap().value {
            geojson::Value::LineString(coords) => {
                // small preset: longitudes near 5-6 E, latitudes near 58 N
                for c in coords {
                    assert!((4.0..7.0).contains(&c[0]) && (57.0..60.0).contains(&c[1]), "{c:?}");
                }
            }
            geojson::Value::Point(c) => assert!((4.0..7.0).contains(&c[0])),
            other => panic!("unexpected geometry {other:?}"),
        }
    }

    let text = std::fs::read_to_string(wd.join("ports.geojson")).unwrap();
    let fc: geojson::FeatureCollection = text.parse::<geojson::GeoJson>().unwrap().try_into().unwrap();
    assert!(fc
        .features
        .iter()
        .all(|f| matches!(f.geometry.as_ref().unwrap().value, geojson::Value::Point(_))));
}

/// Labels for every group of a fleet run, drawn from a linear rule on the
/// group features so the model has something to learn.
fn write_labels(groups_csv: &Path, out: &Path) -> usize {
    let mut rdr = csv::Reader::from_path(groups_csv).unwrap();
    let mut w = csv::Writer::from_path(out).unwrap();
    w.write_record(["group_key", "eps_m", "min_samples", "r_m"]).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let dist: f64 = rec[9].parse().unwrap();
        let eps = 1_000.0 + dist / 50.0;
        w.write_record([rec[0].to_string(), eps.to_string(), "3".into(), (2.0 * eps).to_string()])
            .unwrap();
        n += 1;
    }
    w.flush().unwrap();
    n
}

#[test]
fn fit_params_feeds_routes() {
    let d = synth("fleet", 8);
    let wd = d.root.join("work");
    let out = aisroute(&wd, &["run", "--input", s(&d.csv), "--reference", s(&d.reference)]);
    assert_eq!(code(&out), 0);
    let labels = d.root.join("labels.csv");
    assert!(write_labels(&wd.join("groups.csv"), &labels) >= 8);

    let out = aisroute(&wd, &["fit-params", "--labels", s(&labels)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(wd.join("model.json").exists());
    assert_eq!(code(&aisroute(&wd, &["routes"])), 0);
    let report = aisroute(&wd, &["report", "--json"]);
    let stats: RunStats = serde_json::from_slice(&report.stdout).unwrap();
    assert!(stats.routes.unwrap().params_from_model);

    // a label for a group that does not exist is a data consistency error
    std::fs::write(&labels, "group_key,eps_m,min_samples,r_m\n900-901-Cargo,2000,3,4000\n").unwrap();
    let out = aisroute(&wd, &["fit-params", "--labels", s(&labels)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn convert_reference_formats() {
    let dir = tempfile::tempdir().unwrap();
    let wpi = dir.path().join("wpi.csv");
    std::fs::write(
        &wpi,
        "World Port Index Number,Main Port Name,Latitude,Longitude\n1,Bergen,60.39,5.32\n2,Broken,,\n3,Tromso,69.65,18.96\n",
    )
    .unwrap();
    let out = aisroute(dir.path(), &["convert-reference", "--wpi", s(&wpi)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "name,lat,lon,source\nBergen,60.39,5.32,WPI\nTromso,69.65,18.96,WPI\n"
    );

    let osm = dir.path().join("osm.geojson");
    std::fs::write(
        &osm,
        r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[10.75,59.9]},"properties":{"name":"Oslo"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[1,1]]},"properties":{"name":"pier"}}
        ]}"#,
    )
    .unwrap();
    let target = dir.path().join("ref.csv");
    let out = aisroute(dir.path(), &["convert-reference", "--osm", s(&osm), "--output", s(&target)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&target).unwrap(), "name,lat,lon,source\nOslo,59.9,10.75,OSM\n");

    let both = aisroute(dir.path(), &["convert-reference", "--wpi", s(&wpi), "--osm", s(&osm)]);
    assert_eq!(code(&both), 2);
}

#[test]
fn synth_presets_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = aisroute(dir.path(), &["synth", "--preset", "nope"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = aisroute(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("routes"));
}
