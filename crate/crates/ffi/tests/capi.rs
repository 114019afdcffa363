use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use aisroute::config::PipelineConfig;
use aisroute::pipeline::{run_all, RunInputs, Workdir};
use aisroute::routes::StandardRoute;
use aisroute::synth::{generate, presets};
use aisroute_ffi::*;

fn last_error() -> String {
    let p = aisr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Run the small synthetic scenario and return its working directory.
fn pipeline_workdir(dir: &Path) -> PathBuf {
    let g = generate(&presets::corridor_fleet(2, 2, 3, 2)).unwrap();
    let csv = dir.join("ais.csv");
    let reference = dir.join("reference.csv");
    std::fs::write(&csv, &g.csv).unwrap();
    std::fs::write(&reference, presets::corridor_fleet(2, 2, 3, 2).reference_csv()).unwrap();
    let wd = dir.join("work");
    let run = RunInputs {
        inputs: vec![csv],
        references: vec![reference],
        labels: None,
    };
    run_all(&PipelineConfig::default(), &Workdir::new(&wd), &run).unwrap();
    wd
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn haversine_and_bearing() {
    let mut d = 0.0;
    assert_eq!(unsafe { aisr_haversine(90.0, 0.0, -90.0, 0.0, &mut d) }, AisrStatus::Ok);
    assert!((d - std::f64::consts::PI * 6_371_000.0).abs() < 0.1);

    let mut b = 0.0;
    assert_eq!(unsafe { aisr_initial_bearing(0.0, 0.0, 0.0, 1.0, &mut b) }, AisrStatus::Ok);
    assert!((b - 90.0).abs() < 1e-9);

    assert_eq!(unsafe { aisr_haversine(91.0, 0.0, 0.0, 0.0, &mut d) }, AisrStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { aisr_haversine(0.0, 0.0, 0.0, 0.0, ptr::null_mut()) }, AisrStatus::NullPointer);
    assert_eq!(unsafe { aisr_initial_bearing(1.0, 1.0, 1.0, 1.0, &mut b) }, AisrStatus::InvalidArgument);

    // a successful call clears the previous error
    assert_eq!(unsafe { aisr_haversine(0.0, 0.0, 0.0, 1.0, &mut d) }, AisrStatus::Ok);
    assert!(aisr_last_error().is_null());
}

#[test]
fn dbscan_two_blobs_and_noise() {
    let lat = [60.0, 60.001, 60.002, 61.0, 61.001, 61.002, 62.0];
    let lon = [5.0; 7];
    let mut labels = [99i64; 7];
    let mut n = 0usize;
    let s = unsafe { aisr_dbscan(lat.as_ptr(), lon.as_ptr(), 7, 500.0, 3, labels.as_mut_ptr(), &mut n) };
    assert_eq!(s, AisrStatus::Ok);
    assert_eq!(labels, [0, 0, 0, 1, 1, 1, -1]);
    assert_eq!(n, 2);

    let s = unsafe { aisr_dbscan(lat.as_ptr(), lon.as_ptr(), 7, -1.0, 3, labels.as_mut_ptr(), &mut n) };
    assert_eq!(s, AisrStatus::InvalidArgument);
    let s = unsafe { aisr_dbscan(ptr::null(), ptr::null(), 0, 100.0, 1, ptr::null_mut(), &mut n) };
    assert_eq!(s, AisrStatus::Ok);
    assert_eq!(n, 0);
}

#[test]
fn handles_over_pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let wd = pipeline_workdir(dir.path());

    let mut db = ptr::null_mut();
    assert_eq!(unsafe { aisr_portdb_open(cpath(&wd.join("ports.json")).as_ptr(), &mut db) }, AisrStatus::Ok);
    assert_eq!(unsafe { aisr_portdb_len(db) }, 4);
    let (mut id, mut dist) = (u32::MAX, -1.0);
    // the first departure berth of the small fleet
    assert_eq!(unsafe { aisr_portdb_nearest(db, 58.0, 5.0, 1_000.0, &mut id, &mut dist) }, AisrStatus::Ok);
    assert!(dist < 500.0);
    assert_eq!(unsafe { aisr_portdb_nearest(db, 0.0, 0.0, 1_000.0, &mut id, &mut dist) }, AisrStatus::NotFound);

    let mut groups = ptr::null_mut();
    assert_eq!(unsafe { aisr_groups_open(cpath(&wd.join("groups.jsonl")).as_ptr(), &mut groups) }, AisrStatus::Ok);
    let n_groups = unsafe { aisr_groups_len(groups) };
    assert_eq!(n_groups, 4);

    // extraction through the C ABI reproduces the pipeline's routes
    let stored: Vec<StandardRoute> = serde_json::from_slice(&std::fs::read(wd.join("routes.json")).unwrap()).unwrap();
    let cfg = PipelineConfig::default();
    let mut got = Vec::new();
    for g in 0..n_groups {
        let mut routes = ptr::null_mut();
        let s = unsafe { aisr_extract_routes(groups, g, db, cfg.route_eps_m, cfg.route_min_samples, cfg.route_r_m, &mut routes) };
        assert_eq!(s, AisrStatus::Ok);
        for i in 0..unsafe { aisr_routes_len(routes) } {
            let mut len = 0usize;
            assert_eq!(
                unsafe { aisr_route_waypoints(routes, i, ptr::null_mut(), ptr::null_mut(), 0, &mut len) },
                AisrStatus::BufferTooSmall
            );
            let (mut la, mut lo) = (vec![0.0; len], vec![0.0; len]);
            let s = unsafe { aisr_route_waypoints(routes, i, la.as_mut_ptr(), lo.as_mut_ptr(), len, &mut len) };
            assert_eq!(s, AisrStatus::Ok);
            let mut completed = false;
            assert_eq!(unsafe { aisr_route_completed(routes, i, &mut completed) }, AisrStatus::Ok);
            let mut id = ptr::null_mut();
            assert_eq!(unsafe { aisr_route_id(routes, i, &mut id) }, AisrStatus::Ok);
            let id_str = unsafe { CStr::from_ptr(id) }.to_str().unwrap().to_string();
            unsafe { aisr_string_free(id) };
            got.push((id_str, la, lo, completed));
        }
        unsafe { aisr_routes_free(routes) };
    }
    let want: Vec<_> = stored
        .iter()
        .map(|r| {
            (
                r.route_id.clone(),
                r.waypoints.iter().map(|w| w.lat).collect::<Vec<_>>(),
                r.waypoints.iter().map(|w| w.lon).collect::<Vec<_>>(),
                r.completed,
            )
        })
        .collect();
    assert_eq!(got, want);

    let mut bad = ptr::null_mut();
    assert_eq!(
        unsafe { aisr_extract_routes(groups, n_groups, db, 3000.0, 3, 6000.0, &mut bad) },
        AisrStatus::InvalidArgument
    );
    assert_eq!(unsafe { aisr_extract_routes(groups, 0, db, 3000.0, 3, 100.0, &mut bad) }, AisrStatus::InvalidArgument);
    assert!(bad.is_null());

    let mut routes = ptr::null_mut();
    assert_eq!(unsafe { aisr_routes_open(cpath(&wd.join("routes.json")).as_ptr(), &mut routes) }, AisrStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { aisr_routes_to_geojson(routes, &mut json) }, AisrStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(v["type"], "FeatureCollection");
    assert_eq!(v["features"].as_array().unwrap().len(), stored.len());
    unsafe {
        aisr_string_free(json);
        aisr_routes_free(routes);
        aisr_groups_free(groups);
        aisr_portdb_free(db);
        // freeing null is a no-op
        aisr_portdb_free(ptr::null_mut());
        aisr_string_free(ptr::null_mut());
    }
}

#[test]
fn open_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut db = ptr::null_mut();
    let missing = cpath(&dir.path().join("nope.json"));
    assert_eq!(unsafe { aisr_portdb_open(missing.as_ptr(), &mut db) }, AisrStatus::Io);
    assert!(last_error().contains("nope.json"));
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{not json").unwrap();
    assert_eq!(unsafe { aisr_portdb_open(cpath(&garbage).as_ptr(), &mut db) }, AisrStatus::Parse);
    assert_eq!(unsafe { aisr_portdb_open(ptr::null(), &mut db) }, AisrStatus::NullPointer);
    assert!(db.is_null());
    assert_eq!(unsafe { aisr_routes_len(ptr::null()) }, 0);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/aisroute.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct AisrRoutes AisrRoutes;"));
}

/// Compile a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<this test> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libaisroute_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let wd = pipeline_workdir(dir.path());
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let out = Command::new(&exe).arg(&wd).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("distance 20015087"), "{stdout}");
    assert!(stdout.contains("ports 4"), "{stdout}");
    assert!(stdout.contains("routes 4 completed 4"), "{stdout}");
}
