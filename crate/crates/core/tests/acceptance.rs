//! Desk-scale acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use aisroute::aggregation::{AggregateFeatures, GroupKey, RouteGroup};
use aisroute::clustering::{dbscan, DbscanParams, Label};
use aisroute::config::PipelineConfig;
use aisroute::geo::{destination, haversine_distance, initial_bearing, LatLon};
use aisroute::ingest::VesselType;
use aisroute::pipeline::{run_ingest, GroupAuditEntry, Workdir};
use aisroute::ports::PortDatabase;
use aisroute::regression::{fit, LabeledGroup, Targets};
use aisroute::routes::{extract_between, ExtractionParams, StandardRoute};
use aisroute::segmentation::{Segment, TrackPoint};
use aisroute::synth::{generate, presets, ScenarioSpec};
use common::{dbscan_oracle, hausdorff, ols_oracle, run_scenario, vincenty_sphere, write_scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn within(elapsed: f64, limit: f64) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1} s, limit {limit} s"))
    }
}

fn complete_fraction() -> Outcome {
    let t = Instant::now();
    let mut spec = presets::corridor_fleet(11, 25, 4, 2);
    spec.defects.out_of_aoi_rate = 0.05;
    let run = run_scenario(&spec);
    let s = run.stats.segments.expect("segments ran");
    let voyages = run.truth.voyages.len();
    let frac = s.complete_fraction;
    within(t.elapsed().as_secs_f64(), 60.0)?;
    let detail = format!("{voyages} voyages, complete {}/{} = {:.2}%", s.complete, s.segments, 100.0 * frac);
    if voyages == 200 && (0.93..=0.97).contains(&frac) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn destination_reaching() -> Outcome {
    let t = Instant::now();
    // 25 corridors sailed both ways: 50 groups
    let mut noisy = presets::corridor_fleet(21, 25, 4, 2);
    // 10% of fixes displaced up to 600 m, plus 15 m jitter everywhere
    noisy.defects.outlier_rate = 0.10;
    noisy.defects.outlier_min_m = 0.0;
    noisy.defects.outlier_max_m = 600.0;
    noisy.defects.gps_sigma_m = 15.0;
    noisy.defects.gap_rate = 0.2;
    let run = run_scenario(&noisy);
    let r = run.stats.routes.expect("routes ran");
    let groups = run.stats.aggregate.expect("aggregate ran").groups;

    let clean = run_scenario(&presets::corridor_fleet(22, 25, 4, 2));
    let c = clean.stats.routes.expect("routes ran");
    within(t.elapsed().as_secs_f64(), 120.0)?;
    let detail = format!(
        "noisy: {groups} groups, {}/{} routes completed ({:.1}%); clean: {}/{}",
        r.completed,
        r.routes,
        100.0 * r.completed_fraction,
        c.completed,
        c.routes
    );
    if groups == 50 && r.routes > 0 && r.completed_fraction >= 0.92 && c.routes > 0 && c.completed == c.routes {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn as_pairs(line: &[LatLon]) -> Vec<(f64, f64)> {
    line.iter().map(|p| (p.lat, p.lon)).collect()
}

fn split_correctness() -> Outcome {
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..20u64 {
        let spec = presets::fork(seed, 30_000.0, 6);
        let run = run_scenario(&spec);
        let routes: Vec<StandardRoute> = read_json(&run.workdir().routes());
        let planted: Vec<Vec<(f64, f64)>> = (0..2).map(|v| as_pairs(&spec.corridor_polyline(0, v))).collect();
        let ok = if routes.len() == 2 {
            let h: Vec<Vec<f64>> = routes
                .iter()
                .map(|r| planted.iter().map(|p| hausdorff(&as_pairs(&r.waypoints), p)).collect())
                .collect();
            let best = (h[0][0].max(h[1][1])).min(h[0][1].max(h[1][0]));
            if best > 2_000.0 {
                notes.push(format!("seed {seed}: hausdorff {best:.0} m"));
            }
            best <= 2_000.0
        } else {
            notes.push(format!("seed {seed}: {} branches", routes.len()));
            false
        };
        good += usize::from(ok);
    }
    let detail = format!("{good}/20 scenarios with 2 branches within 2 km {notes:?}");
    if good >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A group assembled straight from the generator's transit fixes, with a
/// fraction of fixes pushed sideways off the lane. Returns the group and the
/// indices of the displaced fixes in concatenated segment order.
fn planted_noise_group(spec: &ScenarioSpec, corridor: usize, rate: f64, rng: &mut ChaCha8Rng) -> (RouteGroup, BTreeSet<usize>) {
    let truth = generate(spec).unwrap().truth;
    let mut planted = BTreeSet::new();
    let mut offset = 0;
    let mut segments = Vec::new();
    let from = &spec.corridors[corridor].from;
    for v in truth.voyages.iter().filter(|v| v.corridor == corridor && &v.from == from) {
        let fixes = &v.transit;
        let mut points = Vec::with_capacity(fixes.len());
        for (i, f) in fixes.iter().enumerate() {
            let mut pos = f.pos;
            // keep the ends so segment endpoints stay at the berths
            if i > 0 && i + 1 < fixes.len() && rng.random_bool(rate) {
                let next = fixes[i + 1].pos;
                let course = initial_bearing(f.pos, next).unwrap_or(0.0);
                let side = if rng.random_bool(0.5) { 90.0 } else { -90.0 };
                pos = destination(f.pos, course + side, rng.random_range(4_000.0..4_500.0));
                planted.insert(offset + i);
            }
            points.push(TrackPoint {
                ts: f.ts,
                pos,
                sog: Some(f.sog),
            });
        }
        offset += points.len();
        segments.push(Segment::new(v.mmsi, VesselType::Cargo, Some(0), Some(1), String::new(), points));
    }
    let group = RouteGroup {
        key: GroupKey {
            departure_port: 0,
            destination_port: 1,
            vessel_type: VesselType::Cargo,
        },
        features: AggregateFeatures::compute(&segments),
        low_support: false,
        segments,
    };
    (group, planted)
}

fn outlier_bound() -> Outcome {
    // clean fleet through the whole pipeline
    let clean = run_scenario(&presets::corridor_fleet(31, 25, 4, 2));
    let audits: Vec<GroupAuditEntry> = read_json(&clean.workdir().audit());
    let worst = audits
        .iter()
        .map(|a| a.audit.outlier_points as f64 / a.audit.pool_size.max(1) as f64)
        .fold(0.0, f64::max);

    // planted 3% sideways noise, several corridors
    let spec = presets::corridor_fleet(32, 5, 4, 2);
    let cfg = PipelineConfig::default();
    let params = ExtractionParams::new(cfg.route_eps_m, cfg.route_min_samples, cfg.route_r_m);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut planted_total, mut recovered) = (0usize, 0usize);
    for c in 0..spec.corridors.len() {
        let (group, planted) = planted_noise_group(&spec, c, 0.03, &mut rng);
        let berth = |name: &str| {
            let b = spec.berths.iter().find(|b| b.name == name).unwrap();
            LatLon::new(b.lat, b.lon).unwrap()
        };
        let ex = extract_between(
            &group,
            berth(&spec.corridors[c].from),
            berth(&spec.corridors[c].to),
            &params,
        );
        let flagged: BTreeSet<usize> = ex.audit.outlier_indices.iter().copied().collect();
        planted_total += planted.len();
        recovered += planted.intersection(&flagged).count();
    }
    let recall = recovered as f64 / planted_total.max(1) as f64;
    let detail = format!(
        "clean worst group {:.2}% of {} groups; planted recall {recovered}/{planted_total} = {:.1}%",
        100.0 * worst,
        audits.len(),
        100.0 * recall
    );
    if !audits.is_empty() && worst < 0.05 && planted_total > 0 && recall >= 0.8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn port_recovery() -> Outcome {
    let spec = presets::corridor_fleet(41, 25, 4, 2);
    let run = run_scenario(&spec);
    let db: PortDatabase = read_json(&run.workdir().ports());
    let cfg = PipelineConfig::default();
    let mut vessels: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for v in &run.truth.voyages {
        vessels.entry(v.from.as_str()).or_default().insert(v.mmsi);
        vessels.entry(v.to.as_str()).or_default().insert(v.mmsi);
    }
    let (mut eligible, mut found, mut worst) = (0, 0, 0.0f64);
    for b in &spec.berths {
        if vessels.get(b.name.as_str()).map_or(0, |s| s.len()) < cfg.min_samples_port {
            continue;
        }
        eligible += 1;
        let pos = LatLon::new(b.lat, b.lon).unwrap();
        let d = db
            .ports
            .iter()
            .map(|p| vincenty_sphere(pos.lat, pos.lon, p.centroid.lat, p.centroid.lon))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
        found += usize::from(d <= 500.0);
    }
    let labeled = run.stats.ports.expect("ports ran").labeled_fraction;
    let in_ref = spec.berths.iter().filter(|b| b.in_reference).count() as f64 / spec.berths.len() as f64;
    let detail = format!(
        "{found}/{eligible} berths within 500 m (worst {worst:.0} m); labeled {:.1}% with {:.0}% in reference",
        100.0 * labeled,
        100.0 * in_ref
    );
    if eligible > 0 && found == eligible && (labeled - 0.5).abs() <= 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_suites() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(61);

    let mut dbscan_instances = 0;
    for _ in 0..500 {
        let n = rng.random_range(0..=50);
        let lat0 = rng.random_range(-60.0..60.0);
        let lon0 = rng.random_range(-170.0..170.0);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (lat0 + rng.random_range(-0.05..0.05), lon0 + rng.random_range(-0.05..0.05)))
            .collect();
        let eps = rng.random_range(200.0..3_000.0);
        let ms = rng.random_range(1..6);
        let ll: Vec<LatLon> = pts.iter().map(|p| LatLon::new(p.0, p.1).unwrap()).collect();
        let got: Vec<i64> = dbscan(&ll, DbscanParams::new(eps, ms).unwrap())
            .labels
            .iter()
            .map(|l| match l {
                Label::Noise => -1,
                Label::Cluster(c) => *c as i64,
            })
            .collect();
        if got != dbscan_oracle(&pts, eps, ms) {
            return Err(format!("dbscan partition mismatch on instance {dbscan_instances}"));
        }
        dbscan_instances += 1;
    }

    let mut worst_ols = 0.0f64;
    for _ in 0..50 {
        let rows: Vec<LabeledGroup> = (0..16u32)
            .map(|i| {
                let eps = rng.random_range(300.0..5_000.0);
                LabeledGroup {
                    group_key: GroupKey {
                        departure_port: i,
                        destination_port: i + 100,
                        vessel_type: VesselType::Cargo,
                    },
                    features: AggregateFeatures {
                        n_routes: rng.random_range(3..100),
                        n_points: rng.random_range(100..50_000),
                        median_spatial_sampling: rng.random_range(100.0..3_000.0),
                        median_temporal_sampling: rng.random_range(10.0..300.0),
                        median_duration: rng.random_range(3_600.0..300_000.0),
                        mean_distance: rng.random_range(10_000.0..900_000.0),
                    },
                    targets: Targets {
                        eps,
                        min_samples: rng.random_range(2..12),
                        r: eps + rng.random_range(0.0..10_000.0),
                    },
                }
            })
            .collect();
        let model = fit(&rows).map_err(|e| e.to_string())?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.as_array().to_vec()).collect();
        let ys: [Vec<f64>; 3] = [
            rows.iter().map(|r| r.targets.eps).collect(),
            rows.iter().map(|r| r.targets.min_samples as f64).collect(),
            rows.iter().map(|r| r.targets.r).collect(),
        ];
        for (t, y) in ys.iter().enumerate() {
            let (beta, _, _) = ols_oracle(&x, y);
            let scale = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            let f = &model.fits[t];
            let got = std::iter::once(f.intercept).chain(f.coefficients);
            for (g, b) in got.zip(&beta) {
                worst_ols = worst_ols.max((g - b).abs() / scale);
            }
        }
    }
    if worst_ols > 1e-8 {
        return Err(format!("ols relative error {worst_ols:e}"));
    }

    let mut worst_geo = 0.0f64;
    for _ in 0..20_000 {
        let a = LatLon::new(rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0)).unwrap();
        let b = LatLon::new(rng.random_range(-89.0..89.0), rng.random_range(-180.0..180.0)).unwrap();
        worst_geo = worst_geo.max((haversine_distance(a, b) - vincenty_sphere(a.lat, a.lon, b.lat, b.lon)).abs());
    }
    let poles = haversine_distance(LatLon::new(90.0, 0.0).unwrap(), LatLon::new(-90.0, 0.0).unwrap());
    if worst_geo > 1e-3 || (poles - std::f64::consts::PI * 6_371_000.0).abs() > 0.1 {
        return Err(format!("geodesy error {worst_geo:e} m"));
    }
    let elapsed = t.elapsed().as_secs_f64();
    within(elapsed, 30.0)?;
    Ok(format!(
        "{dbscan_instances} dbscan instances exact, ols max rel {worst_ols:.1e}, haversine max {worst_geo:.1e} m, {elapsed:.1} s"
    ))
}

fn cli(args: &[&str], workdir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_aisroute"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    cli(&["synth", "--preset", "fleet", "--seed", "7", "--out", data.to_str().unwrap()], tmp.path())?;
    let csv = data.join("ais.csv");
    let reference = data.join("reference.csv");
    let mut trees = Vec::new();
    for workers in ["1", "8"] {
        let wd = tmp.path().join(format!("w{workers}"));
        cli(
            &[
                "run",
                "--input",
                csv.to_str().unwrap(),
                "--reference",
                reference.to_str().unwrap(),
                "--workers",
                workers,
            ],
            &wd,
        )?;
        let mut t = tree(&wd);
        t.remove("manifest.json");
        trees.push(t);
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    let detail = format!("{} files compared, {} differ {differing:?}", trees[0].len(), differing.len());
    if differing.is_empty() && trees[0].len() == trees[1].len() && trees[0].len() > 5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn preprocessing_accounting() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (csv, _, truth) = write_scenario(&presets::defects(81), tmp.path());
    let wd = Workdir::new(tmp.path().join("work"));
    let s = run_ingest(&PipelineConfig::default(), &wd, &[csv]).map_err(|e| e.to_string())?;
    let rejected: u64 = s.rejected_by_reason.values().sum();
    let manifest: serde_json::Value = read_json(&wd.manifest());
    let reported = manifest["ingest"]["size_reduction"].as_f64();
    let detail = format!(
        "in {} = out {} + rejected {rejected}; by reason {:?}; size reduction {:.2}%",
        s.records_in,
        s.records_out,
        s.rejected_by_reason,
        100.0 * s.size_reduction
    );
    let planted: BTreeMap<_, _> = truth.planted_defects.into_iter().filter(|(_, n)| *n > 0).collect();
    let got: BTreeMap<_, _> = s.rejected_by_reason.clone().into_iter().filter(|(_, n)| *n > 0).collect();
    if s.conserved
        && s.records_in == s.records_out + rejected
        && s.records_in == truth.rows_emitted
        && got == planted
        && reported.is_some_and(f64::is_finite)
    {
        Ok(detail)
    } else {
        Err(format!("{detail}; planted {planted:?}"))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("complete-route fraction", complete_fraction),
        ("destination reaching", destination_reaching),
        ("split correctness", split_correctness),
        ("outlier bound", outlier_bound),
        ("port recovery", port_recovery),
        ("oracle equivalence", oracle_suites),
        ("determinism across workers", determinism),
        ("preprocessing accounting", preprocessing_accounting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
