//! Stage runners over a working directory.
//!
//! Every stage reads the files left by earlier stages, writes its own
//! outputs atomically (temporary file, then rename) and records a stats
//! fragment in `manifest.json`. Outputs are written in sorted key order so
//! the worker count never changes a byte.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::aggregation::{
    group_routes, read_summary_csv, snap_endpoints, write_summary_csv, GroupKey, RouteGroup,
};
use crate::config::PipelineConfig;
use crate::ingest::{
    build_tracks, parse_records, read_track_file, track_to_csv, IngestError, QualityReport,
    RejectReason, Schema, VesselTrack,
};
use crate::ports::{consolidate_ports, detect_candidates, read_reference_csv, PortDatabase, PortSource};
use crate::regression::{fit, join_labels, read_labels_csv, RegressionModel};
use crate::routes::{
    extract_standard_routes, routes_to_feature_collection, ExtractionParams, GroupAudit, StandardRoute,
};
use crate::segmentation::{segment_tracks, Completeness, Segment};
use crate::synth::{generate, presets, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Config(String),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("{0}")]
    Consistency(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => 1,
            PipelineError::Config(_) => 2,
            PipelineError::MissingInput(_) => 3,
            PipelineError::Consistency(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Io { .. } => "io",
            PipelineError::Config(_) => "config",
            PipelineError::MissingInput(_) => "missing_input",
            PipelineError::Consistency(_) => "data_consistency",
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = tmp_sibling(path);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Consistency(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item).expect("serializable");
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    require(path)?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            PipelineError::Consistency(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// File layout of a working directory.
#[derive(Debug, Clone)]
pub struct Workdir {
    pub root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }
    pub fn tracks(&self) -> PathBuf {
        self.root.join("tracks")
    }
    pub fn quality(&self) -> PathBuf {
        self.root.join("quality.json")
    }
    pub fn ports(&self) -> PathBuf {
        self.root.join("ports.json")
    }
    pub fn segments(&self) -> PathBuf {
        self.root.join("segments.jsonl")
    }
    pub fn groups(&self) -> PathBuf {
        self.root.join("groups.jsonl")
    }
    pub fn groups_csv(&self) -> PathBuf {
        self.root.join("groups.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn routes(&self) -> PathBuf {
        self.root.join("routes.json")
    }
    pub fn audit(&self) -> PathBuf {
        self.root.join("audit.json")
    }
    pub fn routes_geojson(&self) -> PathBuf {
        self.root.join("routes.geojson")
    }
    pub fn ports_geojson(&self) -> PathBuf {
        self.root.join("ports.geojson")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub files: usize,
    pub vessels: usize,
    pub records_in: u64,
    pub records_out: u64,
    pub rejected_by_reason: BTreeMap<RejectReason, u64>,
    pub conserved: bool,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub size_reduction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PortStats {
    pub candidates: usize,
    pub ports: usize,
    pub derived: usize,
    pub merged: usize,
    pub reference_only: usize,
    pub labeled_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub segments: usize,
    pub complete: usize,
    pub no_departure: usize,
    pub no_arrival: usize,
    pub orphan: usize,
    pub complete_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub groups: usize,
    pub low_support_groups: usize,
    pub grouped_segments: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub labeled_groups: usize,
    pub residual_rms: Vec<f64>,
    pub ridge: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    pub groups: usize,
    pub routes: usize,
    pub completed: usize,
    pub completed_fraction: f64,
    pub splits: usize,
    pub pool_points: usize,
    pub outlier_points: usize,
    pub outlier_fraction: f64,
    pub params_from_model: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportStats {
    pub route_features: usize,
    pub port_features: usize,
}

/// Run manifest: one optional fragment per stage plus wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunStats {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ports: Option<PortStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<SegmentStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_params: Option<FitStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routes: Option<RouteStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub export: Option<ExportStats>,
    pub wall_clock_s: BTreeMap<String, f64>,
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl RunStats {
    pub fn load(wd: &Workdir) -> Result<Self> {
        let path = wd.manifest();
        if path.exists() {
            read_json(&path)
        } else {
            Ok(RunStats::default())
        }
    }

    /// Rows of (stage, metric, value) for the text report.
    pub fn table(&self) -> Vec<(String, String, String)> {
        let mut rows = Vec::new();
        let value = serde_json::to_value(self).expect("serializable");
        if let Some(obj) = value.as_object() {
            for (stage, body) in obj {
                if stage == "wall_clock_s" {
                    continue;
                }
                if let Some(fields) = body.as_object() {
                    for (k, v) in fields {
                        rows.push((stage.clone(), k.clone(), v.to_string()));
                    }
                }
            }
        }
        for (stage, s) in &self.wall_clock_s {
            rows.push((stage.clone(), "wall_clock_s".into(), format!("{s:.3}")));
        }
        rows
    }

    pub fn render_table(&self) -> String {
        let rows = self.table();
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<w0$}  {:<w1$}  value\n", "stage", "metric");
        for (s, m, v) in rows {
            out.push_str(&format!("{s:<w0$}  {m:<w1$}  {v}\n"));
        }
        out
    }
}

fn record_stage(wd: &Workdir, stage: &str, started: Instant, update: impl FnOnce(&mut RunStats)) -> Result<()> {
    let mut stats = RunStats::load(wd)?;
    update(&mut stats);
    stats
        .wall_clock_s
        .insert(stage.to_string(), started.elapsed().as_secs_f64());
    write_json(&wd.manifest(), &stats)
}

fn ingest_error(path: &Path, e: IngestError) -> PipelineError {
    match e {
        IngestError::Io(source) => PipelineError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => PipelineError::Consistency(format!("{}: {other}", path.display())),
    }
}

pub fn run_ingest(cfg: &PipelineConfig, wd: &Workdir, inputs: &[PathBuf]) -> Result<IngestStats> {
    let started = Instant::now();
    if inputs.is_empty() {
        return Err(PipelineError::Config("ingest needs at least one --input".into()));
    }
    for p in inputs {
        require(p)?;
    }
    let parsed = inputs
        .par_iter()
        .map(|p| {
            let file = fs::File::open(p).map_err(io_err(p))?;
            parse_records(io::BufReader::new(file), &Schema::default()).map_err(|e| ingest_error(p, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = QualityReport::default();
    let mut records = Vec::new();
    for p in parsed {
        report.merge(&p.report);
        records.extend(p.records);
    }
    let build = build_tracks(records, cfg.speed_jump_kn);
    for (reason, n) in &build.rejected {
        report.reject(*reason, *n);
    }
    report.records_out = build.tracks.iter().map(|t| t.records.len() as u64).sum();

    let files: Vec<(String, Vec<u8>)> = build
        .tracks
        .par_iter()
        .map(|t| (format!("{}.track", t.mmsi), track_to_csv(t)))
        .collect();
    report.bytes_out = files.iter().map(|(_, b)| b.len() as u64).sum();

    let dir = wd.tracks();
    let staging = tmp_sibling(&dir);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io_err(&staging))?;
    for (name, bytes) in &files {
        let path = staging.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::rename(&staging, &dir).map_err(io_err(&dir))?;
    write_json(&wd.quality(), &report)?;

    let stats = IngestStats {
        files: inputs.len(),
        vessels: build.tracks.len(),
        records_in: report.records_in,
        records_out: report.records_out,
        rejected_by_reason: report.rejected_by_reason.clone(),
        conserved: report.is_conserved(),
        bytes_in: report.bytes_in,
        bytes_out: report.bytes_out,
        size_reduction: report.size_reduction(),
    };
    if !stats.conserved {
        return Err(PipelineError::Consistency("ingest record counts do not add up".into()));
    }
    let s = stats.clone();
    record_stage(wd, "ingest", started, |m| m.ingest = Some(s))?;
    Ok(stats)
}

/// Load the cleaned tracks in MMSI order.
pub fn load_tracks(wd: &Workdir) -> Result<Vec<VesselTrack>> {
    let dir = wd.tracks();
    require(&dir)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(io_err(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "track"))
        .collect();
    paths.sort_by_key(|p| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u32>().ok())
            .unwrap_or(u32::MAX)
    });
    paths
        .par_iter()
        .map(|p| read_track_file(p).map_err(|e| ingest_error(p, e)))
        .collect()
}

fn iso_time(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default()
}

pub fn run_ports(cfg: &PipelineConfig, wd: &Workdir, references: &[PathBuf]) -> Result<PortStats> {
    let started = Instant::now();
    for p in references {
        require(p)?;
    }
    let tracks = load_tracks(wd)?;
    let mut reference = Vec::new();
    for p in references {
        let file = fs::File::open(p).map_err(io_err(p))?;
        let refs = read_reference_csv(file, PortSource::Wpi)
            .map_err(|e| PipelineError::Consistency(format!("{}: {e}", p.display())))?;
        reference.extend(refs);
    }
    let detection = cfg.detection();
    let candidates: Vec<_> = tracks
        .par_iter()
        .map(|t| detect_candidates(t, &detection))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    // stamp with the data, not the clock, so reruns are byte-identical
    let latest = tracks
        .iter()
        .filter_map(|t| t.records.last().map(|r| r.ts))
        .max()
        .unwrap_or(0);
    let db = consolidate_ports(&candidates, &reference, &cfg.consolidation(), iso_time(latest));
    write_json(&wd.ports(), &db)?;

    let count = |s: PortSource| db.ports.iter().filter(|p| p.source == s).count();
    let stats = PortStats {
        candidates: candidates.len(),
        ports: db.ports.len(),
        derived: count(PortSource::Derived),
        merged: count(PortSource::Merged),
        reference_only: count(PortSource::Osm) + count(PortSource::Wpi),
        labeled_fraction: db.labeled_fraction(),
    };
    let s = stats.clone();
    record_stage(wd, "ports", started, |m| m.ports = Some(s))?;
    Ok(stats)
}

pub fn run_segments(cfg: &PipelineConfig, wd: &Workdir) -> Result<SegmentStats> {
    let started = Instant::now();
    require(&wd.tracks())?;
    let db: PortDatabase = read_json(&wd.ports())?;
    let tracks = load_tracks(wd)?;
    let segments = segment_tracks(&tracks, &db, &cfg.segmentation())
        .map_err(|e| PipelineError::Consistency(e.to_string()))?;
    write_jsonl(&wd.segments(), &segments)?;

    let count = |c: Completeness| segments.iter().filter(|s| s.completeness == c).count();
    let stats = SegmentStats {
        segments: segments.len(),
        complete: count(Completeness::Complete),
        no_departure: count(Completeness::NoDeparture),
        no_arrival: count(Completeness::NoArrival),
        orphan: count(Completeness::Orphan),
        complete_fraction: fraction(count(Completeness::Complete), segments.len()),
    };
    let s = stats.clone();
    record_stage(wd, "segments", started, |m| m.segments = Some(s))?;
    Ok(stats)
}

pub fn run_aggregate(cfg: &PipelineConfig, wd: &Workdir) -> Result<AggregateStats> {
    let started = Instant::now();
    require(&wd.segments())?;
    let db: PortDatabase = read_json(&wd.ports())?;
    let segments: Vec<Segment> = read_jsonl(&wd.segments())?;
    let segments = snap_endpoints(segments, &db).map_err(|e| PipelineError::Consistency(e.to_string()))?;
    let groups = group_routes(segments, cfg.min_group_routes);
    write_jsonl(&wd.groups(), &groups)?;
    let mut csv = Vec::new();
    write_summary_csv(&mut csv, &groups).map_err(|e| PipelineError::Consistency(e.to_string()))?;
    write_atomic(&wd.groups_csv(), &csv)?;

    let stats = AggregateStats {
        groups: groups.len(),
        low_support_groups: groups.iter().filter(|g| g.low_support).count(),
        grouped_segments: groups.iter().map(|g| g.segments.len()).sum(),
    };
    let s = stats.clone();
    record_stage(wd, "aggregate", started, |m| m.aggregate = Some(s))?;
    Ok(stats)
}

pub fn run_fit_params(wd: &Workdir, labels: &Path) -> Result<FitStats> {
    let started = Instant::now();
    require(&wd.groups_csv())?;
    require(labels)?;
    let consistency = |e: String| PipelineError::Consistency(e);
    let summary_file = fs::File::open(wd.groups_csv()).map_err(io_err(&wd.groups_csv()))?;
    let summary = read_summary_csv(summary_file).map_err(consistency)?;
    let label_file = fs::File::open(labels).map_err(io_err(labels))?;
    let labels = read_labels_csv(label_file).map_err(consistency)?;
    let labeled = join_labels(&summary, &labels).map_err(consistency)?;
    let model = fit(&labeled).map_err(|e| PipelineError::Consistency(e.to_string()))?;
    write_json(&wd.model(), &model)?;

    let stats = FitStats {
        labeled_groups: labeled.len(),
        residual_rms: model.fits.iter().map(|f| f.residual_rms).collect(),
        ridge: model.fits.iter().any(|f| f.ridge),
    };
    let s = stats.clone();
    record_stage(wd, "fit_params", started, |m| m.fit_params = Some(s))?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAuditEntry {
    pub group_key: GroupKey,
    pub params: ExtractionParams,
    pub audit: GroupAudit,
}

/// Extraction parameters for one group: the fitted model when present,
/// otherwise the configured defaults.
pub fn group_params(cfg: &PipelineConfig, model: Option<&RegressionModel>, group: &RouteGroup) -> ExtractionParams {
    match model {
        Some(m) => {
            let p = m.predict_with(&group.features, &cfg.clamp_ranges());
            cfg.extraction(p.eps, p.min_samples, p.r)
        }
        None => cfg.default_extraction(),
    }
}

pub fn run_routes(cfg: &PipelineConfig, wd: &Workdir) -> Result<RouteStats> {
    let started = Instant::now();
    require(&wd.groups())?;
    require(&wd.ports())?;
    let db: PortDatabase = read_json(&wd.ports())?;
    let groups: Vec<RouteGroup> = read_jsonl(&wd.groups())?;
    let model: Option<RegressionModel> = if wd.model().exists() {
        Some(read_json(&wd.model())?)
    } else {
        None
    };
    for g in &groups {
        for id in [g.key.departure_port, g.key.destination_port] {
            if db.get(id).is_none() {
                return Err(PipelineError::Consistency(format!("group {} references unknown port {id}", g.key)));
            }
        }
    }
    let results: Vec<(Vec<StandardRoute>, GroupAuditEntry)> = groups
        .par_iter()
        .map(|g| {
            let params = group_params(cfg, model.as_ref(), g);
            let ex = extract_standard_routes(g, &db, &params);
            (
                ex.routes,
                GroupAuditEntry {
                    group_key: g.key,
                    params,
                    audit: ex.audit,
                },
            )
        })
        .collect();
    let mut routes = Vec::new();
    let mut audits = Vec::new();
    for (r, a) in results {
        routes.extend(r);
        audits.push(a);
    }
    write_json(&wd.routes(), &routes)?;
    write_json(&wd.audit(), &audits)?;

    let completed = routes.iter().filter(|r| r.completed).count();
    let pool: usize = audits.iter().map(|a| a.audit.pool_size).sum();
    let outliers: usize = audits.iter().map(|a| a.audit.outlier_points).sum();
    let stats = RouteStats {
        groups: groups.len(),
        routes: routes.len(),
        completed,
        completed_fraction: fraction(completed, routes.len()),
        splits: audits.iter().map(|a| a.audit.splits).sum(),
        pool_points: pool,
        outlier_points: outliers,
        outlier_fraction: fraction(outliers, pool),
        params_from_model: model.is_some(),
    };
    let s = stats.clone();
    record_stage(wd, "routes", started, |m| m.routes = Some(s))?;
    Ok(stats)
}

pub fn ports_feature_collection(db: &PortDatabase) -> serde_json::Value {
    let features: Vec<serde_json::Value> = db
        .ports
        .iter()
        .map(|p| {
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.centroid.lon, p.centroid.lat]},
                "properties": {
                    "port_id": p.port_id,
                    "label": p.label,
                    "source": p.source,
                    "radius_m": p.radius,
                    "support": p.support,
                }
            })
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}

pub fn run_export(wd: &Workdir) -> Result<ExportStats> {
    let started = Instant::now();
    require(&wd.routes())?;
    require(&wd.ports())?;
    let routes: Vec<StandardRoute> = read_json(&wd.routes())?;
    let db: PortDatabase = read_json(&wd.ports())?;
    write_json(&wd.routes_geojson(), &routes_to_feature_collection(&routes))?;
    write_json(&wd.ports_geojson(), &ports_feature_collection(&db))?;
    let stats = ExportStats {
        route_features: routes.len(),
        port_features: db.ports.len(),
    };
    let s = stats.clone();
    record_stage(wd, "export", started, |m| m.export = Some(s))?;
    Ok(stats)
}

pub struct SynthOutputs {
    pub csv: PathBuf,
    pub truth: PathBuf,
    pub reference: PathBuf,
    pub spec: PathBuf,
}

/// Generate a scenario from a preset name or a spec file into `out`.
pub fn run_synth(out: &Path, preset: Option<&str>, spec_path: Option<&Path>, seed: Option<u64>) -> Result<SynthOutputs> {
    let mut spec: ScenarioSpec = match (preset, spec_path) {
        (_, Some(p)) => {
            require(p)?;
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
        }
        (Some(name), None) => presets::by_name(name, seed.unwrap_or(0)).ok_or_else(|| {
            PipelineError::Config(format!("unknown preset `{name}` (known: {})", presets::NAMES.join(", ")))
        })?,
        (None, None) => return Err(PipelineError::Config("synth needs --preset or --spec".into())),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let generated = generate(&spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    let outputs = SynthOutputs {
        csv: out.join("ais.csv"),
        truth: out.join("truth.json"),
        reference: out.join("reference.csv"),
        spec: out.join("spec.json"),
    };
    write_atomic(&outputs.csv, &generated.csv)?;
    write_atomic(&outputs.truth, generated.truth_json().as_bytes())?;
    write_atomic(&outputs.reference, spec.reference_csv().as_bytes())?;
    write_json(&outputs.spec, &spec)?;
    Ok(outputs)
}

/// Options of a full run.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub inputs: Vec<PathBuf>,
    pub references: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Every stage in order: ingest, ports, segments, aggregate, optional
/// parameter fit, routes and export.
pub fn run_all(cfg: &PipelineConfig, wd: &Workdir, run: &RunInputs) -> Result<RunStats> {
    run_ingest(cfg, wd, &run.inputs)?;
    run_ports(cfg, wd, &run.references)?;
    run_segments(cfg, wd)?;
    run_aggregate(cfg, wd)?;
    if let Some(labels) = &run.labels {
        run_fit_params(wd, labels)?;
    }
    run_routes(cfg, wd)?;
    run_export(wd)?;
    RunStats::load(wd)
}

/// Convert a World Port Index CSV or an OpenStreetMap GeoJSON point layer
/// into the `name,lat,lon,source` reference format.
pub fn convert_reference(input: &Path, format: PortSource) -> Result<String> {
    require(input)?;
    let bad = |e: String| PipelineError::Consistency(format!("{}: {e}", input.display()));
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    match format {
        PortSource::Wpi => {
            let mut rdr = csv::Reader::from_path(input).map_err(|e| bad(e.to_string()))?;
            let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| bad(format!("missing column `{name}`")))
            };
            let (n, la, lo) = (col("Main Port Name")?, col("Latitude")?, col("Longitude")?);
            for rec in rdr.records() {
                let rec = rec.map_err(|e| bad(e.to_string()))?;
                let lat = rec.get(la).and_then(|v| v.trim().parse().ok());
                let lon = rec.get(lo).and_then(|v| v.trim().parse().ok());
                match (rec.get(n), lat, lon) {
                    (Some(name), Some(lat), Some(lon)) => rows.push((name.trim().to_string(), lat, lon)),
                    _ => log::warn!("skipping unusable WPI row {:?}", rec.position().map(|p| p.line())),
                }
            }
        }
        _ => {
            let text = fs::read_to_string(input).map_err(io_err(input))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            for f in v["features"].as_array().cloned().unwrap_or_default() {
                let coords = &f["geometry"]["coordinates"];
                let name = f["properties"]["name"].as_str();
                match (f["geometry"]["type"].as_str(), name, coords[0].as_f64(), coords[1].as_f64()) {
                    (Some("Point"), Some(name), Some(lon), Some(lat)) => rows.push((name.to_string(), lat, lon)),
                    _ => log::warn!("skipping OSM feature without a named point"),
                }
            }
        }
    }
    let source = if format == PortSource::Wpi { "WPI" } else { "OSM" };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "lat", "lon", "source"]).expect("in-memory write");
    for (name, lat, lon) in rows {
        w.write_record([name, lat.to_string(), lon.to_string(), source.to_string()])
            .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields"))
}
