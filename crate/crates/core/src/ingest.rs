//! AIS CSV ingestion: feature selection, quality filtering, vessel
//! classification and per-MMSI track assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::geo::{haversine_distance, Degrees, Knots, LatLon, Seconds, METERS_PER_NM};

/// AIS encodes "speed not available" as 102.3 kn; anything above is invalid.
pub const MAX_SOG_KN: Knots = 102.2;
pub const DEFAULT_SPEED_JUMP_KN: Knots = 60.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VesselType {
    Cargo,
    Tanker,
    Fishing,
    Passenger,
    Tug,
    Pleasure,
    Other,
    Unknown,
}

impl VesselType {
    /// A ship-type code that classifies back to `self`.
    pub fn representative_code(self) -> Option<u8> {
        match self {
            VesselType::Cargo => Some(70),
            VesselType::Tanker => Some(80),
            VesselType::Fishing => Some(30),
            VesselType::Passenger => Some(60),
            VesselType::Tug => Some(52),
            VesselType::Pleasure => Some(37),
            VesselType::Other => Some(90),
            VesselType::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VesselType::Cargo => "Cargo",
            VesselType::Tanker => "Tanker",
            VesselType::Fishing => "Fishing",
            VesselType::Passenger => "Passenger",
            VesselType::Tug => "Tug",
            VesselType::Pleasure => "Pleasure",
            VesselType::Other => "Other",
            VesselType::Unknown => "Unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Cargo" => VesselType::Cargo,
            "Tanker" => VesselType::Tanker,
            "Fishing" => VesselType::Fishing,
            "Passenger" => VesselType::Passenger,
            "Tug" => VesselType::Tug,
            "Pleasure" => VesselType::Pleasure,
            "Other" => VesselType::Other,
            "Unknown" => VesselType::Unknown,
            _ => return None,
        })
    }
}

impl std::fmt::Display for VesselType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Map an AIS ship-type code onto the coarse classes used for grouping.
pub fn classify_vessel(type_code: Option<u8>) -> VesselType {
    match type_code {
        None => VesselType::Unknown,
        Some(70..=79) => VesselType::Cargo,
        Some(80..=89) => VesselType::Tanker,
        Some(30) => VesselType::Fishing,
        Some(60..=69) => VesselType::Passenger,
        Some(52) => VesselType::Tug,
        Some(36 | 37) => VesselType::Pleasure,
        Some(_) => VesselType::Other,
    }
}

/// ISO 3166 alpha-2 flag for the Maritime Identification Digits of an MMSI.
/// Covers the common MIDs; unlisted ones yield `None`.
pub fn flag_from_mmsi(mmsi: u32) -> Option<&'static str> {
    let mid = mmsi / 1_000_000;
    let flag = match mid {
        201 => "AL",
        202 => "AD",
        203 => "AT",
        204 | 255 | 263 => "PT",
        205 => "BE",
        206 => "BY",
        207 => "BG",
        208 => "VA",
        209 | 210 | 212 => "CY",
        211 | 218 => "DE",
        213 => "GE",
        214 => "MD",
        215 | 229 | 248 | 249 | 256 => "MT",
        216 => "AM",
        219 | 220 => "DK",
        224 | 225 => "ES",
        226..=228 => "FR",
        230 => "FI",
        231 => "FO",
        232..=235 => "GB",
        236 => "GI",
        237 | 239..=241 => "GR",
        238 => "HR",
        242 => "MA",
        243 => "HU",
        244..=246 => "NL",
        247 => "IT",
        250 => "IE",
        251 => "IS",
        252 => "LI",
        253 => "LU",
        254 => "MC",
        257..=259 => "NO",
        261 => "PL",
        262 => "ME",
        264 => "RO",
        265 | 266 => "SE",
        267 => "SK",
        268 => "SM",
        269 => "CH",
        270 => "CZ",
        271 => "TR",
        272 => "UA",
        273 => "RU",
        274 => "MK",
        275 => "LV",
        276 => "EE",
        277 => "LT",
        278 => "SI",
        279 => "RS",
        303 | 338 | 366..=369 => "US",
        304 | 305 => "AG",
        308 | 309 | 311 => "BS",
        310 => "BM",
        312 => "BZ",
        314 => "BB",
        316 => "CA",
        319 => "KY",
        339 => "JM",
        341 => "KN",
        345 => "MX",
        351..=357 | 370..=374 => "PA",
        375..=377 => "VC",
        378 => "VG",
        403 => "SA",
        408 => "BH",
        412..=414 => "CN",
        416 => "TW",
        419 => "IN",
        422 => "IR",
        425 => "IQ",
        428 => "IL",
        431 | 432 => "JP",
        440 | 441 => "KR",
        447 => "KW",
        450 => "LB",
        461 => "OM",
        463 => "PK",
        466 => "QA",
        468 => "SY",
        470 | 471 => "AE",
        473 | 475 => "YE",
        477 => "HK",
        503 => "AU",
        512 => "NZ",
        525 => "ID",
        533 => "MY",
        538 => "MH",
        548 => "PH",
        563..=566 => "SG",
        567 => "TH",
        574 => "VN",
        576 | 577 => "VU",
        603 => "AO",
        605 => "DZ",
        613 => "CM",
        619 => "CI",
        622 => "EG",
        624 => "ET",
        627 => "GH",
        636 | 637 => "LR",
        642 => "LY",
        655 | 657 => "NG",
        671 => "TG",
        672 => "TN",
        701 => "AR",
        710 => "BR",
        725 => "CL",
        730 => "CO",
        760 => "PE",
        770 => "UY",
        775 => "VE",
        _ => return None,
    };
    Some(flag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisRecord {
    pub mmsi: u32,
    pub ts: Seconds,
    pub pos: LatLon,
    pub sog: Option<Knots>,
    pub cog: Option<Degrees>,
    pub heading: Option<Degrees>,
    pub vessel_type: VesselType,
    pub flag: Option<String>,
    pub destination: Option<String>,
    pub nav_status: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadCoords,
    BadMmsi,
    Duplicate,
    TimeRegression,
    SpeedJump,
    /// Unparsable timestamp or numeric field.
    Malformed,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::BadCoords,
        RejectReason::BadMmsi,
        RejectReason::Duplicate,
        RejectReason::TimeRegression,
        RejectReason::SpeedJump,
        RejectReason::Malformed,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub records_in: u64,
    pub records_out: u64,
    pub rejected_by_reason: BTreeMap<RejectReason, u64>,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl Default for QualityReport {
    fn default() -> Self {
        QualityReport {
            records_in: 0,
            records_out: 0,
            rejected_by_reason: RejectReason::ALL.iter().map(|r| (*r, 0)).collect(),
            bytes_in: 0,
            bytes_out: 0,
        }
    }
}

impl QualityReport {
    pub fn rejected_total(&self) -> u64 {
        self.rejected_by_reason.values().sum()
    }

    pub fn reject(&mut self, reason: RejectReason, n: u64) {
        *self.rejected_by_reason.entry(reason).or_insert(0) += n;
    }

    pub fn merge(&mut self, other: &QualityReport) {
        self.records_in += other.records_in;
        self.records_out += other.records_out;
        self.bytes_in += other.bytes_in;
        self.bytes_out += other.bytes_out;
        for (r, n) in &other.rejected_by_reason {
            self.reject(*r, *n);
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.records_out + self.rejected_total() == self.records_in
    }

    /// Fraction of input bytes removed by preprocessing, in `[0, 1]`.
    pub fn size_reduction(&self) -> f64 {
        if self.bytes_in == 0 {
            0.0
        } else {
            (1.0 - self.bytes_out as f64 / self.bytes_in as f64).clamp(0.0, 1.0)
        }
    }
}

/// Maps logical fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub mmsi: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    pub sog: String,
    pub cog: String,
    pub heading: String,
    pub ship_type: String,
    pub flag: String,
    pub destination: String,
    pub nav_status: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            mmsi: "mmsi".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            sog: "sog".into(),
            cog: "cog".into(),
            heading: "heading".into(),
            ship_type: "ship_type".into(),
            flag: "flag".into(),
            destination: "destination".into(),
            nav_status: "nav_status".into(),
        }
    }
}

struct ColumnIndex {
    mmsi: usize,
    ts: usize,
    lat: usize,
    lon: usize,
    sog: Option<usize>,
    cog: Option<usize>,
    heading: Option<usize>,
    ship_type: Option<usize>,
    flag: Option<usize>,
    destination: Option<usize>,
    nav_status: Option<usize>,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &Schema) -> Result<Self, IngestError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
        Ok(ColumnIndex {
            mmsi: need(&schema.mmsi)?,
            ts: need(&schema.timestamp)?,
            lat: need(&schema.lat)?,
            lon: need(&schema.lon)?,
            sog: find(&schema.sog),
            cog: find(&schema.cog),
            heading: find(&schema.heading),
            ship_type: find(&schema.ship_type),
            flag: find(&schema.flag),
            destination: find(&schema.destination),
            nav_status: find(&schema.nav_status),
        })
    }
}

/// Parse a timestamp given as integer epoch seconds or ISO-8601 UTC.
pub fn parse_timestamp(s: &str) -> Option<Seconds> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    let naive = s.trim_end_matches('Z');
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| chrono::NaiveDateTime::parse_from_str(naive, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

struct CountingReader<R> {
    inner: R,
    bytes: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }
}

pub struct Parsed {
    pub records: Vec<AisRecord>,
    pub report: QualityReport,
}

fn opt_field(row: &csv::StringRecord, idx: Option<usize>) -> Option<&str> {
    idx.and_then(|i| row.get(i)).map(str::trim).filter(|s| !s.is_empty())
}

fn parse_row(row: &csv::StringRecord, cols: &ColumnIndex) -> Result<AisRecord, RejectReason> {
    let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let mmsi: u64 = field(cols.mmsi).parse().map_err(|_| RejectReason::BadMmsi)?;
    if !(100_000_000..=999_999_999).contains(&mmsi) {
        return Err(RejectReason::BadMmsi);
    }
    let mmsi = mmsi as u32;
    let ts = parse_timestamp(field(cols.ts)).ok_or(RejectReason::Malformed)?;
    if ts <= 0 {
        return Err(RejectReason::Malformed);
    }
    let lat: f64 = field(cols.lat).parse().map_err(|_| RejectReason::BadCoords)?;
    let lon: f64 = field(cols.lon).parse().map_err(|_| RejectReason::BadCoords)?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(RejectReason::BadCoords);
    }
    let pos = LatLon::new(lat, lon).map_err(|_| RejectReason::BadCoords)?;

    let num = |idx: Option<usize>| -> Result<Option<f64>, RejectReason> {
        opt_field(row, idx)
            .map(|s| s.parse::<f64>().map_err(|_| RejectReason::Malformed))
            .transpose()
    };
    // out-of-range values are AIS "not available" sentinels
    let sog = num(cols.sog)?.filter(|v| (0.0..=MAX_SOG_KN).contains(v));
    let cog = num(cols.cog)?.filter(|v| (0.0..360.0).contains(v));
    let heading = num(cols.heading)?.filter(|v| (0.0..360.0).contains(v));
    let ship_type = num(cols.ship_type)?
        .filter(|v| (0.0..=99.0).contains(v) && v.fract() == 0.0)
        .map(|v| v as u8);
    let nav_status = num(cols.nav_status)?
        .filter(|v| (0.0..=15.0).contains(v) && v.fract() == 0.0)
        .map(|v| v as u8);
    let flag = opt_field(row, cols.flag)
        .map(|s| s.to_ascii_uppercase())
        .or_else(|| flag_from_mmsi(mmsi).map(str::to_string));
    let destination = opt_field(row, cols.destination).map(str::to_string);

    Ok(AisRecord {
        mmsi,
        ts,
        pos,
        sog,
        cog,
        heading,
        vessel_type: classify_vessel(ship_type),
        flag,
        destination,
        nav_status,
    })
}

/// Parse one CSV stream. Bad rows are counted in the report, never fatal.
pub fn parse_records<R: Read>(input: R, schema: &Schema) -> Result<Parsed, IngestError> {
    let mut counting = CountingReader { inner: input, bytes: 0 };
    let mut report = QualityReport::default();
    let mut records = Vec::new();
    {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(&mut counting);
        let headers = rdr.headers()?.clone();
        let cols = ColumnIndex::resolve(&headers, schema)?;
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        let mut raw = csv::ByteRecord::new();
        while rdr.read_byte_record(&mut raw)? {
            report.records_in += 1;
            let key: Vec<u8> = raw.iter().flat_map(|f| f.iter().copied().chain([0x1f])).collect();
            if !seen.insert(key) {
                report.reject(RejectReason::Duplicate, 1);
                continue;
            }
            let row = match csv::StringRecord::from_byte_record(raw.clone()) {
                Ok(r) => r,
                Err(_) => {
                    report.reject(RejectReason::Malformed, 1);
                    continue;
                }
            };
            match parse_row(&row, &cols) {
                Ok(rec) => records.push(rec),
                Err(reason) => report.reject(reason, 1),
            }
        }
    }
    report.bytes_in = counting.bytes;
    report.records_out = records.len() as u64;
    Ok(Parsed { records, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTrack {
    pub mmsi: u32,
    pub vessel_type: VesselType,
    pub flag: Option<String>,
    pub records: Vec<AisRecord>,
}

pub struct TrackBuild {
    pub tracks: Vec<VesselTrack>,
    pub rejected: BTreeMap<RejectReason, u64>,
}

fn implied_speed_kn(a: &AisRecord, b: &AisRecord) -> Knots {
    let dt = (b.ts - a.ts) as f64;
    if dt <= 0.0 {
        return f64::INFINITY;
    }
    haversine_distance(a.pos, b.pos) / dt * 3600.0 / METERS_PER_NM
}

fn assemble(mmsi: u32, mut recs: Vec<AisRecord>, max_speed_kn: Knots) -> (VesselTrack, u64, u64) {
    // stable: equal timestamps keep input order so the first occurrence wins
    recs.sort_by_key(|r| r.ts);
    let (mut collisions, mut jumps) = (0, 0);
    let mut kept: Vec<AisRecord> = Vec::with_capacity(recs.len());
    for rec in recs {
        match kept.last() {
            Some(prev) if prev.ts == rec.ts => collisions += 1,
            Some(prev) if implied_speed_kn(prev, &rec) > max_speed_kn => jumps += 1,
            _ => kept.push(rec),
        }
    }
    let vessel_type = kept
        .iter()
        .map(|r| r.vessel_type)
        .find(|t| *t != VesselType::Unknown)
        .unwrap_or(VesselType::Unknown);
    let flag = kept.iter().find_map(|r| r.flag.clone());
    (
        VesselTrack {
            mmsi,
            vessel_type,
            flag,
            records: kept,
        },
        collisions,
        jumps,
    )
}

/// Partition records by MMSI into time-ordered tracks, collapsing repeated
/// timestamps and dropping fixes that imply more than `max_speed_kn`.
pub fn build_tracks(records: Vec<AisRecord>, max_speed_kn: Knots) -> TrackBuild {
    let mut by_mmsi: BTreeMap<u32, Vec<AisRecord>> = BTreeMap::new();
    for r in records {
        by_mmsi.entry(r.mmsi).or_default().push(r);
    }
    let built: Vec<(VesselTrack, u64, u64)> = by_mmsi
        .into_par_iter()
        .map(|(mmsi, recs)| assemble(mmsi, recs, max_speed_kn))
        .collect();
    let mut rejected = BTreeMap::new();
    let mut tracks = Vec::with_capacity(built.len());
    for (t, c, j) in built {
        *rejected.entry(RejectReason::TimeRegression).or_insert(0) += c;
        *rejected.entry(RejectReason::SpeedJump).or_insert(0) += j;
        if !t.records.is_empty() {
            tracks.push(t);
        }
    }
    TrackBuild { tracks, rejected }
}

/// Column order of the cleaned track files.
pub const TRACK_HEADER: [&str; 11] = [
    "mmsi",
    "timestamp",
    "lat",
    "lon",
    "sog",
    "cog",
    "heading",
    "ship_type",
    "flag",
    "destination",
    "nav_status",
];

fn opt_to_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_records_csv<'a, W: Write>(
    out: W,
    records: impl IntoIterator<Item = &'a AisRecord>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACK_HEADER)?;
    for r in records {
        w.write_record([
            r.mmsi.to_string(),
            r.ts.to_string(),
            r.pos.lat.to_string(),
            r.pos.lon.to_string(),
            opt_to_string(&r.sog),
            opt_to_string(&r.cog),
            opt_to_string(&r.heading),
            opt_to_string(&r.vessel_type.representative_code()),
            r.flag.clone().unwrap_or_default(),
            r.destination.clone().unwrap_or_default(),
            opt_to_string(&r.nav_status),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn track_to_csv(track: &VesselTrack) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &track.records).expect("writing to a Vec cannot fail");
    buf
}

/// Read a cleaned `<mmsi>.track` file back into a track.
pub fn read_track_file(path: &Path) -> Result<VesselTrack, IngestError> {
    let parsed = parse_records(std::fs::File::open(path)?, &Schema::default())?;
    let mmsi = parsed.records.first().map(|r| r.mmsi).unwrap_or(0);
    let build = build_tracks(parsed.records, f64::INFINITY);
    Ok(build.tracks.into_iter().next().unwrap_or(VesselTrack {
        mmsi,
        vessel_type: VesselType::Unknown,
        flag: None,
        records: Vec::new(),
    }))
}
