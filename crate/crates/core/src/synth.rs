//! Synthetic AIS fleets with known ground truth.
//!
//! Vessels shuttle between berths along corridor polylines. Each visit to a
//! berth is a slow circle (the mooring signature the port detector looks
//! for), each passage accelerates away from the berth, cruises and
//! decelerates into the next one. Defects are planted on top: transmission
//! holes, GPS jitter, displaced fixes, voyages cut by the area boundary and
//! malformed CSV rows. Everything is drawn from one seeded ChaCha stream,
//! so a spec always produces the same bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use crate::geo::{
    destination, haversine_distance, initial_bearing, interpolate, Degrees, Knots, LatLon, Meters,
    Seconds, METERS_PER_NM,
};
use crate::ingest::RejectReason;

/// Hidden time added when a voyage leaves the area of interest.
pub const OUT_OF_AOI_HIDDEN_S: Seconds = 8 * 3600;
const MOORING_SPEED_KN: Knots = 0.3;
const RAMP_M: Meters = 3_000.0;
const LANE_TAPER_M: Meters = 2_000.0;
const METERS_PER_DEG_LAT: f64 = 111_195.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("corridor {corridor}: unknown berth `{name}`")]
    UnknownBerth { corridor: usize, name: String },
    #[error("duplicate berth name `{0}`")]
    DuplicateBerth(String),
    #[error("invalid berth position for `{0}`")]
    BadBerth(String),
    #[error("corridor {0}: departure and destination are the same berth")]
    RoundTrip(usize),
    #[error("invalid value for {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerthSpec {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub in_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub vessels: usize,
    /// Voyages per vessel; odd voyages run the corridor backwards.
    pub voyages_per_vessel: usize,
    #[serde(default = "default_ship_type")]
    pub ship_type: u8,
    pub speed_kn: Knots,
    pub report_interval_s: Seconds,
}

fn default_ship_type() -> u8 {
    70
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub from: String,
    pub to: String,
    /// Interior waypoints as `[lat, lon]`.
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,
    /// Alternative interior waypoint lists; vessels are spread over them
    /// round-robin. When empty the corridor has the single `waypoints` lane.
    #[serde(default)]
    pub variants: Vec<Vec<[f64; 2]>>,
    pub fleet: FleetSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseDefects {
    pub bad_coords: usize,
    pub bad_mmsi: usize,
    pub duplicate: usize,
    pub time_regression: usize,
    pub speed_jump: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectSpec {
    /// Probability that a voyage carries one transmission hole.
    pub gap_rate: f64,
    pub gap_duration_s: Seconds,
    /// Standard deviation of the 2-D Gaussian position jitter (truncated at 3σ).
    pub gps_sigma_m: Meters,
    /// Probability that a transit fix is displaced sideways.
    pub outlier_rate: f64,
    pub outlier_min_m: Meters,
    pub outlier_max_m: Meters,
    /// Fraction of voyages whose start or end lies outside the area.
    pub out_of_aoi_rate: f64,
    pub parse: ParseDefects,
}

impl Default for DefectSpec {
    fn default() -> Self {
        DefectSpec {
            gap_rate: 0.0,
            gap_duration_s: 7 * 3600,
            gps_sigma_m: 0.0,
            outlier_rate: 0.0,
            outlier_min_m: 300.0,
            outlier_max_m: 800.0,
            out_of_aoi_rate: 0.0,
            parse: ParseDefects::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_start_time")]
    pub start_time: Seconds,
    #[serde(default = "default_dwell")]
    pub dwell_s: Seconds,
    /// Half width of the band in which voyage lanes are spread.
    #[serde(default = "default_lane")]
    pub lane_half_width_m: Meters,
    /// Largest distance between a vessel's mooring spot and the berth.
    #[serde(default = "default_berth_spread")]
    pub berth_spread_m: Meters,
    pub berths: Vec<BerthSpec>,
    pub corridors: Vec<CorridorSpec>,
    #[serde(default)]
    pub defects: DefectSpec,
}

fn default_start_time() -> Seconds {
    1_700_000_000
}
fn default_dwell() -> Seconds {
    3_600
}
fn default_lane() -> Meters {
    150.0
}
fn default_berth_spread() -> Meters {
    100.0
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut names = HashSet::new();
        for b in &self.berths {
            if !names.insert(b.name.as_str()) {
                return Err(SynthError::DuplicateBerth(b.name.clone()));
            }
            LatLon::new(b.lat, b.lon).map_err(|_| SynthError::BadBerth(b.name.clone()))?;
        }
        for (i, c) in self.corridors.iter().enumerate() {
            for name in [&c.from, &c.to] {
                if !names.contains(name.as_str()) {
                    return Err(SynthError::UnknownBerth {
                        corridor: i,
                        name: name.clone(),
                    });
                }
            }
            if c.from == c.to {
                return Err(SynthError::RoundTrip(i));
            }
            let wp_ok = c
                .waypoints
                .iter()
                .chain(c.variants.iter().flatten())
                .all(|[lat, lon]| LatLon::new(*lat, *lon).is_ok());
            if !wp_ok {
                return Err(SynthError::Invalid("corridor waypoint"));
            }
            if !(c.fleet.speed_kn.is_finite() && c.fleet.speed_kn > 1.0) {
                return Err(SynthError::Invalid("fleet.speed_kn"));
            }
            if c.fleet.report_interval_s < 2 {
                return Err(SynthError::Invalid("fleet.report_interval_s"));
            }
        }
        let d = &self.defects;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(d.gap_rate) {
            return Err(SynthError::Invalid("defects.gap_rate"));
        }
        if !unit(d.outlier_rate) {
            return Err(SynthError::Invalid("defects.outlier_rate"));
        }
        if !unit(d.out_of_aoi_rate) {
            return Err(SynthError::Invalid("defects.out_of_aoi_rate"));
        }
        if !(d.gps_sigma_m >= 0.0 && d.outlier_min_m >= 0.0 && d.outlier_max_m >= d.outlier_min_m) {
            return Err(SynthError::Invalid("defects noise bounds"));
        }
        if self.dwell_s < 600 {
            return Err(SynthError::Invalid("dwell_s"));
        }
        Ok(())
    }

    fn berth(&self, name: &str) -> usize {
        self.berths.iter().position(|b| b.name == name).expect("validated")
    }

    fn berth_pos(&self, idx: usize) -> LatLon {
        LatLon::new(self.berths[idx].lat, self.berths[idx].lon).expect("validated")
    }

    /// Corridor polyline for one variant, from `from` to `to`.
    pub fn corridor_polyline(&self, corridor: usize, variant: usize) -> Vec<LatLon> {
        let c = &self.corridors[corridor];
        let interior = if c.variants.is_empty() {
            &c.waypoints
        } else {
            &c.variants[variant % c.variants.len()]
        };
        let mut pts = vec![self.berth_pos(self.berth(&c.from))];
        pts.extend(interior.iter().map(|[lat, lon]| LatLon::new(*lat, *lon).expect("validated")));
        pts.push(self.berth_pos(self.berth(&c.to)));
        pts
    }

    /// Reference port file contents (`name,lat,lon`) for the berths flagged
    /// as present in the reference.
    pub fn reference_csv(&self) -> String {
        let mut out = String::from("name,lat,lon\n");
        for b in self.berths.iter().filter(|b| b.in_reference) {
            out.push_str(&format!("{},{},{}\n", b.name, b.lat, b.lon));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedGap {
    /// Timestamp of the last fix before the hole.
    pub t_before: Seconds,
    pub t_after: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceFix {
    pub ts: Seconds,
    pub pos: LatLon,
    pub sog: Knots,
    /// Displaced on purpose.
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoyageTruth {
    pub mmsi: u32,
    pub corridor: usize,
    pub variant: usize,
    pub from: String,
    pub to: String,
    pub t_depart: Seconds,
    pub t_arrive: Seconds,
    pub truncated: Option<Truncation>,
    pub gap: Option<PlantedGap>,
    pub planted_outliers: usize,
    /// Visible fixes between leaving `from` and reaching `to`.
    #[serde(skip)]
    pub transit: Vec<TraceFix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorTruth {
    pub from: String,
    pub to: String,
    /// One polyline per variant as `[lat, lon]` pairs, from `from` to `to`.
    pub variants: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub berths: Vec<BerthSpec>,
    pub corridors: Vec<CorridorTruth>,
    pub voyages: Vec<VoyageTruth>,
    pub planted_defects: BTreeMap<RejectReason, u64>,
    pub rows_emitted: u64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub csv: Vec<u8>,
    pub truth: GroundTruth,
}

impl Generated {
    pub fn truth_json(&self) -> String {
        serde_json::to_string_pretty(&self.truth).expect("ground truth serializes")
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "mmsi",
    "timestamp",
    "lat",
    "lon",
    "sog",
    "cog",
    "heading",
    "ship_type",
    "nav_status",
    "destination",
    "vessel_name",
    "callsign",
    "imo",
    "draught",
    "eta",
    "source",
];

#[derive(Debug, Clone)]
struct Row {
    mmsi: u32,
    ts: Seconds,
    pos: LatLon,
    sog: Knots,
    cog: Degrees,
    ship_type: u8,
    moored: bool,
    destination: String,
    vessel: usize,
}

impl Row {
    fn fields(&self) -> Vec<String> {
        let stamp = chrono::DateTime::from_timestamp(self.ts, 0)
            .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_default();
        vec![
            self.mmsi.to_string(),
            stamp,
            format!("{:.6}", self.pos.lat),
            format!("{:.6}", self.pos.lon),
            format!("{:.1}", self.sog),
            format!("{:.1}", self.cog),
            format!("{:.0}", self.cog.round() % 360.0),
            self.ship_type.to_string(),
            if self.moored { "5" } else { "0" }.to_string(),
            self.destination.clone(),
            format!("SYNTH VESSEL {:04}", self.vessel),
            format!("LA{:04}", self.vessel % 10_000),
            format!("IMO{}", 9_000_000 + self.vessel),
            "7.4".to_string(),
            String::new(),
            "terrestrial".to_string(),
        ]
    }
}

struct Path {
    pts: Vec<LatLon>,
    cum: Vec<Meters>,
}

impl Path {
    fn new(pts: Vec<LatLon>) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + haversine_distance(w[0], w[1]));
        }
        Path { pts, cum }
    }

    fn length(&self) -> Meters {
        *self.cum.last().unwrap()
    }

    /// Position and course at distance `s` along the path.
    fn at(&self, s: Meters) -> (LatLon, Degrees) {
        let s = s.clamp(0.0, self.length());
        let leg = match self.cum.iter().position(|c| *c > s) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => self.pts.len() - 2,
        };
        let (a, b) = (self.pts[leg], self.pts[leg + 1]);
        let len = self.cum[leg + 1] - self.cum[leg];
        let f = if len > 0.0 { (s - self.cum[leg]) / len } else { 0.0 };
        let pos = interpolate(a, b, f);
        let course = initial_bearing(pos, b)
            .or_else(|_| initial_bearing(a, b))
            .unwrap_or(0.0);
        (pos, course)
    }
}

fn knots_to_mps(v: Knots) -> f64 {
    v * METERS_PER_NM / 3600.0
}

/// Shift `pos` by east/north meters using a local flat approximation.
fn shift(pos: LatLon, east: Meters, north: Meters) -> LatLon {
    let lat = (pos.lat + north / METERS_PER_DEG_LAT).clamp(-89.9, 89.9);
    let lon = pos.lon + east / (METERS_PER_DEG_LAT * pos.lat.to_radians().cos());
    LatLon::new(lat, lon).unwrap_or(pos)
}

struct VesselGen<'a> {
    spec: &'a ScenarioSpec,
    rng: &'a mut ChaCha8Rng,
    rows: &'a mut Vec<Row>,
    mmsi: u32,
    vessel: usize,
    ship_type: u8,
    interval: Seconds,
    t: Seconds,
    next_report: Seconds,
}

impl VesselGen<'_> {
    fn jitter(&mut self, pos: LatLon) -> LatLon {
        let sigma = self.spec.defects.gps_sigma_m;
        if sigma <= 0.0 {
            return pos;
        }
        let mut draw = || loop {
            let z: f64 = self.rng.sample(StandardNormal);
            if z.abs() <= 3.0 {
                break z * sigma;
            }
        };
        let (e, n) = (draw(), draw());
        // keep the 2-D displacement inside 3σ as well
        let norm = (e * e + n * n).sqrt();
        let scale = if norm > 3.0 * sigma { 3.0 * sigma / norm } else { 1.0 };
        shift(pos, e * scale, n * scale)
    }

    fn emit(&mut self, pos: LatLon, sog: Knots, cog: Degrees, moored: bool, dest: &str) -> LatLon {
        let pos = self.jitter(pos);
        self.rows.push(Row {
            mmsi: self.mmsi,
            ts: self.t,
            pos,
            sog,
            cog: cog.rem_euclid(360.0),
            ship_type: self.ship_type,
            moored,
            destination: dest.to_string(),
            vessel: self.vessel,
        });
        pos
    }

    /// Slow full circle through `spot`, reported at the usual interval.
    fn dwell(&mut self, spot: LatLon, duration: Seconds, dest: &str) {
        let v = knots_to_mps(MOORING_SPEED_KN);
        let radius = v * duration as f64 / (2.0 * std::f64::consts::PI);
        let center = destination(spot, 90.0, radius);
        let end = self.t + duration;
        while self.t < end {
            if self.t >= self.next_report {
                let angle = 360.0 * (1.0 - (end - self.t) as f64 / duration as f64);
                // start at `spot`, which lies due west of the center
                let pos = destination(center, 270.0 + angle, radius);
                self.emit(pos, MOORING_SPEED_KN, angle, true, dest);
                self.next_report = self.t + self.interval;
            }
            self.t += 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn transit(
        &mut self,
        path: &Path,
        speed: Knots,
        lane_offset: Meters,
        dest: &str,
        hidden: Option<(Meters, Meters)>,
        gap_at: Option<Meters>,
        truth: &mut VoyageTruth,
    ) {
        let d = &self.spec.defects;
        let (outlier_rate, outlier_min, outlier_max) = (d.outlier_rate, d.outlier_min_m, d.outlier_max_m);
        let gap_duration = d.gap_duration_s;
        let len = path.length();
        let v_max = knots_to_mps(speed);
        let v_min = knots_to_mps(MOORING_SPEED_KN);
        let ramp = RAMP_M.min(len / 3.0);
        let accel = (v_max * v_max - v_min * v_min) / (2.0 * ramp);
        let speed_at = |s: f64| {
            let up = (v_min * v_min + 2.0 * accel * s.max(0.0)).sqrt();
            let down = (v_min * v_min + 2.0 * accel * (len - s).max(0.0)).sqrt();
            v_max.min(up).min(down)
        };
        let mut s = 0.0;
        let mut hidden_done = false;
        let mut gap_done = gap_at.is_none();
        truth.t_depart = self.t;
        while s < len {
            if let Some((h0, h1)) = hidden {
                if !hidden_done && s >= h0 {
                    hidden_done = true;
                    self.t += OUT_OF_AOI_HIDDEN_S;
                    self.next_report = self.t;
                }
                if s >= h0 && s < h1 {
                    s += speed_at(s);
                    self.t += 1;
                    continue;
                }
            }
            if !gap_done && s >= gap_at.unwrap() {
                gap_done = true;
                let t_before = truth.transit.last().map_or(self.t, |f| f.ts);
                self.t += gap_duration;
                self.next_report = self.t;
                truth.gap = Some(PlantedGap {
                    t_before,
                    t_after: self.t,
                });
            }
            if self.t >= self.next_report {
                let (center, course) = path.at(s);
                let taper = (s / LANE_TAPER_M).min((len - s) / LANE_TAPER_M).clamp(0.0, 1.0);
                let mut pos = destination(center, course + 90.0, lane_offset * taper);
                let outlier = outlier_rate > 0.0 && self.rng.random::<f64>() < outlier_rate;
                if outlier {
                    let off = self.rng.random_range(outlier_min..=outlier_max);
                    let side = if self.rng.random::<bool>() { 90.0 } else { -90.0 };
                    pos = destination(pos, course + side, off);
                    truth.planted_outliers += 1;
                }
                let sog = speed_at(s) * 3600.0 / METERS_PER_NM;
                let pos = self.emit(pos, sog, course, false, dest);
                truth.transit.push(TraceFix {
                    ts: self.t,
                    pos,
                    sog,
                    outlier,
                });
                self.next_report = self.t + self.interval;
            }
            s += speed_at(s);
            self.t += 1;
        }
        truth.t_arrive = self.t;
    }
}

pub fn generate(spec: &ScenarioSpec) -> Result<Generated, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = &spec.defects;

    let n_voyages: usize = spec
        .corridors
        .iter()
        .map(|c| c.fleet.vessels * c.fleet.voyages_per_vessel)
        .sum();
    let n_trunc = (d.out_of_aoi_rate * n_voyages as f64).round() as usize;
    let truncated: HashSet<usize> = rand::seq::index::sample(&mut rng, n_voyages, n_trunc)
        .into_iter()
        .collect();

    let mut rows = Vec::new();
    let mut voyages = Vec::new();
    let mut vessel_counter = 0usize;
    let mut idx = 0usize;
    for (c, cs) in spec.corridors.iter().enumerate() {
        let n_variants = cs.variants.len().max(1);
        for v in 0..cs.fleet.vessels {
            let variant = v % n_variants;
            let forward = Path::new(spec.corridor_polyline(c, variant));
            let mmsi = 257_100_000 + vessel_counter as u32;
            let spot_bearing = rng.random_range(0.0..360.0);
            let spot_dist = rng.random_range(0.0..=spec.berth_spread_m);
            let start = spec.start_time + rng.random_range(0..4 * 3600);
            let mut gen = VesselGen {
                spec,
                rng: &mut rng,
                rows: &mut rows,
                mmsi,
                vessel: vessel_counter,
                ship_type: cs.fleet.ship_type,
                interval: cs.fleet.report_interval_s,
                t: start,
                next_report: start,
            };
            vessel_counter += 1;
            let spot = |p: LatLon| destination(p, spot_bearing, spot_dist);

            for k in 0..cs.fleet.voyages_per_vessel {
                let reverse = k % 2 == 1;
                let mut pts = forward.pts.clone();
                if reverse {
                    pts.reverse();
                }
                let (from, to) = if reverse { (&cs.to, &cs.from) } else { (&cs.from, &cs.to) };
                let n = pts.len();
                pts[0] = spot(pts[0]);
                pts[n - 1] = spot(pts[n - 1]);
                let path = Path::new(pts);
                let dest = to.to_uppercase();

                let dwell = spec.dwell_s + gen.rng.random_range(0..spec.dwell_s / 2);
                gen.dwell(path.pts[0], dwell, &dest);

                let len = path.length();
                let trunc = truncated.contains(&idx).then(|| {
                    if gen.rng.random::<bool>() {
                        Truncation::Start
                    } else {
                        Truncation::End
                    }
                });
                let hidden = trunc.map(|t| match t {
                    Truncation::Start => (0.0, 0.5 * len),
                    Truncation::End => (0.5 * len, len + 1.0),
                });
                let gap_at = (trunc.is_none() && d.gap_rate > 0.0 && gen.rng.random::<f64>() < d.gap_rate)
                    .then(|| gen.rng.random_range(0.3..0.7) * len);
                let lane = gen.rng.random_range(-1.0..=1.0) * spec.lane_half_width_m;
                let mut truth = VoyageTruth {
                    mmsi,
                    corridor: c,
                    variant,
                    from: from.clone(),
                    to: to.clone(),
                    t_depart: 0,
                    t_arrive: 0,
                    truncated: trunc,
                    gap: None,
                    planted_outliers: 0,
                    transit: Vec::new(),
                };
                gen.transit(&path, cs.fleet.speed_kn, lane, &dest, hidden, gap_at, &mut truth);
                voyages.push(truth);
                idx += 1;
                if k + 1 == cs.fleet.voyages_per_vessel {
                    gen.dwell(path.pts[n - 1], spec.dwell_s, &dest);
                }
            }
        }
    }

    rows.sort_by_key(|r| (r.ts, r.mmsi));
    let (records, planted) = plant_parse_defects(&rows, &d.parse, &mut rng);
    let mut csv_out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_out);
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &records {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }

    let corridors = (0..spec.corridors.len())
        .map(|c| {
            let cs = &spec.corridors[c];
            CorridorTruth {
                from: cs.from.clone(),
                to: cs.to.clone(),
                variants: (0..cs.variants.len().max(1))
                    .map(|v| spec.corridor_polyline(c, v).iter().map(|p| [p.lat, p.lon]).collect())
                    .collect(),
            }
        })
        .collect();
    Ok(Generated {
        csv: csv_out,
        truth: GroundTruth {
            seed: spec.seed,
            berths: spec.berths.clone(),
            corridors,
            voyages,
            planted_defects: planted,
            rows_emitted: records.len() as u64,
        },
    })
}

/// Interleave malformed rows after randomly chosen clean rows. Base rows are
/// distinct and never a vessel's first fix, so each planted row is rejected
/// for exactly its own reason.
fn plant_parse_defects(
    rows: &[Row],
    parse: &ParseDefects,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<String>>, BTreeMap<RejectReason, u64>) {
    let mut seen = HashSet::new();
    let eligible: Vec<usize> = (0..rows.len()).filter(|&i| !seen.insert(rows[i].mmsi)).collect();
    let kinds: Vec<RejectReason> = [
        (RejectReason::BadCoords, parse.bad_coords),
        (RejectReason::BadMmsi, parse.bad_mmsi),
        (RejectReason::Duplicate, parse.duplicate),
        (RejectReason::TimeRegression, parse.time_regression),
        (RejectReason::SpeedJump, parse.speed_jump),
        (RejectReason::Malformed, parse.malformed),
    ]
    .iter()
    .flat_map(|(k, n)| std::iter::repeat_n(*k, *n))
    .collect();
    let n = kinds.len().min(eligible.len());
    let mut bases: Vec<usize> = rand::seq::index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    bases.sort_unstable();
    let mut extra: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut planted: BTreeMap<RejectReason, u64> = BTreeMap::new();
    for (base, kind) in bases.into_iter().zip(kinds) {
        let r = &rows[base];
        let mut f = r.fields();
        match kind {
            RejectReason::BadCoords => f[2] = format!("{:.6}", 91.0 + rng.random::<f64>()),
            RejectReason::BadMmsi => f[0] = "12345".into(),
            RejectReason::Duplicate => {}
            RejectReason::TimeRegression => {
                f[2] = format!("{:.6}", r.pos.lat + 0.0005);
            }
            RejectReason::SpeedJump => {
                let far = destination(r.pos, 0.0, 50_000.0);
                f[1] = Row { ts: r.ts + 1, ..r.clone() }.fields()[1].clone();
                f[2] = format!("{:.6}", far.lat);
                f[3] = format!("{:.6}", far.lon);
            }
            RejectReason::Malformed => f[1] = "not-a-time".into(),
        }
        *planted.entry(kind).or_insert(0) += 1;
        extra.insert(base, f);
    }
    let mut out = Vec::with_capacity(rows.len() + extra.len());
    for (i, r) in rows.iter().enumerate() {
        out.push(r.fields());
        if let Some(f) = extra.remove(&i) {
            out.push(f);
        }
    }
    (out, planted)
}

pub mod presets {
    //! Ready-made scenarios.

    use super::*;

    fn berth(name: String, lat: f64, lon: f64, in_reference: bool) -> BerthSpec {
        BerthSpec {
            name,
            lat,
            lon,
            in_reference,
        }
    }

    fn fleet(vessels: usize, voyages: usize) -> FleetSpec {
        FleetSpec {
            vessels,
            voyages_per_vessel: voyages,
            ship_type: 70,
            speed_kn: 12.0,
            report_interval_s: 60,
        }
    }

    /// `n` parallel corridors of about 50 km, 0.5° of latitude apart, each
    /// with a gentle bend. Every other corridor's departure berth is listed in
    /// the reference file, so half of the berths carry a reference entry.
    pub fn corridor_fleet(seed: u64, n: usize, vessels: usize, voyages: usize) -> ScenarioSpec {
        let mut berths = Vec::new();
        let mut corridors = Vec::new();
        for i in 0..n {
            let lat = 58.0 + 0.5 * i as f64;
            let (a, b) = (format!("P{:02}A", i), format!("P{:02}B", i));
            berths.push(berth(a.clone(), lat, 5.0, true));
            berths.push(berth(b.clone(), lat + 0.02, 5.9, false));
            corridors.push(CorridorSpec {
                from: a,
                to: b,
                waypoints: vec![[lat + 0.06, 5.45]],
                variants: Vec::new(),
                fleet: fleet(vessels, voyages),
            });
        }
        ScenarioSpec {
            seed,
            start_time: default_start_time(),
            dwell_s: default_dwell(),
            lane_half_width_m: default_lane(),
            berth_spread_m: default_berth_spread(),
            berths,
            corridors,
            defects: DefectSpec::default(),
        }
    }

    /// One departure and one destination joined by two lanes that separate
    /// by `separation_m` at mid-route. Lanes alternate across vessels.
    pub fn fork(seed: u64, separation_m: Meters, vessels: usize) -> ScenarioSpec {
        // vary the orientation a little from seed to seed
        let course = 80.0 + (seed % 7) as f64 * 3.0;
        let a = LatLon::new(62.0, 4.0).expect("valid");
        let b = destination(a, course, 120_000.0);
        let half = separation_m / 2.0;
        let lane = |side: f64| -> Vec<[f64; 2]> {
            [0.3, 0.5, 0.7]
                .iter()
                .map(|f| {
                    let on = destination(a, course, 120_000.0 * f);
                    let off = if *f == 0.5 { half } else { half * 0.8 };
                    let p = destination(on, course + side, off);
                    [p.lat, p.lon]
                })
                .collect()
        };
        ScenarioSpec {
            seed,
            start_time: default_start_time(),
            dwell_s: default_dwell(),
            lane_half_width_m: default_lane(),
            berth_spread_m: default_berth_spread(),
            berths: vec![
                berth("FORK_A".into(), a.lat, a.lon, true),
                berth("FORK_B".into(), b.lat, b.lon, true),
            ],
            corridors: vec![CorridorSpec {
                from: "FORK_A".into(),
                to: "FORK_B".into(),
                waypoints: Vec::new(),
                variants: vec![lane(-90.0), lane(90.0)],
                fleet: fleet(vessels, 1),
            }],
            defects: DefectSpec::default(),
        }
    }

    /// Small fleet (about a thousand rows) carrying every kind of planted
    /// parse defect.
    pub fn defects(seed: u64) -> ScenarioSpec {
        let mut spec = corridor_fleet(seed, 1, 2, 2);
        spec.corridors[0].fleet.report_interval_s = 90;
        spec.defects.parse = ParseDefects {
            bad_coords: 7,
            bad_mmsi: 5,
            duplicate: 9,
            time_regression: 6,
            speed_jump: 4,
            malformed: 3,
        };
        spec
    }

    pub fn by_name(name: &str, seed: u64) -> Option<ScenarioSpec> {
        match name {
            "fleet" => Some(corridor_fleet(seed, 25, 4, 2)),
            "small" => Some(corridor_fleet(seed, 2, 3, 2)),
            "fork" => Some(fork(seed, 30_000.0, 6)),
            "defects" => Some(defects(seed)),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["fleet", "small", "fork", "defects"];
}
