//! Port discovery from vessel behaviour.
//!
//! Each track is scanned for slow windows (trailing average speed below the
//! departure threshold). A window becomes a [`PortCandidate`] when the
//! vessel turns enough inside it, which is the signature of a mooring
//! manoeuvre, or when it simply stays long enough, which catches offshore
//! slots where vessels weathervane slowly. Candidates from the whole fleet
//! are then clustered into a [`PortDatabase`] and labelled from optional
//! reference ports.

use serde::{Deserialize, Serialize};
use std::io::Read;

use crate::clustering::{dbscan, DbscanParams};
use crate::geo::{
    angular_difference, barycenter, haversine_distance, initial_bearing, normalize_lon, Degrees,
    Knots, LatLon, Meters, Seconds,
};
use crate::ingest::VesselTrack;
use crate::motion::{record_speed, RollingSpeed};

pub const MIN_PORT_RADIUS_M: Meters = 200.0;
pub const MAX_PORT_RADIUS_M: Meters = 10_000.0;
/// Consecutive fixes closer than this carry no usable bearing.
const MIN_BEARING_STEP_M: Meters = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub min_speed_departure: Knots,
    pub window: Seconds,
    pub min_window_fixes: usize,
    pub heading_change_min: Degrees,
    pub dwell_min: Seconds,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            min_speed_departure: 2.0,
            window: 600,
            min_window_fixes: 3,
            heading_change_min: 60.0,
            dwell_min: 1_800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCandidate {
    pub mmsi: u32,
    pub pos: LatLon,
    pub t_start: Seconds,
    pub t_end: Seconds,
    /// Cumulative bearing change across the window.
    pub max_heading_change: Degrees,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Component-wise median; longitudes are unwrapped around the first point.
fn median_position(points: &[LatLon]) -> LatLon {
    let ref_lon = points[0].lon;
    let lat = median(points.iter().map(|p| p.lat).collect());
    let lon = median(
        points
            .iter()
            .map(|p| ref_lon + normalize_lon(p.lon - ref_lon))
            .collect(),
    );
    LatLon {
        lat,
        lon: normalize_lon(lon),
    }
}

fn cumulative_bearing_change(points: &[LatLon]) -> Degrees {
    let mut bearings = Vec::with_capacity(points.len());
    let mut anchor = points[0];
    for &p in &points[1..] {
        if haversine_distance(anchor, p) < MIN_BEARING_STEP_M {
            continue;
        }
        if let Ok(b) = initial_bearing(anchor, p) {
            bearings.push(b);
        }
        anchor = p;
    }
    bearings
        .windows(2)
        .map(|w| angular_difference(w[0], w[1]))
        .sum()
}

pub fn detect_candidates(track: &VesselTrack, cfg: &DetectionConfig) -> Vec<PortCandidate> {
    let recs = &track.records;
    let mut rolling = RollingSpeed::new(cfg.window);
    let mut slow = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &recs[j]);
        rolling.push(rec.ts, record_speed(prev, rec));
        let is_slow = rolling.len() >= cfg.min_window_fixes
            && rolling.mean().is_some_and(|v| v < cfg.min_speed_departure);
        slow.push(is_slow);
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < recs.len() {
        if !slow[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < recs.len() && slow[i] {
            i += 1;
        }
        let window = &recs[start..i];
        if window.len() < cfg.min_window_fixes {
            continue;
        }
        let points: Vec<LatLon> = window.iter().map(|r| r.pos).collect();
        let turn = cumulative_bearing_change(&points);
        let duration = window[window.len() - 1].ts - window[0].ts;
        if turn >= cfg.heading_change_min || duration >= cfg.dwell_min {
            out.push(PortCandidate {
                mmsi: track.mmsi,
                pos: median_position(&points),
                t_start: window[0].ts,
                t_end: window[window.len() - 1].ts,
                max_heading_change: turn,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortSource {
    Derived,
    #[serde(rename = "OSM")]
    Osm,
    #[serde(rename = "WPI")]
    Wpi,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePort {
    pub name: String,
    pub pos: LatLon,
    pub source: PortSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub port_id: u32,
    #[serde(flatten)]
    pub centroid: LatLon,
    #[serde(rename = "radius_m")]
    pub radius: Meters,
    pub label: Option<String>,
    pub source: PortSource,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortDatabase {
    pub ports: Vec<Port>,
    pub params: DbscanParams,
    pub built_at: String,
}

impl PortDatabase {
    pub fn get(&self, port_id: u32) -> Option<&Port> {
        // ids are assigned densely at construction; fall back to a scan otherwise
        match self.ports.get(port_id as usize) {
            Some(p) if p.port_id == port_id => Some(p),
            _ => self.ports.iter().find(|p| p.port_id == port_id),
        }
    }

    /// Fraction of behaviour-derived ports that carry a reference label.
    pub fn labeled_fraction(&self) -> f64 {
        let derived = self
            .ports
            .iter()
            .filter(|p| matches!(p.source, PortSource::Derived | PortSource::Merged));
        let (n, labeled) = derived.fold((0usize, 0usize), |(n, l), p| {
            (n + 1, l + usize::from(p.source == PortSource::Merged))
        });
        if n == 0 {
            0.0
        } else {
            labeled as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationConfig {
    pub dbscan: DbscanParams,
    pub label_match_dist: Meters,
    /// Radius given to reference ports that no derived cluster matched.
    pub reference_radius: Meters,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        ConsolidationConfig {
            dbscan: DbscanParams {
                eps: 1_500.0,
                min_samples: 3,
            },
            label_match_dist: 3_000.0,
            reference_radius: 1_000.0,
        }
    }
}

fn percentile_95(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    // nearest-rank
    let rank = ((0.95 * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
    xs[rank - 1]
}

struct DerivedCluster {
    members: Vec<LatLon>,
    centroid: LatLon,
}

impl DerivedCluster {
    fn new(members: Vec<LatLon>) -> Self {
        let centroid = barycenter(&members).unwrap_or(members[0]);
        DerivedCluster { members, centroid }
    }

    fn radius(&self) -> Meters {
        let d = self
            .members
            .iter()
            .map(|p| haversine_distance(*p, self.centroid))
            .collect();
        percentile_95(d).clamp(MIN_PORT_RADIUS_M, MAX_PORT_RADIUS_M)
    }
}

pub fn consolidate_ports(
    candidates: &[PortCandidate],
    reference: &[ReferencePort],
    cfg: &ConsolidationConfig,
    built_at: String,
) -> PortDatabase {
    let positions: Vec<LatLon> = candidates.iter().map(|c| c.pos).collect();
    let clustering = dbscan(&positions, cfg.dbscan);
    let mut clusters: Vec<DerivedCluster> = clustering
        .members()
        .into_iter()
        // a border point may side with an earlier cluster and leave this one short
        .filter(|idx| idx.len() >= cfg.dbscan.min_samples)
        .map(|idx| DerivedCluster::new(idx.into_iter().map(|i| positions[i]).collect()))
        .collect();

    // enforce the eps separation between derived centroids
    loop {
        let close = (0..clusters.len()).find_map(|i| {
            ((i + 1)..clusters.len())
                .find(|&j| {
                    haversine_distance(clusters[i].centroid, clusters[j].centroid) < cfg.dbscan.eps
                })
                .map(|j| (i, j))
        });
        let Some((i, j)) = close else { break };
        let absorbed = clusters.remove(j);
        let mut members = std::mem::take(&mut clusters[i].members);
        members.extend(absorbed.members);
        clusters[i] = DerivedCluster::new(members);
    }

    let mut ports: Vec<Port> = Vec::new();
    let mut matched = vec![false; reference.len()];
    for c in &clusters {
        let nearest_ref = reference
            .iter()
            .enumerate()
            .map(|(k, r)| (k, haversine_distance(r.pos, c.centroid)))
            .filter(|(_, d)| *d <= cfg.label_match_dist)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (label, source) = match nearest_ref {
            Some((k, _)) => {
                matched[k] = true;
                (Some(reference[k].name.clone()), PortSource::Merged)
            }
            None => (None, PortSource::Derived),
        };
        ports.push(Port {
            port_id: ports.len() as u32,
            centroid: c.centroid,
            radius: c.radius(),
            label,
            source,
            support: c.members.len(),
        });
    }

    for (k, r) in reference.iter().enumerate() {
        let near_derived = clusters
            .iter()
            .any(|c| haversine_distance(c.centroid, r.pos) <= cfg.label_match_dist);
        if matched[k] || near_derived {
            continue;
        }
        let crowded = ports
            .iter()
            .any(|p| haversine_distance(p.centroid, r.pos) < cfg.dbscan.eps);
        if crowded {
            log::warn!("reference port {} lies within eps of another port; skipped", r.name);
            continue;
        }
        ports.push(Port {
            port_id: ports.len() as u32,
            centroid: r.pos,
            radius: cfg.reference_radius.clamp(MIN_PORT_RADIUS_M, MAX_PORT_RADIUS_M),
            label: Some(r.name.clone()),
            source: r.source,
            support: 0,
        });
    }

    PortDatabase {
        ports,
        params: cfg.dbscan,
        built_at,
    }
}

/// Nearest port whose catchment (`radius + slack`) contains `pos`.
/// Distances within a meter count as ties and go to the lower `port_id`.
pub fn nearest_port(pos: LatLon, db: &PortDatabase, slack: Meters) -> Option<(&Port, Meters)> {
    let mut best: Option<(&Port, Meters)> = None;
    for p in &db.ports {
        let d = haversine_distance(pos, p.centroid);
        if d > p.radius + slack {
            continue;
        }
        best = match best {
            None => Some((p, d)),
            Some((bp, bd)) => {
                let closer = d < bd - 1.0;
                let tie_lower_id = (d - bd).abs() <= 1.0 && p.port_id < bp.port_id;
                if closer || tie_lower_id {
                    Some((p, d))
                } else {
                    Some((bp, bd))
                }
            }
        };
    }
    best
}

#[derive(Debug, Deserialize)]
struct ReferenceRow {
    name: String,
    lat: f64,
    lon: f64,
    source: Option<String>,
}

/// Read reference ports from a `name,lat,lon[,source]` CSV. Rows with
/// invalid coordinates are skipped with a warning.
pub fn read_reference_csv<R: Read>(input: R, default_source: PortSource) -> Result<Vec<ReferencePort>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<ReferenceRow>() {
        let row = row?;
        let source = match row.source.as_deref().map(str::to_ascii_uppercase).as_deref() {
            Some("OSM") => PortSource::Osm,
            Some("WPI") => PortSource::Wpi,
            _ => default_source,
        };
        match LatLon::new(row.lat, row.lon) {
            Ok(pos) => out.push(ReferencePort {
                name: row.name,
                pos,
                source,
            }),
            Err(e) => log::warn!("reference port {}: {e}", row.name),
        }
    }
    Ok(out)
}
