//! Endpoint snapping, route grouping and per-group features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

use crate::geo::{haversine_distance, Meters};
use crate::ingest::VesselType;
use crate::ports::PortDatabase;
use crate::segmentation::Segment;

pub const DEFAULT_MIN_GROUP_ROUTES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("segment of mmsi {mmsi} references unknown port {port_id}")]
    DanglingPort { mmsi: u32, port_id: u32 },
}

/// Replace the first and last fix of every complete segment with the
/// centroid of its departure and arrival port.
pub fn snap_endpoints(
    mut segments: Vec<Segment>,
    db: &PortDatabase,
) -> Result<Vec<Segment>, AggregationError> {
    for seg in &mut segments {
        let lookup = |id: Option<u32>| match id {
            None => Ok(None),
            Some(id) => db.get(id).map(Some).ok_or(AggregationError::DanglingPort {
                mmsi: seg.mmsi,
                port_id: id,
            }),
        };
        let departure = lookup(seg.departure_port)?;
        let arrival = lookup(seg.arrival_port)?;
        if !seg.is_complete() || seg.points.is_empty() {
            continue;
        }
        if let (Some(dep), Some(arr)) = (departure, arrival) {
            seg.points[0].pos = dep.centroid;
            let last = seg.points.len() - 1;
            seg.points[last].pos = arr.centroid;
            seg.recompute_distance();
        }
    }
    Ok(segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub departure_port: u32,
    pub destination_port: u32,
    pub vessel_type: VesselType,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.departure_port, self.destination_port, self.vessel_type)
    }
}

impl std::str::FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().splitn(3, '-');
        let bad = || format!("bad group key `{s}`");
        let dep = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let dst = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let vt = parts.next().and_then(VesselType::parse).ok_or_else(bad)?;
        Ok(GroupKey {
            departure_port: dep,
            destination_port: dst,
            vessel_type: vt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateFeatures {
    pub n_routes: usize,
    pub n_points: usize,
    pub median_spatial_sampling: Meters,
    pub median_temporal_sampling: f64,
    pub median_duration: f64,
    pub mean_distance: Meters,
}

impl AggregateFeatures {
    pub const NAMES: [&'static str; 6] = [
        "n_routes",
        "n_points",
        "median_spatial_sampling",
        "median_temporal_sampling",
        "median_duration",
        "mean_distance",
    ];

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.n_routes as f64,
            self.n_points as f64,
            self.median_spatial_sampling,
            self.median_temporal_sampling,
            self.median_duration,
            self.mean_distance,
        ]
    }

    pub fn compute(segments: &[Segment]) -> Self {
        let mut gaps_m = Vec::new();
        let mut gaps_s = Vec::new();
        for s in segments {
            for w in s.points.windows(2) {
                gaps_m.push(haversine_distance(w[0].pos, w[1].pos));
                gaps_s.push((w[1].ts - w[0].ts) as f64);
            }
        }
        let durations: Vec<f64> = segments.iter().map(|s| (s.t_end - s.t_start) as f64).collect();
        let distances = segments.iter().map(|s| s.distance).collect();
        let n = segments.len();
        AggregateFeatures {
            n_routes: n,
            n_points: segments.iter().map(|s| s.points.len()).sum(),
            median_spatial_sampling: median(gaps_m),
            median_temporal_sampling: median(gaps_s),
            median_duration: median(durations),
            mean_distance: if n == 0 { 0.0 } else { sorted_sum(distances) / n as f64 },
        }
    }
}

/// Summation in sorted order, so the result does not depend on member order.
fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteGroup {
    pub key: GroupKey,
    pub features: AggregateFeatures,
    pub low_support: bool,
    pub segments: Vec<Segment>,
}

/// Group complete segments by (departure, destination, vessel type). Groups
/// come out in key order and members in (mmsi, start time) order.
pub fn group_routes(segments: Vec<Segment>, min_group_routes: usize) -> Vec<RouteGroup> {
    let mut by_key: BTreeMap<GroupKey, Vec<Segment>> = BTreeMap::new();
    for s in segments.into_iter().filter(Segment::is_complete) {
        let (Some(dep), Some(dst)) = (s.departure_port, s.arrival_port) else {
            continue;
        };
        by_key
            .entry(GroupKey {
                departure_port: dep,
                destination_port: dst,
                vessel_type: s.vessel_type,
            })
            .or_default()
            .push(s);
    }
    by_key
        .into_par_iter()
        .map(|(key, mut segs)| {
            segs.sort_by_key(|a| (a.mmsi, a.t_start));
            let features = AggregateFeatures::compute(&segs);
            RouteGroup {
                key,
                features,
                low_support: features.n_routes < min_group_routes,
                segments: segs,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "group_key",
    "departure_port",
    "destination_port",
    "vessel_type",
    "n_routes",
    "n_points",
    "median_spatial_sampling_m",
    "median_temporal_sampling_s",
    "median_duration_s",
    "mean_distance_m",
];

/// One CSV row per group, the input to manual parameter labelling.
pub fn write_summary_csv<W: Write>(out: W, groups: &[RouteGroup]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for g in groups {
        let f = &g.features;
        w.write_record([
            g.key.to_string(),
            g.key.departure_port.to_string(),
            g.key.destination_port.to_string(),
            g.key.vessel_type.to_string(),
            f.n_routes.to_string(),
            f.n_points.to_string(),
            f.median_spatial_sampling.to_string(),
            f.median_temporal_sampling.to_string(),
            f.median_duration.to_string(),
            f.mean_distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    group_key: String,
    n_routes: usize,
    n_points: usize,
    median_spatial_sampling_m: f64,
    median_temporal_sampling_s: f64,
    median_duration_s: f64,
    mean_distance_m: f64,
}

/// Read back the summary CSV as (key, features) pairs.
pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<(GroupKey, AggregateFeatures)>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<SummaryRow>() {
        let row = row.map_err(|e| e.to_string())?;
        out.push((
            row.group_key.parse()?,
            AggregateFeatures {
                n_routes: row.n_routes,
                n_points: row.n_points,
                median_spatial_sampling: row.median_spatial_sampling_m,
                median_temporal_sampling: row.median_temporal_sampling_s,
                median_duration: row.median_duration_s,
                mean_distance: row.mean_distance_m,
            },
        ));
    }
    Ok(out)
}
