//! Port-to-port segmentation of vessel tracks with a six-state machine.
//!
//! | from | condition | to |
//! |------|-----------|----|
//! | INIT / LOST | near port and v̄ < departure speed | STATIONARY |
//! | INIT / LOST | otherwise (opens a segment without departure) | SAILING |
//! | STATIONARY (in port) | v̄ ≥ departure speed (opens a segment) | DEPARTURE |
//! | DEPARTURE | beyond the departure port catchment | SAILING |
//! | SAILING | near port and v̄ < departure speed (closes) | ARRIVED |
//! | SAILING | v̄ < stop speed away from ports | STATIONARY (off port) |
//! | STATIONARY (off port) | v̄ ≥ departure speed | SAILING |
//! | ARRIVED | next record | STATIONARY |
//! | any | reporting gap > `t_lost` (closes without arrival) | LOST |
//!
//! v̄ is the trailing average speed over `window` seconds.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geo::{haversine_distance, Knots, LatLon, Meters, Seconds};
use crate::ingest::{AisRecord, VesselTrack, VesselType};
use crate::motion::{record_speed, RollingSpeed};
use crate::ports::{nearest_port, PortDatabase};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("mmsi {mmsi}: record at {ts} does not follow {prev_ts}")]
    OutOfOrder { mmsi: u32, prev_ts: Seconds, ts: Seconds },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub min_speed_departure: Knots,
    pub v_stop: Knots,
    pub t_lost: Seconds,
    pub window: Seconds,
    pub d_port_slack: Meters,
    pub min_segment_points: usize,
    pub min_segment_distance: Meters,
    pub t_merge_max: Seconds,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            min_speed_departure: 2.0,
            v_stop: 0.5,
            t_lost: 6 * 3600,
            window: 600,
            d_port_slack: 1_000.0,
            min_segment_points: 10,
            min_segment_distance: 5_000.0,
            t_merge_max: 48 * 3600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FsmState {
    Init,
    Departure,
    Sailing,
    Stationary,
    Arrived,
    Lost,
}

/// A fix as kept inside segments: time, position and reported speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub ts: Seconds,
    pub pos: LatLon,
    pub sog: Option<Knots>,
}

impl From<&AisRecord> for TrackPoint {
    fn from(r: &AisRecord) -> Self {
        TrackPoint {
            ts: r.ts,
            pos: r.pos,
            sog: r.sog,
        }
    }
}

impl Serialize for TrackPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.ts, self.pos.lat, self.pos.lon, self.sog).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrackPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (ts, lat, lon, sog) = <(Seconds, f64, f64, Option<f64>)>::deserialize(d)?;
        let pos = LatLon::new(lat, lon).map_err(serde::de::Error::custom)?;
        Ok(TrackPoint { ts, pos, sog })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Completeness {
    Complete,
    NoDeparture,
    NoArrival,
    Orphan,
}

impl Completeness {
    pub fn from_ports(departure: Option<u32>, arrival: Option<u32>) -> Self {
        match (departure, arrival) {
            (Some(_), Some(_)) => Completeness::Complete,
            (None, Some(_)) => Completeness::NoDeparture,
            (Some(_), None) => Completeness::NoArrival,
            (None, None) => Completeness::Orphan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mmsi: u32,
    pub vessel_type: VesselType,
    pub departure_port: Option<u32>,
    pub arrival_port: Option<u32>,
    pub completeness: Completeness,
    #[serde(rename = "destination")]
    pub declared_destination: String,
    pub t_start: Seconds,
    pub t_end: Seconds,
    #[serde(rename = "distance_m")]
    pub distance: Meters,
    pub points: Vec<TrackPoint>,
}

impl Segment {
    pub fn new(
        mmsi: u32,
        vessel_type: VesselType,
        departure_port: Option<u32>,
        arrival_port: Option<u32>,
        declared_destination: String,
        points: Vec<TrackPoint>,
    ) -> Self {
        let (t_start, t_end) = match (points.first(), points.last()) {
            (Some(a), Some(b)) => (a.ts, b.ts),
            _ => (0, 0),
        };
        Segment {
            mmsi,
            vessel_type,
            departure_port,
            arrival_port,
            completeness: Completeness::from_ports(departure_port, arrival_port),
            declared_destination,
            t_start,
            t_end,
            distance: path_length(&points),
            points,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completeness == Completeness::Complete
    }

    pub fn recompute_distance(&mut self) {
        self.distance = path_length(&self.points);
    }
}

pub fn path_length(points: &[TrackPoint]) -> Meters {
    points
        .windows(2)
        .map(|w| haversine_distance(w[0].pos, w[1].pos))
        .sum()
}

/// Uppercase, trim and collapse internal whitespace.
pub fn normalize_destination(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSegment {
    pub departure: Option<u32>,
    pub points: Vec<AisRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FsmEvent {
    SegmentOpened { departure: Option<u32> },
    SegmentClosed {
        departure: Option<u32>,
        arrival: Option<u32>,
        points: Vec<AisRecord>,
    },
    /// A departure that fell back to rest inside the port catchment.
    SegmentAborted,
}

/// Running state carried between [`fsm_step`] calls.
#[derive(Debug, Clone)]
pub struct FsmContext {
    pub prev: Option<AisRecord>,
    pub rolling: RollingSpeed,
    pub open: Option<OpenSegment>,
    /// Port where the vessel is currently at rest, if known.
    pub berth: Option<u32>,
}

impl FsmContext {
    pub fn new(cfg: &SegmentationConfig) -> Self {
        FsmContext {
            prev: None,
            rolling: RollingSpeed::new(cfg.window),
            open: None,
            berth: None,
        }
    }

    fn open_segment(&mut self, departure: Option<u32>, rec: &AisRecord, events: &mut Vec<FsmEvent>) {
        self.open = Some(OpenSegment {
            departure,
            points: vec![rec.clone()],
        });
        events.push(FsmEvent::SegmentOpened { departure });
    }

    fn close_segment(&mut self, arrival: Option<u32>, events: &mut Vec<FsmEvent>) {
        if let Some(seg) = self.open.take() {
            events.push(FsmEvent::SegmentClosed {
                departure: seg.departure,
                arrival,
                points: seg.points,
            });
        }
    }

    fn extend(&mut self, rec: &AisRecord) {
        if let Some(seg) = self.open.as_mut() {
            seg.points.push(rec.clone());
        }
    }
}

/// Advance the machine by one record.
pub fn fsm_step(
    state: FsmState,
    rec: &AisRecord,
    ctx: &mut FsmContext,
    db: &PortDatabase,
    cfg: &SegmentationConfig,
) -> Result<(FsmState, Vec<FsmEvent>), SegmentError> {
    let mut events = Vec::new();
    if let Some(prev) = &ctx.prev {
        if rec.ts <= prev.ts {
            return Err(SegmentError::OutOfOrder {
                mmsi: rec.mmsi,
                prev_ts: prev.ts,
                ts: rec.ts,
            });
        }
        if rec.ts - prev.ts > cfg.t_lost {
            ctx.close_segment(None, &mut events);
            ctx.rolling.clear();
            ctx.rolling.push(rec.ts, rec.sog);
            ctx.berth = None;
            ctx.prev = Some(rec.clone());
            return Ok((FsmState::Lost, events));
        }
    }

    ctx.rolling.push(rec.ts, record_speed(ctx.prev.as_ref(), rec));
    let v = ctx.rolling.mean().unwrap_or(0.0);
    let near = nearest_port(rec.pos, db, cfg.d_port_slack).map(|(p, _)| p.port_id);
    let slow = v < cfg.min_speed_departure;

    let next = match state {
        FsmState::Init | FsmState::Lost => {
            if near.is_some() && slow {
                ctx.berth = near;
                FsmState::Stationary
            } else {
                ctx.open_segment(None, rec, &mut events);
                FsmState::Sailing
            }
        }
        FsmState::Stationary if ctx.open.is_some() => {
            ctx.extend(rec);
            if slow {
                FsmState::Stationary
            } else {
                FsmState::Sailing
            }
        }
        FsmState::Stationary => {
            if slow {
                if near.is_some() {
                    ctx.berth = near;
                }
                FsmState::Stationary
            } else {
                ctx.open_segment(near.or(ctx.berth), rec, &mut events);
                FsmState::Departure
            }
        }
        FsmState::Departure => {
            ctx.extend(rec);
            let departure = ctx.open.as_ref().and_then(|s| s.departure);
            let outside = match departure.and_then(|id| db.get(id)) {
                Some(port) => {
                    haversine_distance(rec.pos, port.centroid) > port.radius + cfg.d_port_slack
                }
                None => true,
            };
            if outside {
                FsmState::Sailing
            } else if slow {
                ctx.open = None;
                events.push(FsmEvent::SegmentAborted);
                FsmState::Stationary
            } else {
                FsmState::Departure
            }
        }
        FsmState::Sailing => {
            ctx.extend(rec);
            if near.is_some() && slow {
                ctx.close_segment(near, &mut events);
                ctx.berth = near;
                FsmState::Arrived
            } else if v < cfg.v_stop && near.is_none() {
                FsmState::Stationary
            } else {
                FsmState::Sailing
            }
        }
        FsmState::Arrived => FsmState::Stationary,
    };
    ctx.prev = Some(rec.clone());
    Ok((next, events))
}

fn dominant_destination(points: &[AisRecord]) -> String {
    let mut counts: Vec<(String, usize, usize)> = Vec::new();
    for (i, r) in points.iter().enumerate() {
        let Some(d) = r.destination.as_deref() else { continue };
        let d = normalize_destination(d);
        if d.is_empty() {
            continue;
        }
        match counts.iter_mut().find(|(k, _, _)| *k == d) {
            Some(e) => {
                e.1 += 1;
                e.2 = i;
            }
            None => counts.push((d, 1, i)),
        }
    }
    // most frequent, then most recent
    counts
        .into_iter()
        .max_by_key(|(_, n, last)| (*n, *last))
        .map(|(d, _, _)| d)
        .unwrap_or_default()
}

/// Cut one track into segments. Segments shorter than the configured point
/// count or travelled distance are dropped.
pub fn extract_segments(
    track: &VesselTrack,
    db: &PortDatabase,
    cfg: &SegmentationConfig,
) -> Result<Vec<Segment>, SegmentError> {
    let mut ctx = FsmContext::new(cfg);
    let mut state = FsmState::Init;
    let mut closed = Vec::new();
    for rec in &track.records {
        let (next, events) = fsm_step(state, rec, &mut ctx, db, cfg)?;
        state = next;
        closed.extend(events);
    }
    ctx.close_segment(None, &mut closed);

    let segments = closed
        .into_iter()
        .filter_map(|e| match e {
            FsmEvent::SegmentClosed {
                departure,
                arrival,
                points,
            } => Some(Segment::new(
                track.mmsi,
                track.vessel_type,
                departure,
                arrival,
                dominant_destination(&points),
                points.iter().map(TrackPoint::from).collect(),
            )),
            _ => None,
        })
        .filter(|s| s.points.len() >= cfg.min_segment_points && s.distance >= cfg.min_segment_distance)
        .collect();
    Ok(segments)
}

fn mergeable(a: &Segment, b: &Segment, t_merge_max: Seconds) -> bool {
    a.arrival_port.is_none()
        && b.departure_port.is_none()
        && !a.declared_destination.is_empty()
        && a.declared_destination == b.declared_destination
        && b.t_start - a.t_end <= t_merge_max
}

/// Concatenate runs of consecutive partial segments of one vessel that
/// declare the same destination.
pub fn reduce_by_destination(segments: Vec<Segment>, t_merge_max: Seconds) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match out.last_mut() {
            Some(last) if last.mmsi == seg.mmsi && mergeable(last, &seg, t_merge_max) => {
                last.points.extend(seg.points);
                last.arrival_port = seg.arrival_port;
                last.t_end = seg.t_end;
                last.completeness = Completeness::from_ports(last.departure_port, last.arrival_port);
                last.recompute_distance();
            }
            _ => out.push(seg),
        }
    }
    out
}

/// Segment every track in parallel and merge partials per vessel. Output is
/// ordered by track order, then time.
pub fn segment_tracks(
    tracks: &[VesselTrack],
    db: &PortDatabase,
    cfg: &SegmentationConfig,
) -> Result<Vec<Segment>, SegmentError> {
    let per_track: Vec<Vec<Segment>> = tracks
        .par_iter()
        .map(|t| extract_segments(t, db, cfg).map(|s| reduce_by_destination(s, cfg.t_merge_max)))
        .collect::<Result<_, _>>()?;
    Ok(per_track.into_iter().flatten().collect())
}
