//! Standard route extraction by an iterative density-clustering walk.
//!
//! A route starts at the departure port centroid. At every step the
//! unvisited pooled fixes around the route front are clustered with DBSCAN
//! and the front moves to the barycenter of the cluster found. When several
//! clusters appear the branch splits, one child per cluster, and the walk
//! continues breadth-first until every branch runs out of points, reaches
//! the destination, or hits the iteration cap.
//!
//! Each branch keeps its own visited flags (children inherit the parent's
//! flags at split time). At a split every member segment is handed to the
//! child whose cluster holds most of its fixes in that step, and a child
//! only draws fixes from the segments it owns plus those not yet assigned.
//! Clusters that win no segment are treated as noise.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::VecDeque;

use crate::aggregation::{GroupKey, RouteGroup};
use crate::clustering::{dbscan, DbscanParams};
use crate::geo::{barycenter, haversine_distance, LatLon, Meters};
use crate::ports::PortDatabase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionParams {
    pub eps: Meters,
    pub min_samples: usize,
    /// Search radius around the route front.
    pub r: Meters,
    pub expansion_factor: f64,
    pub max_expansions: usize,
    pub d_complete: Meters,
    pub max_iterations: usize,
}

impl ExtractionParams {
    pub const DEFAULT_EXPANSION_FACTOR: f64 = 1.5;
    pub const DEFAULT_MAX_EXPANSIONS: usize = 3;
    pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

    /// Parameters with default expansion policy and `d_complete = max(2r, 5 km)`.
    pub fn new(eps: Meters, min_samples: usize, r: Meters) -> Self {
        ExtractionParams {
            eps,
            min_samples,
            r,
            expansion_factor: Self::DEFAULT_EXPANSION_FACTOR,
            max_expansions: Self::DEFAULT_MAX_EXPANSIONS,
            d_complete: default_d_complete(r),
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn is_valid(&self) -> bool {
        let positive = [self.eps, self.r, self.expansion_factor, self.d_complete]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        positive
            && self.min_samples >= 1
            && self.max_iterations >= 1
            && self.expansion_factor >= 1.0
            && self.r >= self.eps
    }

    fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps: self.eps,
            min_samples: self.min_samples,
        }
    }
}

pub fn default_d_complete(r: Meters) -> Meters {
    (2.0 * r).max(5_000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardRoute {
    pub route_id: String,
    pub group_key: GroupKey,
    /// Branch path, e.g. `0.1` for the second child of a split of the root.
    pub label: String,
    pub waypoints: Vec<LatLon>,
    pub completed: bool,
    /// Distinct member segments whose fixes joined a cluster on this branch.
    pub support: usize,
    pub outlier_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub label: String,
    pub front: LatLon,
    pub radius: Meters,
    pub expansions: usize,
    pub selected: usize,
    pub clusters: usize,
    pub noise: usize,
    pub barycenters: Vec<LatLon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub group_key: GroupKey,
    pub pool_size: usize,
    pub iterations: usize,
    pub expansions: usize,
    pub splits: usize,
    /// Indices, into the group's segment fixes concatenated in segment
    /// order, of fixes labelled noise on any branch (distinct, ascending).
    pub outlier_indices: Vec<usize>,
    pub outlier_points: usize,
    pub steps: Vec<StepAudit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub routes: Vec<StandardRoute>,
    pub audit: GroupAudit,
}

struct Pool {
    points: Vec<LatLon>,
    segment_of: Vec<usize>,
    n_segments: usize,
}

impl Pool {
    fn from_group(group: &RouteGroup) -> Self {
        let mut points = Vec::new();
        let mut segment_of = Vec::new();
        for (s, seg) in group.segments.iter().enumerate() {
            for p in &seg.points {
                points.push(p.pos);
                segment_of.push(s);
            }
        }
        Pool {
            points,
            segment_of,
            n_segments: group.segments.len(),
        }
    }
}

#[derive(Clone)]
struct Branch {
    label: Vec<usize>,
    waypoints: Vec<LatLon>,
    visited: Vec<bool>,
    /// Segment eligibility; `true` means the branch may draw from it.
    eligible: Vec<bool>,
    contributors: Vec<bool>,
    outliers: usize,
    iterations: usize,
    armed: bool,
}

fn label_string(label: &[usize]) -> String {
    label
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(".")
}

enum StepOutcome {
    Continue,
    Finalize { completed: bool },
    Split(Vec<Branch>),
}

struct Walker<'a> {
    pool: &'a Pool,
    params: &'a ExtractionParams,
    destination: LatLon,
    audit: &'a mut GroupAudit,
    noise_flags: Vec<bool>,
}

impl Walker<'_> {
    fn select(&self, b: &Branch, front: LatLon, radius: Meters) -> Vec<usize> {
        (0..self.pool.points.len())
            .filter(|&i| {
                !b.visited[i]
                    && b.eligible[self.pool.segment_of[i]]
                    && haversine_distance(front, self.pool.points[i]) <= radius
            })
            .collect()
    }

    /// The walk stops within d_complete of the destination, so the last
    /// stretch of the pool is never clustered. One DBSCAN pass over what the
    /// branch left unvisited there puts its noise in the outlier ledger.
    /// Waypoints are not touched.
    fn closing_sweep(&mut self, b: &mut Branch) {
        let selected = self.select(b, self.destination, self.params.d_complete);
        if selected.is_empty() {
            return;
        }
        let coords: Vec<LatLon> = selected.iter().map(|&i| self.pool.points[i]).collect();
        let clustering = dbscan(&coords, self.params.dbscan());
        for &i in &selected {
            b.visited[i] = true;
        }
        let noise: Vec<usize> = clustering.noise().map(|k| selected[k]).collect();
        b.outliers += noise.len();
        for &i in &noise {
            self.noise_flags[i] = true;
        }
        let barycenters: Vec<LatLon> = clustering
            .members()
            .into_iter()
            .map(|m| {
                let pts: Vec<LatLon> = m.into_iter().map(|k| coords[k]).collect();
                barycenter(&pts).unwrap_or(pts[0])
            })
            .collect();
        self.audit.steps.push(StepAudit {
            label: label_string(&b.label),
            front: self.destination,
            radius: self.params.d_complete,
            expansions: 0,
            selected: selected.len(),
            clusters: barycenters.len(),
            noise: noise.len(),
            barycenters,
        });
    }

    fn step(&mut self, b: &mut Branch) -> StepOutcome {
        let p = self.params;
        let front = *b.waypoints.last().expect("branches start with a waypoint");
        let to_dest = haversine_distance(front, self.destination);
        if to_dest > p.d_complete {
            b.armed = true;
        }
        if b.armed && to_dest <= p.d_complete {
            self.closing_sweep(b);
            return StepOutcome::Finalize { completed: true };
        }
        if b.iterations >= p.max_iterations {
            return StepOutcome::Finalize { completed: false };
        }
        b.iterations += 1;
        self.audit.iterations += 1;

        // expansions are capped at 2r so consecutive waypoints stay within 2r
        let cap = 2.0 * p.r;
        let mut radius = p.r;
        let mut expansions = 0;
        let mut selected = self.select(b, front, radius);
        while selected.len() < p.min_samples && expansions < p.max_expansions && radius < cap {
            radius = (radius * p.expansion_factor).min(cap);
            expansions += 1;
            selected = self.select(b, front, radius);
        }
        self.audit.expansions += expansions;
        if selected.len() < p.min_samples {
            return StepOutcome::Finalize { completed: false };
        }

        let coords: Vec<LatLon> = selected.iter().map(|&i| self.pool.points[i]).collect();
        let clustering = dbscan(&coords, p.dbscan());
        for &i in &selected {
            b.visited[i] = true;
        }
        let mut clusters: Vec<Vec<usize>> = clustering
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(|k| selected[k]).collect())
            .collect();
        let mut noise: Vec<usize> = clustering.noise().map(|k| selected[k]).collect();

        let mut owners: Vec<Option<usize>> = vec![None; self.pool.n_segments];
        if clusters.len() >= 2 {
            // majority vote per segment; ties go to the earlier cluster
            let mut votes = vec![vec![0usize; clusters.len()]; self.pool.n_segments];
            for (c, members) in clusters.iter().enumerate() {
                for &i in members {
                    votes[self.pool.segment_of[i]][c] += 1;
                }
            }
            for (s, v) in votes.iter().enumerate() {
                let best = v.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
                if let Some((c, &n)) = best {
                    if n > 0 {
                        owners[s] = Some(c);
                    }
                }
            }
            let won: Vec<bool> = (0..clusters.len()).map(|c| owners.contains(&Some(c))).collect();
            let mut kept = Vec::new();
            let mut remap = vec![None; clusters.len()];
            for (c, members) in clusters.into_iter().enumerate() {
                if won[c] {
                    remap[c] = Some(kept.len());
                    kept.push(members);
                } else {
                    noise.extend(members);
                }
            }
            for o in owners.iter_mut() {
                *o = o.and_then(|c| remap[c]);
            }
            clusters = kept;
        }

        b.outliers += noise.len();
        for &i in &noise {
            self.noise_flags[i] = true;
        }
        let barycenters: Vec<LatLon> = clusters
            .iter()
            .map(|m| {
                let pts: Vec<LatLon> = m.iter().map(|&i| self.pool.points[i]).collect();
                barycenter(&pts).unwrap_or(pts[0])
            })
            .collect();
        self.audit.steps.push(StepAudit {
            label: label_string(&b.label),
            front,
            radius,
            expansions,
            selected: selected.len(),
            clusters: clusters.len(),
            noise: noise.len(),
            barycenters: barycenters.clone(),
        });

        match clusters.len() {
            0 => StepOutcome::Continue,
            1 => {
                for &i in &clusters[0] {
                    b.contributors[self.pool.segment_of[i]] = true;
                }
                b.waypoints.push(barycenters[0]);
                StepOutcome::Continue
            }
            _ => {
                self.audit.splits += 1;
                let children = clusters
                    .iter()
                    .zip(barycenters)
                    .enumerate()
                    .map(|(j, (members, center))| {
                        let mut child = b.clone();
                        child.label.push(j);
                        child.waypoints.push(center);
                        for (s, owner) in owners.iter().enumerate() {
                            if let Some(o) = owner {
                                child.eligible[s] = b.eligible[s] && *o == j;
                            }
                        }
                        for &i in members {
                            child.contributors[self.pool.segment_of[i]] = true;
                        }
                        child
                    })
                    .collect();
                StepOutcome::Split(children)
            }
        }
    }
}

/// Build the standard routes of one group. Port centroids come from `db`.
pub fn extract_standard_routes(
    group: &RouteGroup,
    db: &PortDatabase,
    params: &ExtractionParams,
) -> Extraction {
    let departure = db
        .get(group.key.departure_port)
        .map(|p| p.centroid)
        .or_else(|| group.segments.first().and_then(|s| s.points.first()).map(|p| p.pos));
    let destination = db
        .get(group.key.destination_port)
        .map(|p| p.centroid)
        .or_else(|| group.segments.first().and_then(|s| s.points.last()).map(|p| p.pos));
    match (departure, destination) {
        (Some(d), Some(a)) => extract_between(group, d, a, params),
        _ => Extraction {
            routes: Vec::new(),
            audit: empty_audit(group.key, 0),
        },
    }
}

fn empty_audit(key: GroupKey, pool_size: usize) -> GroupAudit {
    GroupAudit {
        group_key: key,
        pool_size,
        iterations: 0,
        expansions: 0,
        splits: 0,
        outlier_indices: Vec::new(),
        outlier_points: 0,
        steps: Vec::new(),
    }
}

/// Build the standard routes of one group between explicit port centroids.
pub fn extract_between(
    group: &RouteGroup,
    departure: LatLon,
    destination: LatLon,
    params: &ExtractionParams,
) -> Extraction {
    let pool = Pool::from_group(group);
    let mut audit = empty_audit(group.key, pool.points.len());
    let root = Branch {
        label: vec![0],
        waypoints: vec![departure],
        visited: vec![false; pool.points.len()],
        eligible: vec![true; pool.n_segments],
        contributors: vec![false; pool.n_segments],
        outliers: 0,
        iterations: 0,
        armed: group.key.departure_port != group.key.destination_port,
    };

    let mut finished: Vec<(Vec<usize>, StandardRoute)> = Vec::new();
    let mut walker = Walker {
        pool: &pool,
        params,
        destination,
        audit: &mut audit,
        noise_flags: vec![false; pool.points.len()],
    };
    let mut worklist = VecDeque::from([root]);
    while let Some(mut branch) = worklist.pop_front() {
        loop {
            match walker.step(&mut branch) {
                StepOutcome::Continue => continue,
                StepOutcome::Split(children) => {
                    worklist.extend(children);
                    break;
                }
                StepOutcome::Finalize { completed } => {
                    let mut waypoints = branch.waypoints;
                    if completed && waypoints.last() != Some(&destination) {
                        waypoints.push(destination);
                    }
                    let label = label_string(&branch.label);
                    finished.push((
                        branch.label,
                        StandardRoute {
                            route_id: format!("{}/{}", group.key, label),
                            group_key: group.key,
                            label,
                            waypoints,
                            completed,
                            support: branch.contributors.iter().filter(|c| **c).count(),
                            outlier_points: branch.outliers,
                        },
                    ));
                    break;
                }
            }
        }
    }
    let noise_flags = std::mem::take(&mut walker.noise_flags);
    audit.outlier_indices = noise_flags
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| i)
        .collect();
    audit.outlier_points = audit.outlier_indices.len();
    finished.sort_by(|a, b| a.0.cmp(&b.0));
    Extraction {
        routes: finished.into_iter().map(|(_, r)| r).collect(),
        audit,
    }
}

/// GeoJSON feature of a route: a LineString, or a Point for a single waypoint.
pub fn route_to_feature(route: &StandardRoute) -> Value {
    let coords: Vec<Value> = route.waypoints.iter().map(|p| json!([p.lon, p.lat])).collect();
    let geometry = if coords.len() < 2 {
        json!({"type": "Point", "coordinates": coords.first().cloned().unwrap_or(json!([]))})
    } else {
        json!({"type": "LineString", "coordinates": coords})
    };
    json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": {
            "route_id": route.route_id,
            "label": route.label,
            "departure_port": route.group_key.departure_port,
            "destination_port": route.group_key.destination_port,
            "vessel_type": route.group_key.vessel_type,
            "support": route.support,
            "completed": route.completed,
            "outlier_points": route.outlier_points,
        }
    })
}

pub fn routes_to_feature_collection(routes: &[StandardRoute]) -> Value {
    json!({
        "type": "FeatureCollection",
        "features": routes.iter().map(route_to_feature).collect::<Vec<_>>(),
    })
}
