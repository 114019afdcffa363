//! Deterministic DBSCAN over geographic points with a great-circle metric.
//!
//! Core points are found first, core points are then joined into clusters
//! by breadth-first search in input order, and every border point joins the
//! cluster of its lowest-index core neighbor. Cluster ids follow discovery
//! order, so the output depends only on the input order of the points.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::geo::{haversine_distance, LatLon, Meters, EARTH_RADIUS_M};

/// Above this many points the neighbor search switches to a latitude-band index.
pub const BAND_INDEX_THRESHOLD: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: Meters,
    pub min_samples: usize,
}

impl DbscanParams {
    pub fn new(eps: Meters, min_samples: usize) -> Option<Self> {
        (eps > 0.0 && eps.is_finite() && min_samples >= 1).then_some(DbscanParams { eps, min_samples })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Noise,
    Cluster(usize),
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(c) => Some(c),
            Label::Noise => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<Label>,
    pub n_clusters: usize,
}

impl Clustering {
    /// Member indices of every cluster, in cluster-id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Label::Cluster(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Noise)
            .map(|(i, _)| i)
    }
}

pub fn dbscan(points: &[LatLon], params: DbscanParams) -> Clustering {
    let neighbors = if points.len() > BAND_INDEX_THRESHOLD {
        banded_neighbors(points, params.eps)
    } else {
        quadratic_neighbors(points, params.eps)
    };
    cluster_from_neighbors(&neighbors, params.min_samples)
}

fn cluster_from_neighbors(neighbors: &[Vec<usize>], min_samples: usize) -> Clustering {
    let n = neighbors.len();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut labels = vec![Label::Noise; n];
    let mut n_clusters = 0;
    let mut queue = VecDeque::new();

    for start in 0..n {
        if !core[start] || labels[start] != Label::Noise {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        labels[start] = Label::Cluster(id);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if core[q] && labels[q] == Label::Noise {
                    labels[q] = Label::Cluster(id);
                    queue.push_back(q);
                }
            }
        }
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        // neighbor lists are sorted ascending
        if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
            labels[i] = labels[c];
        }
    }

    Clustering { labels, n_clusters }
}

/// Sorted neighbor lists (each point includes itself).
fn quadratic_neighbors(points: &[LatLon], eps: Meters) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        out[i].push(i);
        for j in (i + 1)..n {
            if haversine_distance(points[i], points[j]) <= eps {
                out[i].push(j);
                out[j].push(i);
            }
        }
    }
    for nb in &mut out {
        nb.sort_unstable();
    }
    out
}

fn banded_neighbors(points: &[LatLon], eps: Meters) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].lat.total_cmp(&points[b].lat).then(a.cmp(&b)));
    let lats: Vec<f64> = order.iter().map(|&i| points[i].lat).collect();
    // a little slack keeps rounding at the band edge from losing a pair
    let band = (eps / EARTH_RADIUS_M).to_degrees() * (1.0 + 1e-9) + 1e-12;

    let mut out = vec![Vec::new(); points.len()];
    for (rank, &i) in order.iter().enumerate() {
        let hi = lats.partition_point(|&l| l <= points[i].lat + band);
        for &j in &order[rank..hi] {
            if j == i || haversine_distance(points[i], points[j]) <= eps {
                out[i].push(j);
                if j != i {
                    out[j].push(i);
                }
            }
        }
    }
    for nb in &mut out {
        nb.sort_unstable();
    }
    out
}
