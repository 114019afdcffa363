//! Independent reference implementations used to check the library, plus
//! helpers that run generated scenarios through the pipeline.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use aisroute::config::PipelineConfig;
use aisroute::pipeline::{run_all, RunInputs, RunStats, Workdir};
use aisroute::synth::{generate, GroundTruth, ScenarioSpec};

pub const R_EARTH: f64 = 6_371_000.0;

/// Central angle by the spherical Vincenty formula, which is well
/// conditioned everywhere (unlike the plain law of cosines).
pub fn vincenty_sphere(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let num = ((p2.cos() * dl.sin()).powi(2)
        + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2))
    .sqrt();
    let den = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    R_EARTH * num.atan2(den)
}

/// Labels from a brute-force density-reachability computation: -1 is noise.
/// Core points are joined by the transitive closure of the core adjacency
/// matrix; each border point takes the cluster of its lowest-index core
/// neighbor; clusters are numbered by their lowest-index core point.
pub fn dbscan_oracle(pts: &[(f64, f64)], eps: f64, min_samples: usize) -> Vec<i64> {
    let n = pts.len();
    let close = |i: usize, j: usize| vincenty_sphere(pts[i].0, pts[i].1, pts[j].0, pts[j].1) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_samples).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && close(i, j);
        }
    }
    // Warshall closure
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut root = vec![usize::MAX; n];
    for i in (0..n).filter(|&i| core[i]) {
        root[i] = (0..n).find(|&j| reach[i][j]).unwrap_or(i).min(i);
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| root[i]).collect();
    roots.sort_unstable();
    roots.dedup();
    let id_of = |r: usize| roots.iter().position(|&x| x == r).unwrap() as i64;
    (0..n)
        .map(|i| {
            if core[i] {
                id_of(root[i])
            } else {
                (0..n)
                    .find(|&j| core[j] && close(i, j))
                    .map(|j| id_of(root[j]))
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Points every `step` meters along a polyline given as (lat, lon) pairs,
/// by straight interpolation in latitude and longitude.
pub fn densify(line: &[(f64, f64)], step: f64) -> Vec<(f64, f64)> {
    let mut out = vec![line[0]];
    for w in line.windows(2) {
        let d = vincenty_sphere(w[0].0, w[0].1, w[1].0, w[1].1);
        let n = (d / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let f = k as f64 / n as f64;
            out.push((w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1)));
        }
    }
    out
}

/// Symmetric Hausdorff distance between two polylines, sampled every 50 m.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (da, db) = (densify(a, 50.0), densify(b, 50.0));
    // a point whose nearest neighbor is already closer than the running
    // maximum cannot raise it, so the inner scan may stop early; scanning
    // from the previous nearest index finds such a neighbor quickly
    let directed = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        let mut cmax = 0.0f64;
        let mut start = 0;
        for p in x {
            let mut cmin = f64::INFINITY;
            for k in 0..y.len() {
                let j = (start + k) % y.len();
                let d = vincenty_sphere(p.0, p.1, y[j].0, y[j].1);
                if d < cmin {
                    cmin = d;
                    start = j;
                }
                if cmin < cmax {
                    break;
                }
            }
            cmax = cmax.max(cmin);
        }
        cmax
    };
    directed(&da, &db).max(directed(&db, &da))
}

/// Inverse by Gauss-Jordan elimination with full row swaps.
pub fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Least squares through the pseudo-inverse `(XᵀX)⁻¹Xᵀ` on features
/// standardized with the population standard deviation. Returns the
/// intercept followed by one slope per feature column.
pub fn ols_oracle(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let k = x[0].len();
    let mean: Vec<f64> = (0..k).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..k)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain((0..k).map(|j| (r[j] - mean[j]) / sd[j])).collect())
        .collect();
    let p = k + 1;
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| design.iter().map(|r| r[i] * r[j]).sum()).collect())
        .collect();
    let inv = gauss_jordan_inverse(&gram);
    // pseudo-inverse rows times y
    let beta: Vec<f64> = (0..p)
        .map(|i| {
            design
                .iter()
                .zip(y)
                .map(|(r, yv)| (0..p).map(|j| inv[i][j] * r[j]).sum::<f64>() * yv)
                .sum()
        })
        .collect();
    (beta, mean, sd)
}

pub struct ScenarioRun {
    pub dir: tempfile::TempDir,
    pub stats: RunStats,
    pub truth: GroundTruth,
}

impl ScenarioRun {
    pub fn workdir(&self) -> Workdir {
        Workdir::new(self.dir.path().join("work"))
    }
}

pub fn write_scenario(spec: &ScenarioSpec, dir: &Path) -> (PathBuf, PathBuf, GroundTruth) {
    let g = generate(spec).expect("valid spec");
    let csv = dir.join("ais.csv");
    let reference = dir.join("reference.csv");
    std::fs::write(&csv, &g.csv).unwrap();
    std::fs::write(&reference, spec.reference_csv()).unwrap();
    (csv, reference, g.truth)
}

/// Generate `spec` and run every stage on it with default configuration.
pub fn run_scenario(spec: &ScenarioSpec) -> ScenarioRun {
    let dir = tempfile::tempdir().unwrap();
    let (csv, reference, truth) = write_scenario(spec, dir.path());
    let wd = Workdir::new(dir.path().join("work"));
    let run = RunInputs {
        inputs: vec![csv],
        references: vec![reference],
        labels: None,
    };
    let stats = run_all(&PipelineConfig::default(), &wd, &run).expect("pipeline runs");
    ScenarioRun { dir, stats, truth }
}
