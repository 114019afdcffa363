//! Linear regression of the route extraction parameters on group features.
//!
//! Each of the three targets (eps, min_samples, r) gets its own ordinary
//! least squares fit on standardized features.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

use crate::aggregation::{AggregateFeatures, GroupKey};
use crate::geo::Meters;
use crate::routes::{default_d_complete, ExtractionParams};

pub const N_FEATURES: usize = 6;
pub const MIN_TRAINING_ROWS: usize = 8;
pub const RIDGE_LAMBDA: f64 = 1e-6;
pub const TARGET_NAMES: [&str; 3] = ["eps_m", "min_samples", "r_m"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegressionError {
    #[error("need at least {MIN_TRAINING_ROWS} labeled groups, got {0}")]
    TooFewRows(usize),
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub eps: Meters,
    pub min_samples: usize,
    pub r: Meters,
}

impl Targets {
    fn as_array(&self) -> [f64; 3] {
        [self.eps, self.min_samples as f64, self.r]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledGroup {
    pub group_key: GroupKey,
    pub features: AggregateFeatures,
    pub targets: Targets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFit {
    pub target: String,
    pub intercept: f64,
    /// Slopes on standardized features; 0 for dropped features.
    pub coefficients: [f64; N_FEATURES],
    pub residual_rms: f64,
    pub ridge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub features: Vec<String>,
    pub mean: [f64; N_FEATURES],
    /// 0 marks a zero-variance feature that was dropped.
    pub stddev: [f64; N_FEATURES],
    pub fits: Vec<TargetFit>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampRanges {
    pub eps: (Meters, Meters),
    pub min_samples: (usize, usize),
    pub r: (Meters, Meters),
}

impl Default for ClampRanges {
    fn default() -> Self {
        ClampRanges {
            eps: (100.0, 20_000.0),
            min_samples: (2, 20),
            r: (500.0, 50_000.0),
        }
    }
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot vanishes relative to the matrix scale.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = scale * n as f64 * f64::EPSILON;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn standardization(rows: &[[f64; N_FEATURES]]) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    let mut std = [0.0; N_FEATURES];
    for j in 0..N_FEATURES {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        // sorted sums keep the fit independent of row order
        col.sort_by(f64::total_cmp);
        mean[j] = col.iter().sum::<f64>() / n;
        let mut sq: Vec<f64> = col.iter().map(|v| (v - mean[j]).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let s = (sq.iter().sum::<f64>() / n).sqrt();
        let negligible = s <= 1e-12 * mean[j].abs().max(1.0);
        std[j] = if negligible { 0.0 } else { s };
    }
    (mean, std)
}

fn design_row(x: &[f64; N_FEATURES], mean: &[f64; N_FEATURES], std: &[f64; N_FEATURES]) -> Vec<f64> {
    let mut row = vec![1.0];
    row.extend((0..N_FEATURES).filter(|&j| std[j] > 0.0).map(|j| (x[j] - mean[j]) / std[j]));
    row
}

pub fn fit(labeled: &[LabeledGroup]) -> Result<RegressionModel, RegressionError> {
    if labeled.len() < MIN_TRAINING_ROWS {
        return Err(RegressionError::TooFewRows(labeled.len()));
    }
    // canonical order so the result does not depend on input order
    let mut rows: Vec<&LabeledGroup> = labeled.iter().collect();
    rows.sort_by(|a, b| {
        a.group_key.cmp(&b.group_key).then_with(|| {
            let (x, y) = (a.features.as_array(), b.features.as_array());
            x.iter().zip(&y).fold(std::cmp::Ordering::Equal, |o, (p, q)| o.then(p.total_cmp(q)))
        })
    });
    let xs: Vec<[f64; N_FEATURES]> = rows.iter().map(|g| g.features.as_array()).collect();
    let ys: Vec<[f64; 3]> = rows.iter().map(|g| g.targets.as_array()).collect();
    for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(RegressionError::NonFinite { row: i });
        }
    }

    let (mean, std) = standardization(&xs);
    let design: Vec<Vec<f64>> = xs.iter().map(|x| design_row(x, &mean, &std)).collect();
    let p = design[0].len();
    let mut gram = vec![vec![0.0; p]; p];
    for row in &design {
        for i in 0..p {
            for j in 0..p {
                gram[i][j] += row[i] * row[j];
            }
        }
    }

    let mut fits = Vec::with_capacity(3);
    for (t, name) in TARGET_NAMES.iter().enumerate() {
        let rhs: Vec<f64> = (0..p)
            .map(|i| design.iter().zip(&ys).map(|(row, y)| row[i] * y[t]).sum())
            .collect();
        let (beta, ridge) = match solve_linear(gram.clone(), rhs.clone()) {
            Some(b) => (b, false),
            None => {
                log::warn!("singular normal equations for {name}; adding ridge {RIDGE_LAMBDA}");
                let mut g = gram.clone();
                for (i, row) in g.iter_mut().enumerate().skip(1) {
                    row[i] += RIDGE_LAMBDA;
                }
                let b = solve_linear(g, rhs).unwrap_or_else(|| vec![0.0; p]);
                (b, true)
            }
        };
        let mut coefficients = [0.0; N_FEATURES];
        let mut k = 1;
        for j in 0..N_FEATURES {
            if std[j] > 0.0 {
                coefficients[j] = beta[k];
                k += 1;
            }
        }
        let sse: f64 = design
            .iter()
            .zip(&ys)
            .map(|(row, y)| {
                let pred: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
                (pred - y[t]).powi(2)
            })
            .sum();
        fits.push(TargetFit {
            target: name.to_string(),
            intercept: beta[0],
            coefficients,
            residual_rms: (sse / design.len() as f64).sqrt(),
            ridge,
        });
    }

    Ok(RegressionModel {
        features: AggregateFeatures::NAMES.iter().map(|s| s.to_string()).collect(),
        mean,
        stddev: std,
        fits,
        n_rows: rows.len(),
    })
}

impl RegressionModel {
    /// Unclamped predictions for (eps, min_samples, r).
    pub fn predict_raw(&self, features: &AggregateFeatures) -> [f64; 3] {
        let x = features.as_array();
        let mut out = [0.0; 3];
        for (t, fit) in self.fits.iter().enumerate().take(3) {
            out[t] = fit.intercept
                + (0..N_FEATURES)
                    .filter(|&j| self.stddev[j] > 0.0)
                    .map(|j| fit.coefficients[j] * (x[j] - self.mean[j]) / self.stddev[j])
                    .sum::<f64>();
        }
        out
    }

    pub fn predict(&self, features: &AggregateFeatures) -> ExtractionParams {
        self.predict_with(features, &ClampRanges::default())
    }

    pub fn predict_with(&self, features: &AggregateFeatures, clamp: &ClampRanges) -> ExtractionParams {
        let [eps, ms, r] = self.predict_raw(features);
        clamp_params(eps, ms, r, clamp)
    }
}

/// Clamp raw predictions into valid extraction parameters.
pub fn clamp_params(eps: f64, min_samples: f64, r: f64, clamp: &ClampRanges) -> ExtractionParams {
    let finite = |v: f64, lo: f64| if v.is_finite() { v } else { lo };
    let eps = finite(eps, clamp.eps.0).clamp(clamp.eps.0, clamp.eps.1);
    let ms = finite(min_samples, clamp.min_samples.0 as f64).round();
    let ms = (ms.max(0.0) as usize).clamp(clamp.min_samples.0, clamp.min_samples.1);
    let r = finite(r, clamp.r.0).clamp(clamp.r.0, clamp.r.1).max(eps);
    let mut p = ExtractionParams::new(eps, ms, r);
    p.d_complete = default_d_complete(r);
    p
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    group_key: String,
    eps_m: f64,
    min_samples: usize,
    r_m: f64,
}

/// Read manual labels (`group_key,eps_m,min_samples,r_m`).
pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<(GroupKey, Targets)>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row.map_err(|e| e.to_string())?;
        if row.r_m < row.eps_m {
            return Err(format!("label for {} has r_m < eps_m", row.group_key));
        }
        out.push((
            row.group_key.parse()?,
            Targets {
                eps: row.eps_m,
                min_samples: row.min_samples,
                r: row.r_m,
            },
        ));
    }
    Ok(out)
}

/// Join labels with group features. A label naming an unknown group is an error.
pub fn join_labels(
    summary: &[(GroupKey, AggregateFeatures)],
    labels: &[(GroupKey, Targets)],
) -> Result<Vec<LabeledGroup>, String> {
    let by_key: BTreeMap<GroupKey, AggregateFeatures> = summary.iter().copied().collect();
    labels
        .iter()
        .map(|(key, targets)| {
            let features = by_key.get(key).ok_or_else(|| format!("label for unknown group {key}"))?;
            Ok(LabeledGroup {
                group_key: *key,
                features: *features,
                targets: *targets,
            })
        })
        .collect()
}
