//! Spherical-earth geodesy shared by every stage of the pipeline.
//!
//! All angles are stored in degrees and converted to radians only inside
//! the formulas. Distances use a sphere of radius [`EARTH_RADIUS_M`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance in meters.
pub type Meters = f64;
/// Angle in degrees.
pub type Degrees = f64;
/// Speed in knots.
pub type Knots = f64;
/// Unix time in seconds (UTC).
pub type Seconds = i64;

pub const EARTH_RADIUS_M: Meters = 6_371_000.0;
pub const METERS_PER_NM: f64 = 1852.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} is not finite")]
    Longitude(f64),
    #[error("bearing undefined between coincident points or from a pole")]
    UndefinedBearing,
    #[error("barycenter of an empty point set")]
    EmptyInput,
    #[error("barycenter undefined: points cancel out on the sphere")]
    DegenerateMean,
}

/// A position on the sphere. Longitude is kept in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: Degrees,
    pub lon: Degrees,
}

impl LatLon {
    pub fn new(lat: Degrees, lon: Degrees) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() {
            return Err(GeoError::Longitude(lon));
        }
        Ok(LatLon {
            lat,
            lon: normalize_lon(lon),
        })
    }

    fn to_unit(self) -> [f64; 3] {
        let (phi, lambda) = (self.lat.to_radians(), self.lon.to_radians());
        [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
    }

    fn from_unit(v: [f64; 3]) -> Self {
        let hyp = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let lat = v[2].atan2(hyp).to_degrees();
        let lon = if hyp == 0.0 {
            0.0
        } else {
            v[1].atan2(v[0]).to_degrees()
        };
        LatLon {
            lat: lat.clamp(-90.0, 90.0),
            lon: normalize_lon(lon),
        }
    }

    fn is_pole(self) -> bool {
        (self.lat.abs() - 90.0).abs() < 1e-12
    }
}

/// Wrap any finite longitude into `[-180, 180)`.
pub fn normalize_lon(lon: Degrees) -> Degrees {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Wrap a bearing into `[0, 360)`.
pub fn normalize_bearing(b: Degrees) -> Degrees {
    let w = b.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

pub fn haversine_distance(a: LatLon, b: LatLon) -> Meters {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Forward azimuth from `a` to `b`, clockwise from true north, in `[0, 360)`.
pub fn initial_bearing(a: LatLon, b: LatLon) -> Result<Degrees, GeoError> {
    // every direction points south from the north pole (and vice versa)
    if a.is_pole() || haversine_distance(a, b) == 0.0 {
        return Err(GeoError::UndefinedBearing);
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_bearing(y.atan2(x).to_degrees()))
}

/// Minimal absolute circular difference, in `[0, 180]`.
pub fn angular_difference(h1: Degrees, h2: Degrees) -> Degrees {
    let d = (h1 - h2).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Spherical mean of a point set, taken through the 3-D unit-vector embedding
/// so that sets straddling the antimeridian average correctly.
pub fn barycenter(points: &[LatLon]) -> Result<LatLon, GeoError> {
    match points {
        [] => Err(GeoError::EmptyInput),
        [p] => Ok(*p),
        _ => {
            let mut acc = [0.0f64; 3];
            for p in points {
                let v = p.to_unit();
                acc[0] += v[0];
                acc[1] += v[1];
                acc[2] += v[2];
            }
            let norm = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
            if norm < 1e-9 * points.len() as f64 {
                return Err(GeoError::DegenerateMean);
            }
            Ok(LatLon::from_unit(acc))
        }
    }
}

/// Point reached from `start` after travelling `distance` along the great
/// circle with initial `bearing`.
pub fn destination(start: LatLon, bearing: Degrees, distance: Meters) -> LatLon {
    let delta = distance / EARTH_RADIUS_M;
    let theta = bearing.to_radians();
    let phi1 = start.lat.to_radians();
    let lambda1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos())
        .clamp(-1.0, 1.0)
        .asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    LatLon {
        lat: phi2.to_degrees(),
        lon: normalize_lon(lambda2.to_degrees()),
    }
}

/// Great-circle interpolation between `a` (fraction 0) and `b` (fraction 1).
pub fn interpolate(a: LatLon, b: LatLon, fraction: f64) -> LatLon {
    let (va, vb) = (a.to_unit(), b.to_unit());
    let dot = (va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-12 {
        return a;
    }
    let s = omega.sin();
    let wa = ((1.0 - fraction) * omega).sin() / s;
    let wb = (fraction * omega).sin() / s;
    LatLon::from_unit([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ])
}

/// Smallest distance from `p` to the great-circle arc `a`-`b`.
pub fn distance_to_arc(p: LatLon, a: LatLon, b: LatLon) -> Meters {
    let (vp, va, vb) = (p.to_unit(), a.to_unit(), b.to_unit());
    let n = cross(va, vb);
    let n_norm = dot(n, n).sqrt();
    let endpoint_min = haversine_distance(p, a).min(haversine_distance(p, b));
    if n_norm < 1e-15 {
        return endpoint_min;
    }
    let n = [n[0] / n_norm, n[1] / n_norm, n[2] / n_norm];
    let off_plane = dot(vp, n);
    // foot of the perpendicular, projected back onto the sphere
    let foot = [
        vp[0] - off_plane * n[0],
        vp[1] - off_plane * n[1],
        vp[2] - off_plane * n[2],
    ];
    let within = dot(cross(va, foot), n) >= 0.0 && dot(cross(foot, vb), n) >= 0.0;
    if within {
        (off_plane.abs().min(1.0)).asin() * EARTH_RADIUS_M
    } else {
        endpoint_min
    }
}

/// Smallest distance from `p` to any arc of a polyline.
pub fn distance_to_polyline(p: LatLon, line: &[LatLon]) -> Meters {
    match line {
        [] => f64::INFINITY,
        [q] => haversine_distance(p, *q),
        _ => line
            .windows(2)
            .map(|w| distance_to_arc(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn polyline_length(line: &[LatLon]) -> Meters {
    line.windows(2)
        .map(|w| haversine_distance(w[0], w[1]))
        .sum()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
