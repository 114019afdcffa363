//! C ABI for the aisroute library.
//!
//! Conventions: every fallible function returns an [`AisrStatus`] and writes
//! results through out-pointers. On failure a message is available from
//! [`aisr_last_error`] on the same thread. Handles are opaque and must be
//! released with their matching `_free` function; strings returned by the
//! library are released with [`aisr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use aisroute::aggregation::RouteGroup;
use aisroute::clustering::{dbscan, DbscanParams, Label};
use aisroute::geo::{haversine_distance, initial_bearing, LatLon};
use aisroute::ports::{nearest_port, PortDatabase};
use aisroute::routes::{extract_standard_routes, routes_to_feature_collection, ExtractionParams, StandardRoute};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NotFound = 5,
    /// The output buffer is too small; the needed length was written.
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: AisrStatus, msg: impl Into<String>) -> AisrStatus {
    set_error(msg);
    status
}

/// Run `f`, turning a panic into `AisrStatus::Panic`.
fn guard(f: impl FnOnce() -> AisrStatus) -> AisrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(AisrStatus::Panic, msg)
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, AisrStatus> {
    if path.is_null() {
        return Err(fail(AisrStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(AisrStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn latlon(lat: f64, lon: f64) -> Result<LatLon, AisrStatus> {
    LatLon::new(lat, lon).map_err(|e| fail(AisrStatus::InvalidArgument, e.to_string()))
}

fn read_file(path: &PathBuf) -> Result<String, AisrStatus> {
    std::fs::read_to_string(path).map_err(|e| fail(AisrStatus::Io, format!("{}: {e}", path.display())))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn aisr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aisr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Great-circle distance in meters.
///
/// # Safety
/// `out_m` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_m: *mut f64) -> AisrStatus {
    guard(|| {
        if out_m.is_null() {
            return fail(AisrStatus::NullPointer, "out_m is null");
        }
        match (latlon(lat1, lon1), latlon(lat2, lon2)) {
            (Ok(a), Ok(b)) => {
                *out_m = haversine_distance(a, b);
                AisrStatus::Ok
            }
            (Err(s), _) | (_, Err(s)) => s,
        }
    })
}

/// Initial bearing from the first point to the second, degrees in [0, 360).
///
/// # Safety
/// `out_deg` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_initial_bearing(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_deg: *mut f64) -> AisrStatus {
    guard(|| {
        if out_deg.is_null() {
            return fail(AisrStatus::NullPointer, "out_deg is null");
        }
        let (a, b) = match (latlon(lat1, lon1), latlon(lat2, lon2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match initial_bearing(a, b) {
            Ok(d) => {
                *out_deg = d;
                AisrStatus::Ok
            }
            Err(e) => fail(AisrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// DBSCAN over `n` points. Writes one label per point into `labels_out`
/// (-1 for noise) and the number of clusters into `n_clusters_out`.
///
/// # Safety
/// `lat` and `lon` must point to `n` readable doubles and `labels_out` to
/// `n` writable int64 values (all may be null when `n` is 0).
/// `n_clusters_out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_dbscan(
    lat: *const f64,
    lon: *const f64,
    n: usize,
    eps_m: f64,
    min_samples: usize,
    labels_out: *mut i64,
    n_clusters_out: *mut usize,
) -> AisrStatus {
    guard(|| {
        if n > 0 && (lat.is_null() || lon.is_null() || labels_out.is_null()) {
            return fail(AisrStatus::NullPointer, "point or label array is null");
        }
        let Some(params) = DbscanParams::new(eps_m, min_samples) else {
            return fail(AisrStatus::InvalidArgument, "need eps > 0 and min_samples >= 1");
        };
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            match latlon(*lat.add(i), *lon.add(i)) {
                Ok(p) => pts.push(p),
                Err(s) => return s,
            }
        }
        let result = dbscan(&pts, params);
        for (i, l) in result.labels.iter().enumerate() {
            *labels_out.add(i) = match l {
                Label::Noise => -1,
                Label::Cluster(c) => *c as i64,
            };
        }
        if !n_clusters_out.is_null() {
            *n_clusters_out = result.n_clusters;
        }
        AisrStatus::Ok
    })
}

/// A port database loaded from a `ports.json` file.
pub struct AisrPortDb {
    db: PortDatabase,
}

/// Load a port database written by the `ports` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_portdb_open(path: *const c_char, out: *mut *mut AisrPortDb) -> AisrStatus {
    guard(|| {
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match read_file(&path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<PortDatabase>(&text) {
            Ok(db) => {
                *out = Box::into_raw(Box::new(AisrPortDb { db }));
                AisrStatus::Ok
            }
            Err(e) => fail(AisrStatus::Parse, format!("{}: {e}", path.display())),
        }
    })
}

/// Number of ports, 0 for a null handle.
///
/// # Safety
/// `db` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aisr_portdb_len(db: *const AisrPortDb) -> usize {
    db.as_ref().map_or(0, |d| d.db.ports.len())
}

/// Nearest port whose radius plus `slack_m` covers the position.
/// Returns `NotFound` when no port is in reach.
///
/// # Safety
/// `db` must be a live handle; out-pointers must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn aisr_portdb_nearest(
    db: *const AisrPortDb,
    lat: f64,
    lon: f64,
    slack_m: f64,
    port_id_out: *mut u32,
    distance_m_out: *mut f64,
) -> AisrStatus {
    guard(|| {
        let Some(db) = db.as_ref() else {
            return fail(AisrStatus::NullPointer, "db is null");
        };
        let pos = match latlon(lat, lon) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match nearest_port(pos, &db.db, slack_m) {
            Some((port, d)) => {
                if !port_id_out.is_null() {
                    *port_id_out = port.port_id;
                }
                if !distance_m_out.is_null() {
                    *distance_m_out = d;
                }
                AisrStatus::Ok
            }
            None => fail(AisrStatus::NotFound, "no port within reach"),
        }
    })
}

/// # Safety
/// `db` must be null or a handle from [`aisr_portdb_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aisr_portdb_free(db: *mut AisrPortDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Route groups loaded from a `groups.jsonl` file.
pub struct AisrGroups {
    groups: Vec<RouteGroup>,
}

/// Load the route groups written by the `aggregate` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_groups_open(path: *const c_char, out: *mut *mut AisrGroups) -> AisrStatus {
    guard(|| {
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match read_file(&path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let mut groups = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<RouteGroup>(line) {
                Ok(g) => groups.push(g),
                Err(e) => return fail(AisrStatus::Parse, format!("{}:{}: {e}", path.display(), i + 1)),
            }
        }
        *out = Box::into_raw(Box::new(AisrGroups { groups }));
        AisrStatus::Ok
    })
}

/// # Safety
/// `groups` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aisr_groups_len(groups: *const AisrGroups) -> usize {
    groups.as_ref().map_or(0, |g| g.groups.len())
}

/// # Safety
/// `groups` must be null or a handle from [`aisr_groups_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aisr_groups_free(groups: *mut AisrGroups) {
    if !groups.is_null() {
        drop(Box::from_raw(groups));
    }
}

/// A list of standard routes.
pub struct AisrRoutes {
    routes: Vec<StandardRoute>,
}

/// Extract the standard routes of group `index` with the given DBSCAN
/// parameters and search radius. The remaining walk settings take their
/// defaults.
///
/// # Safety
/// `groups` and `db` must be live handles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_extract_routes(
    groups: *const AisrGroups,
    index: usize,
    db: *const AisrPortDb,
    eps_m: f64,
    min_samples: usize,
    r_m: f64,
    out: *mut *mut AisrRoutes,
) -> AisrStatus {
    guard(|| {
        let (Some(groups), Some(db)) = (groups.as_ref(), db.as_ref()) else {
            return fail(AisrStatus::NullPointer, "groups or db is null");
        };
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        let Some(group) = groups.groups.get(index) else {
            return fail(AisrStatus::InvalidArgument, format!("group index {index} out of range"));
        };
        let params = ExtractionParams::new(eps_m, min_samples, r_m);
        if !params.is_valid() {
            return fail(AisrStatus::InvalidArgument, "need eps > 0, min_samples >= 1 and r >= eps");
        }
        let ex = extract_standard_routes(group, &db.db, &params);
        *out = Box::into_raw(Box::new(AisrRoutes { routes: ex.routes }));
        AisrStatus::Ok
    })
}

/// Load routes written by the `routes` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_routes_open(path: *const c_char, out: *mut *mut AisrRoutes) -> AisrStatus {
    guard(|| {
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match read_file(&path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<Vec<StandardRoute>>(&text) {
            Ok(routes) => {
                *out = Box::into_raw(Box::new(AisrRoutes { routes }));
                AisrStatus::Ok
            }
            Err(e) => fail(AisrStatus::Parse, format!("{}: {e}", path.display())),
        }
    })
}

/// # Safety
/// `routes` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aisr_routes_len(routes: *const AisrRoutes) -> usize {
    routes.as_ref().map_or(0, |r| r.routes.len())
}

unsafe fn route_at<'a>(routes: *const AisrRoutes, index: usize) -> Result<&'a StandardRoute, AisrStatus> {
    let Some(routes) = routes.as_ref() else {
        return Err(fail(AisrStatus::NullPointer, "routes is null"));
    };
    routes
        .routes
        .get(index)
        .ok_or_else(|| fail(AisrStatus::InvalidArgument, format!("route index {index} out of range")))
}

/// Copy the waypoints of route `index` into `lat_out`/`lon_out`, which hold
/// `capacity` values each. The number of waypoints is always written to
/// `len_out`; when it exceeds `capacity` nothing is copied and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `routes` must be a live handle; `lat_out` and `lon_out` must be valid for
/// `capacity` writes (or null when `capacity` is 0); `len_out` must be valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_route_waypoints(
    routes: *const AisrRoutes,
    index: usize,
    lat_out: *mut f64,
    lon_out: *mut f64,
    capacity: usize,
    len_out: *mut usize,
) -> AisrStatus {
    guard(|| {
        let route = match route_at(routes, index) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if len_out.is_null() {
            return fail(AisrStatus::NullPointer, "len_out is null");
        }
        let n = route.waypoints.len();
        *len_out = n;
        if n > capacity {
            return fail(AisrStatus::BufferTooSmall, format!("{n} waypoints, capacity {capacity}"));
        }
        if n > 0 && (lat_out.is_null() || lon_out.is_null()) {
            return fail(AisrStatus::NullPointer, "output arrays are null");
        }
        for (i, w) in route.waypoints.iter().enumerate() {
            *lat_out.add(i) = w.lat;
            *lon_out.add(i) = w.lon;
        }
        AisrStatus::Ok
    })
}

/// Whether route `index` reached its destination.
///
/// # Safety
/// `routes` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_route_completed(routes: *const AisrRoutes, index: usize, out: *mut bool) -> AisrStatus {
    guard(|| {
        let route = match route_at(routes, index) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        *out = route.completed;
        AisrStatus::Ok
    })
}

/// Identifier of route `index` as a new string (free with
/// [`aisr_string_free`]).
///
/// # Safety
/// `routes` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_route_id(routes: *const AisrRoutes, index: usize, out: *mut *mut c_char) -> AisrStatus {
    guard(|| {
        let route = match route_at(routes, index) {
            Ok(r) => r,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        *out = CString::new(route.route_id.clone()).expect("ids have no NUL").into_raw();
        AisrStatus::Ok
    })
}

/// All routes as a GeoJSON FeatureCollection string (free with
/// [`aisr_string_free`]).
///
/// # Safety
/// `routes` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn aisr_routes_to_geojson(routes: *const AisrRoutes, out: *mut *mut c_char) -> AisrStatus {
    guard(|| {
        let Some(routes) = routes.as_ref() else {
            return fail(AisrStatus::NullPointer, "routes is null");
        };
        if out.is_null() {
            return fail(AisrStatus::NullPointer, "out is null");
        }
        let text = routes_to_feature_collection(&routes.routes).to_string();
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        AisrStatus::Ok
    })
}

/// # Safety
/// `routes` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aisr_routes_free(routes: *mut AisrRoutes) {
    if !routes.is_null() {
        drop(Box::from_raw(routes));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aisr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
