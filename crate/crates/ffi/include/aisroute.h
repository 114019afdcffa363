#ifndef AISROUTE_H
#define AISROUTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result codes shared by every fallible function.
 */
typedef enum AisrStatus {
  AISR_STATUS_OK = 0,
  AISR_STATUS_NULL_POINTER = 1,
  AISR_STATUS_INVALID_ARGUMENT = 2,
  AISR_STATUS_IO = 3,
  AISR_STATUS_PARSE = 4,
  AISR_STATUS_NOT_FOUND = 5,
  /*
   The output buffer is too small; the needed length was written.
   */
  AISR_STATUS_BUFFER_TOO_SMALL = 6,
  AISR_STATUS_PANIC = 7,
} AisrStatus;

/*
 Route groups loaded from a `groups.jsonl` file.
 */
typedef struct AisrGroups AisrGroups;

/*
 A port database loaded from a `ports.json` file.
 */
typedef struct AisrPortDb AisrPortDb;

/*
 A list of standard routes.
 */
typedef struct AisrRoutes AisrRoutes;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. The pointer stays
 valid until the next library call on the same thread.
 */
const char *aisr_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *aisr_version(void);

/*
 Great-circle distance in meters.

 # Safety
 `out_m` must be null or valid for a write.
 */
enum AisrStatus aisr_haversine(double lat1, double lon1, double lat2, double lon2, double *out_m);

/*
 Initial bearing from the first point to the second, degrees in [0, 360).

 # Safety
 `out_deg` must be null or valid for a write.
 */
enum AisrStatus aisr_initial_bearing(double lat1,
                                     double lon1,
                                     double lat2,
                                     double lon2,
                                     double *out_deg);

/*
 DBSCAN over `n` points. Writes one label per point into `labels_out`
 (-1 for noise) and the number of clusters into `n_clusters_out`.

 # Safety
 `lat` and `lon` must point to `n` readable doubles and `labels_out` to
 `n` writable int64 values (all may be null when `n` is 0).
 `n_clusters_out` must be null or valid for a write.
 */
enum AisrStatus aisr_dbscan(const double *lat,
                            const double *lon,
                            size_t n,
                            double eps_m,
                            size_t min_samples,
                            int64_t *labels_out,
                            size_t *n_clusters_out);

/*
 Load a port database written by the `ports` stage.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum AisrStatus aisr_portdb_open(const char *path, struct AisrPortDb **out);

/*
 Number of ports, 0 for a null handle.

 # Safety
 `db` must be null or a live handle.
 */
size_t aisr_portdb_len(const struct AisrPortDb *db);

/*
 Nearest port whose radius plus `slack_m` covers the position.
 Returns `NotFound` when no port is in reach.

 # Safety
 `db` must be a live handle; out-pointers must be null or valid for writes.
 */
enum AisrStatus aisr_portdb_nearest(const struct AisrPortDb *db,
                                    double lat,
                                    double lon,
                                    double slack_m,
                                    uint32_t *port_id_out,
                                    double *distance_m_out);

/*
 # Safety
 `db` must be null or a handle from [`aisr_portdb_open`] not yet freed.
 */
void aisr_portdb_free(struct AisrPortDb *db);

/*
 Load the route groups written by the `aggregate` stage.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum AisrStatus aisr_groups_open(const char *path, struct AisrGroups **out);

/*
 # Safety
 `groups` must be null or a live handle.
 */
size_t aisr_groups_len(const struct AisrGroups *groups);

/*
 # Safety
 `groups` must be null or a handle from [`aisr_groups_open`] not yet freed.
 */
void aisr_groups_free(struct AisrGroups *groups);

/*
 Extract the standard routes of group `index` with the given DBSCAN
 parameters and search radius. The remaining walk settings take their
 defaults.

 # Safety
 `groups` and `db` must be live handles; `out` must be valid for a write.
 */
enum AisrStatus aisr_extract_routes(const struct AisrGroups *groups,
                                    size_t index,
                                    const struct AisrPortDb *db,
                                    double eps_m,
                                    size_t min_samples,
                                    double r_m,
                                    struct AisrRoutes **out);

/*
 Load routes written by the `routes` stage.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum AisrStatus aisr_routes_open(const char *path, struct AisrRoutes **out);

/*
 # Safety
 `routes` must be null or a live handle.
 */
size_t aisr_routes_len(const struct AisrRoutes *routes);

/*
 Copy the waypoints of route `index` into `lat_out`/`lon_out`, which hold
 `capacity` values each. The number of waypoints is always written to
 `len_out`; when it exceeds `capacity` nothing is copied and
 `BufferTooSmall` is returned.

 # Safety
 `routes` must be a live handle; `lat_out` and `lon_out` must be valid for
 `capacity` writes (or null when `capacity` is 0); `len_out` must be valid
 for a write.
 */
enum AisrStatus aisr_route_waypoints(const struct AisrRoutes *routes,
                                     size_t index,
                                     double *lat_out,
                                     double *lon_out,
                                     size_t capacity,
                                     size_t *len_out);

/*
 Whether route `index` reached its destination.

 # Safety
 `routes` must be a live handle; `out` must be valid for a write.
 */
enum AisrStatus aisr_route_completed(const struct AisrRoutes *routes, size_t index, bool *out);

/*
 Identifier of route `index` as a new string (free with
 [`aisr_string_free`]).

 # Safety
 `routes` must be a live handle; `out` must be valid for a write.
 */
enum AisrStatus aisr_route_id(const struct AisrRoutes *routes, size_t index, char **out);

/*
 All routes as a GeoJSON FeatureCollection string (free with
 [`aisr_string_free`]).

 # Safety
 `routes` must be a live handle; `out` must be valid for a write.
 */
enum AisrStatus aisr_routes_to_geojson(const struct AisrRoutes *routes, char **out);

/*
 # Safety
 `routes` must be null or a handle not yet freed.
 */
void aisr_routes_free(struct AisrRoutes *routes);

/*
 # Safety
 `s` must be null or a string returned by this library, not yet freed.
 */
void aisr_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AISROUTE_H */
