#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "emplace/date.hpp"

namespace emplace::geo {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr const char* kUnassigned = "unassigned";

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

/// Metric offset (east, north) in metres relative to some origin.
struct LocalXY {
  double x = 0.0;
  double y = 0.0;
};

struct BoundingBox {
  double lat_min = -90.0;
  double lat_max = 90.0;
  double lon_min = -180.0;
  double lon_max = 180.0;

  bool contains(const LatLon& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
};

struct PanoramaMeta {
  std::string id;
  Date timestamp;
  LatLon position;
  double heading = 0.0;  ///< degrees, normalized to [0, 360)
  double height = 0.0;   ///< metres above datum
  std::string region_id;
  std::string area_id;
};

/// Wraps any heading into [0, 360).
double normalize_heading(double degrees);

/// Checks and normalizes one ingested record; throws DataError when the
/// position falls outside `bbox` or a field is non-finite.
PanoramaMeta validated(PanoramaMeta meta, const BoundingBox& bbox);

struct RegionPolygon {
  std::string region_id;
  std::string area_id;
  std::vector<LatLon> ring;  ///< implicitly closed
  double dilation_m = 5.0;
};

struct Cluster {
  std::string cluster_id;
  LatLon center;
  std::vector<PanoramaMeta> members;  ///< ordered by (timestamp, id)
  double radius_m = 1.0;
  std::string region_id = kUnassigned;
  std::string area_id = kUnassigned;
};

/// Equirectangular projection of `p` around `origin`:
/// x = R * dlon * cos(lat_origin), y = R * dlat (angles in radians).
/// Both coordinate deltas must be below one degree.
LocalXY project_local(const LatLon& origin, const LatLon& p);
/// Inverse of project_local.
LatLon unproject_local(const LatLon& origin, const LocalXY& xy);

double distance_m(const LatLon& a, const LatLon& b);

/// Polygon-area / containment helpers in a local metric frame.
double ring_area_m2(const RegionPolygon& poly);
/// Inside or on the boundary (within `edge_tol_m`).
bool contains(const RegionPolygon& poly, const LatLon& p, double edge_tol_m = 1e-6);
/// Inside the polygon dilated by its dilation_m.
bool contains_dilated(const RegionPolygon& poly, const LatLon& p);

/// DBSCAN labels per input point (-1 = noise), computed over the canonical
/// ordering of points by id. Labels are cluster indices in creation order.
struct DbscanLabels {
  std::vector<int> label;     ///< indexed like the input
  std::vector<bool> is_core;  ///< indexed like the input
  int n_clusters = 0;
};

DbscanLabels dbscan_labels(const std::vector<PanoramaMeta>& points, double eps_m = 1.0,
                           std::size_t min_pts = 3);

/// Candidate clusters (noise dropped), each member list ordered by id and
/// the list ordered by cluster creation.
std::vector<std::vector<PanoramaMeta>> dbscan_cluster(const std::vector<PanoramaMeta>& points,
                                                      double eps_m = 1.0, std::size_t min_pts = 3);

struct Candidate {
  std::vector<PanoramaMeta> members;
  std::optional<LatLon> center;  ///< centroid of members when absent
};

struct CurationParams {
  double radius_m = 1.0;
  double height_tol_m = 1.0;
  std::size_t min_members = 3;
};

struct CurationReport {
  std::vector<Cluster> clusters;
  std::size_t candidates = 0;
  std::size_t dropped_water = 0;
  std::size_t dropped_height = 0;
  std::size_t dropped_small = 0;
  std::size_t dropped_duplicate = 0;
  bool water_filter_skipped = false;
};

/// Recollects each candidate's members by a radius query over `all_points`,
/// resolves overlapping disks by nearest center, and drops clusters on water,
/// with inconsistent heights or below min_members. Repeats until no cluster
/// is dropped, so the output is a fixed point and curation is idempotent.
CurationReport curate(const std::vector<Candidate>& candidates,
                      const std::vector<PanoramaMeta>& all_points, const CurationParams& params,
                      const std::vector<RegionPolygon>* water_mask);

std::vector<Candidate> as_candidates(const std::vector<Cluster>& clusters);
std::vector<Candidate> as_candidates(const std::vector<std::vector<PanoramaMeta>>& groups);

/// Labels each cluster (and its members) with the region containing its
/// center; ties go to the lexicographically smallest region_id.
std::vector<Cluster> assign_regions(std::vector<Cluster> clusters,
                                    const std::vector<RegionPolygon>& polygons);

/// Stable id: hex FNV-1a over the sorted member ids.
std::string cluster_id_for(const std::vector<PanoramaMeta>& members);

struct ClusteringParams {
  double eps_m = 1.0;
  std::size_t min_pts = 3;
  CurationParams curation;
};

/// Per-polygon DBSCAN over dilated polygons, global curation, then region
/// assignment against the undilated polygons.
CurationReport build_clusters(const std::vector<PanoramaMeta>& points,
                              const std::vector<RegionPolygon>& polygons,
                              const std::vector<RegionPolygon>* water_mask,
                              const ClusteringParams& params);

}  // namespace emplace::geo
