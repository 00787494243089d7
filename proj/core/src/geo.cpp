#include "emplace/geo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <set>
#include <unordered_map>

#include "emplace/error.hpp"
#include "emplace/rng.hpp"

namespace emplace::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

LatLon centroid(const std::vector<PanoramaMeta>& members) {
  LatLon c;
  for (const auto& m : members) {
    c.lat += m.position.lat;
    c.lon += m.position.lon;
  }
  c.lat /= static_cast<double>(members.size());
  c.lon /= static_cast<double>(members.size());
  return c;
}

LatLon centroid_of(const std::vector<LatLon>& pts) {
  LatLon c;
  for (const auto& p : pts) {
    c.lat += p.lat;
    c.lon += p.lon;
  }
  c.lat /= static_cast<double>(pts.size());
  c.lon /= static_cast<double>(pts.size());
  return c;
}

struct CellKey {
  long long cx;
  long long cy;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return std::hash<long long>()(k.cx * 73856093LL ^ k.cy * 19349663LL);
  }
};

/// Uniform bucket grid over local metric coordinates.
class BucketGrid {
 public:
  BucketGrid(const std::vector<LocalXY>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
  }

  /// Indices of all points whose cell is within one cell of `q`.
  template <typename F>
  void for_each_near(const LocalXY& q, F&& f) const {
    const CellKey k = key(q);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find({k.cx + dx, k.cy + dy});
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second) f(j);
      }
    }
  }

 private:
  CellKey key(const LocalXY& p) const {
    return {static_cast<long long>(std::floor(p.x / cell_)),
            static_cast<long long>(std::floor(p.y / cell_))};
  }

  const std::vector<LocalXY>& pts_;
  double cell_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

double segment_distance(const LocalXY& p, const LocalXY& a, const LocalXY& b) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx);
  const double dy = p.y - (a.y + t * vy);
  return std::hypot(dx, dy);
}

std::vector<LocalXY> local_ring(const RegionPolygon& poly, const LatLon& origin) {
  std::vector<LocalXY> ring;
  ring.reserve(poly.ring.size());
  for (const auto& v : poly.ring) ring.push_back(project_local(origin, v));
  if (ring.size() > 1 && ring.front().x == ring.back().x && ring.front().y == ring.back().y) {
    ring.pop_back();
  }
  return ring;
}

double boundary_distance(const std::vector<LocalXY>& ring, const LocalXY& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ring.size(); ++i) {
    best = std::min(best, segment_distance(p, ring[i], ring[(i + 1) % ring.size()]));
  }
  return best;
}

bool ray_cast_inside(const std::vector<LocalXY>& ring, const LocalXY& p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool outside_bbox(const RegionPolygon& poly, const LatLon& p, double margin_m) {
  double lat_min = 90, lat_max = -90, lon_min = 180, lon_max = -180;
  for (const auto& v : poly.ring) {
    lat_min = std::min(lat_min, v.lat);
    lat_max = std::max(lat_max, v.lat);
    lon_min = std::min(lon_min, v.lon);
    lon_max = std::max(lon_max, v.lon);
  }
  const double dlat = margin_m / kEarthRadiusM / kDegToRad;
  const double dlon = dlat / std::max(1e-6, std::cos(p.lat * kDegToRad));
  return p.lat < lat_min - dlat || p.lat > lat_max + dlat || p.lon < lon_min - dlon ||
         p.lon > lon_max + dlon;
}

std::vector<std::size_t> canonical_order(const std::vector<PanoramaMeta>& points) {
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].id < points[b].id; });
  return order;
}

bool time_order(const PanoramaMeta& a, const PanoramaMeta& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.id < b.id;
}

}  // namespace

double normalize_heading(double degrees) {
  double h = std::fmod(degrees, 360.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

PanoramaMeta validated(PanoramaMeta meta, const BoundingBox& bbox) {
  if (!std::isfinite(meta.position.lat) || !std::isfinite(meta.position.lon) ||
      !std::isfinite(meta.heading) || !std::isfinite(meta.height)) {
    throw DataError("panorama " + meta.id + " has a non-finite field");
  }
  if (!bbox.contains(meta.position)) {
    throw DataError("panorama " + meta.id + " lies outside the configured bounding box");
  }
  meta.heading = normalize_heading(meta.heading);
  return meta;
}

LocalXY project_local(const LatLon& origin, const LatLon& p) {
  const double dlat = p.lat - origin.lat;
  const double dlon = p.lon - origin.lon;
  if (!std::isfinite(dlat) || !std::isfinite(dlon) || std::abs(dlat) >= 1.0 ||
      std::abs(dlon) >= 1.0) {
    throw DataError("coordinates out of range for local projection");
  }
  return {kEarthRadiusM * dlon * kDegToRad * std::cos(origin.lat * kDegToRad),
          kEarthRadiusM * dlat * kDegToRad};
}

LatLon unproject_local(const LatLon& origin, const LocalXY& xy) {
  return {origin.lat + xy.y / kEarthRadiusM / kDegToRad,
          origin.lon + xy.x / (kEarthRadiusM * std::cos(origin.lat * kDegToRad)) / kDegToRad};
}

double distance_m(const LatLon& a, const LatLon& b) {
  const LocalXY d = project_local(a, b);
  return std::hypot(d.x, d.y);
}

double ring_area_m2(const RegionPolygon& poly) {
  if (poly.ring.size() < 3) return 0.0;
  const auto ring = local_ring(poly, poly.ring.front());
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % ring.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

bool contains(const RegionPolygon& poly, const LatLon& p, double edge_tol_m) {
  if (poly.ring.size() < 3 || outside_bbox(poly, p, edge_tol_m + 1.0)) return false;
  const auto ring = local_ring(poly, poly.ring.front());
  const LocalXY q = project_local(poly.ring.front(), p);
  if (boundary_distance(ring, q) <= edge_tol_m) return true;
  return ray_cast_inside(ring, q);
}

bool contains_dilated(const RegionPolygon& poly, const LatLon& p) {
  if (poly.ring.size() < 3 || outside_bbox(poly, p, poly.dilation_m + 1.0)) return false;
  const auto ring = local_ring(poly, poly.ring.front());
  const LocalXY q = project_local(poly.ring.front(), p);
  return ray_cast_inside(ring, q) || boundary_distance(ring, q) <= poly.dilation_m;
}

DbscanLabels dbscan_labels(const std::vector<PanoramaMeta>& points, double eps_m,
                           std::size_t min_pts) {
  if (!(eps_m > 0.0)) throw ConfigError("dbscan eps must be positive");
  if (min_pts < 1) throw ConfigError("dbscan min_pts must be at least 1");

  DbscanLabels out;
  const std::size_t n = points.size();
  out.label.assign(n, -1);
  out.is_core.assign(n, false);
  if (n == 0) return out;

  // Work in canonical (id-sorted) order so the result is permutation invariant.
  const auto order = canonical_order(points);
  std::vector<LatLon> positions;
  positions.reserve(n);
  for (std::size_t i : order) positions.push_back(points[i].position);
  const LatLon origin = centroid_of(positions);
  std::vector<LocalXY> xy;
  xy.reserve(n);
  for (const auto& p : positions) xy.push_back(project_local(origin, p));

  const BucketGrid grid(xy, eps_m);
  const double eps2 = eps_m * eps_m;
  std::vector<std::vector<std::size_t>> neighbours(n);
  for (std::size_t i = 0; i < n; ++i) {
    grid.for_each_near(xy[i], [&](std::size_t j) {
      const double dx = xy[i].x - xy[j].x;
      const double dy = xy[i].y - xy[j].y;
      if (dx * dx + dy * dy <= eps2) neighbours[i].push_back(j);
    });
    std::sort(neighbours[i].begin(), neighbours[i].end());
  }

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    if (neighbours[i].size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = next++;
    label[i] = c;
    std::deque<std::size_t> queue(neighbours[i].begin(), neighbours[i].end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = c;
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      if (neighbours[q].size() >= min_pts) {
        queue.insert(queue.end(), neighbours[q].begin(), neighbours[q].end());
      }
    }
  }

  out.n_clusters = next;
  for (std::size_t k = 0; k < n; ++k) {
    out.label[order[k]] = label[k];
    out.is_core[order[k]] = neighbours[k].size() >= min_pts;
  }
  return out;
}

std::vector<std::vector<PanoramaMeta>> dbscan_cluster(const std::vector<PanoramaMeta>& points,
                                                      double eps_m, std::size_t min_pts) {
  const DbscanLabels labels = dbscan_labels(points, eps_m, min_pts);
  std::vector<std::vector<PanoramaMeta>> clusters(static_cast<std::size_t>(labels.n_clusters));
  for (std::size_t i : canonical_order(points)) {
    if (labels.label[i] >= 0) clusters[static_cast<std::size_t>(labels.label[i])].push_back(points[i]);
  }
  return clusters;
}

std::string cluster_id_for(const std::vector<PanoramaMeta>& members) {
  std::vector<std::string> ids;
  ids.reserve(members.size());
  for (const auto& m : members) ids.push_back(m.id);
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& id : ids) {
    h = fnv1a64(id, h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "c%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Candidate> as_candidates(const std::vector<Cluster>& clusters) {
  std::vector<Candidate> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back({c.members, c.center});
  return out;
}

std::vector<Candidate> as_candidates(const std::vector<std::vector<PanoramaMeta>>& groups) {
  std::vector<Candidate> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back({g, std::nullopt});
  return out;
}

CurationReport curate(const std::vector<Candidate>& candidates,
                      const std::vector<PanoramaMeta>& all_points, const CurationParams& params,
                      const std::vector<RegionPolygon>* water_mask) {
  CurationReport report;
  report.candidates = candidates.size();
  report.water_filter_skipped = water_mask == nullptr;
  if (candidates.empty() || all_points.empty()) return report;

  // Drop candidates that are exact duplicates (same member set) of an earlier one.
  std::vector<LatLon> centers;
  std::set<std::string> seen;
  for (const auto& cand : candidates) {
    if (cand.members.empty() && !cand.center) continue;
    if (!cand.members.empty() && !seen.insert(cluster_id_for(cand.members)).second) {
      ++report.dropped_duplicate;
      continue;
    }
    centers.push_back(cand.center ? *cand.center : centroid(cand.members));
  }

  std::vector<bool> live(centers.size(), true);
  if (water_mask) {
    for (std::size_t c = 0; c < centers.size(); ++c) {
      for (const auto& w : *water_mask) {
        if (contains(w, centers[c])) {
          live[c] = false;
          ++report.dropped_water;
          break;
        }
      }
    }
  }

  std::vector<LatLon> positions;
  positions.reserve(all_points.size());
  for (const auto& p : all_points) positions.push_back(p.position);
  const LatLon origin = centroid_of(positions);
  std::vector<LocalXY> point_xy;
  point_xy.reserve(all_points.size());
  for (const auto& p : positions) point_xy.push_back(project_local(origin, p));
  const BucketGrid point_grid(point_xy, 2.0 * params.radius_m);

  std::vector<std::vector<std::size_t>> members(centers.size());
  for (;;) {
    // Nearest live center within the radius claims each point.
    std::vector<double> best_dist(all_points.size(), std::numeric_limits<double>::infinity());
    std::vector<long long> owner(all_points.size(), -1);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (!live[c]) continue;
      point_grid.for_each_near(project_local(origin, centers[c]), [&](std::size_t j) {
        const double d = distance_m(centers[c], all_points[j].position);
        if (d <= params.radius_m && d < best_dist[j]) {
          best_dist[j] = d;
          owner[j] = static_cast<long long>(c);
        }
      });
    }
    for (auto& m : members) m.clear();
    for (std::size_t j = 0; j < all_points.size(); ++j) {
      if (owner[j] >= 0) members[static_cast<std::size_t>(owner[j])].push_back(j);
    }

    bool dropped = false;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (!live[c]) continue;
      if (members[c].size() < params.min_members) {
        live[c] = false;
        dropped = true;
        ++report.dropped_small;
        continue;
      }
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t j : members[c]) {
        lo = std::min(lo, all_points[j].height);
        hi = std::max(hi, all_points[j].height);
      }
      if (hi - lo > params.height_tol_m) {
        live[c] = false;
        dropped = true;
        ++report.dropped_height;
      }
    }
    if (!dropped) break;
  }

  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (!live[c]) continue;
    Cluster cl;
    cl.center = centers[c];
    cl.radius_m = params.radius_m;
    for (std::size_t j : members[c]) cl.members.push_back(all_points[j]);
    std::sort(cl.members.begin(), cl.members.end(), time_order);
    cl.cluster_id = cluster_id_for(cl.members);
    report.clusters.push_back(std::move(cl));
  }
  return report;
}

std::vector<Cluster> assign_regions(std::vector<Cluster> clusters,
                                    const std::vector<RegionPolygon>& polygons) {
  for (auto& c : clusters) {
    const RegionPolygon* best = nullptr;
    for (const auto& poly : polygons) {
      if (contains(poly, c.center) && (!best || poly.region_id < best->region_id)) best = &poly;
    }
    c.region_id = best ? best->region_id : kUnassigned;
    c.area_id = best ? best->area_id : kUnassigned;
    for (auto& m : c.members) {
      m.region_id = c.region_id;
      m.area_id = c.area_id;
    }
  }
  return clusters;
}

CurationReport build_clusters(const std::vector<PanoramaMeta>& points,
                              const std::vector<RegionPolygon>& polygons,
                              const std::vector<RegionPolygon>* water_mask,
                              const ClusteringParams& params) {
  std::vector<const RegionPolygon*> ordered;
  for (const auto& p : polygons) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->region_id < b->region_id; });

  std::vector<Candidate> candidates;
  for (const auto* poly : ordered) {
    std::vector<PanoramaMeta> inside;
    for (const auto& p : points) {
      if (contains_dilated(*poly, p.position)) inside.push_back(p);
    }
    for (auto& group : dbscan_cluster(inside, params.eps_m, params.min_pts)) {
      candidates.push_back({std::move(group), std::nullopt});
    }
  }

  CurationReport report = curate(candidates, points, params.curation, water_mask);
  report.clusters = assign_regions(std::move(report.clusters), polygons);
  std::sort(report.clusters.begin(), report.clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.region_id != b.region_id) return a.region_id < b.region_id;
    return a.cluster_id < b.cluster_id;
  });
  return report;
}

}  // namespace emplace::geo
