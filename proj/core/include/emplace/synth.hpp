#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emplace/analytics.hpp"
#include "emplace/date.hpp"
#include "emplace/detect.hpp"
#include "emplace/discrete.hpp"
#include "emplace/geo.hpp"
#include "emplace/grid_source.hpp"

namespace emplace::synth {

/// Synthetic city generated directly in patch-feature space.
///
/// Feature layout per patch (3 channels): dims 0-2 colour means, 3-5 colour
/// spreads, 6-7 horizontal/vertical texture. Weather is a per-image offset
/// shared by every patch and confined to the colour dims; urban drift and
/// abrupt changes live in the texture dims along a per-cluster direction.
struct SynthConfig {
  std::size_t n_regions = 8;
  std::size_t n_areas = 4;
  std::size_t clusters_per_region = 40;
  double extra_images_mean = 1.29;  ///< images per cluster = 3 + Poisson(mean)
  std::size_t max_images = 12;
  Date start = Date::from_ymd(2016, 1, 1);
  Date end = Date::from_ymd(2022, 12, 31);
  double revisit_prob = 0.15;  ///< share of short gaps between captures
  std::int32_t revisit_min_days = 2;
  std::int32_t revisit_max_days = 30;
  std::int32_t gap_min_days = 145;
  std::int32_t gap_max_days = 700;

  std::size_t grid_w = 50;
  std::size_t grid_h = 15;
  std::size_t channels = 3;
  double base_sigma = 0.5;
  double weather_sigma = 0.8;
  double noise_sigma = 0.05;
  double drift_rate = 0.1;  ///< texture units per year

  /// Per-cluster large-change probability runs linearly from max (lowest
  /// indicator bin) to min (highest); the small one the other way round.
  double large_prob_max = 0.6;
  double large_prob_min = 0.1;
  double small_prob_min = 0.1;
  double small_prob_max = 0.6;
  double change_magnitude = 6.0;
  double small_magnitude = 6.0;
  detect::WindowSize change_window{8, 8};
  detect::WindowSize small_window{2, 2};
  std::optional<std::size_t> force_small_col;  ///< pin small-change origins (seam tests)

  geo::LatLon origin{52.37, 4.89};
  double region_size_m = 400.0;
  double cluster_spacing_m = 20.0;
  double jitter_m = 0.25;
  bool water = true;  ///< add a water polygon with a decoy cluster inside

  bool rasters = false;  ///< write PNG panoramas instead of TGRD grids
  std::uint64_t seed = 0;

  /// Throws ConfigError for infeasible settings.
  void validate() const;
  std::size_t feature_dim() const { return 2 * channels + 2; }
};

struct ImageTruth {
  std::string id;
  Date date;
  double heading = 0.0;
};

struct ClusterTruth {
  std::string cluster_id;
  std::string region_id;
  std::string area_id;
  geo::LatLon center;
  std::vector<ImageTruth> images;  ///< strictly increasing dates
  double drift_angle = 0.0;        ///< texture-plane direction (radians)

  bool large_change = false;
  std::size_t large_after = 0;  ///< change lies between images[k] and images[k+1]
  std::size_t large_col = 0;
  std::size_t large_row = 0;

  bool small_change = false;
  std::size_t small_after = 0;
  std::size_t small_col = 0;
  std::size_t small_row = 0;

  /// True when images i < j straddle the large change.
  bool straddles_large(std::size_t i, std::size_t j) const {
    return large_change && i <= large_after && large_after < j;
  }
  bool straddles_small(std::size_t i, std::size_t j) const {
    return small_change && i <= small_after && small_after < j;
  }
};

struct RegionTruth {
  std::string region_id;
  std::string area_id;
  double indicator = 0.0;
  double large_prob = 0.0;
  double small_prob = 0.0;
};

struct GroundTruth {
  std::vector<ClusterTruth> clusters;  ///< sorted by (region_id, cluster_id)
  std::vector<RegionTruth> regions;
  /// Sign of d(detection rate)/d(indicator) by construction.
  int large_sign = -1;
  int small_sign = 1;
  detect::WindowSize large_window{8, 8};
  detect::WindowSize small_window{2, 2};
};

struct City {
  SynthConfig config;
  std::vector<geo::PanoramaMeta> panoramas;
  std::vector<geo::RegionPolygon> regions;
  std::vector<geo::RegionPolygon> water;
  GroundTruth truth;
  analytics::IndicatorTable indicator;
  std::vector<train::DiscretePair> pairs;
};

City generate(const SynthConfig& cfg);

/// Patch features of one image, rendered on demand from the seeds.
model::VectorGrid render_features(const SynthConfig& cfg, const ClusterTruth& c, std::size_t image_index);
/// Block-texture raster whose patch features follow the same content model.
raster::Panorama render_raster(const SynthConfig& cfg, const ClusterTruth& c, std::size_t image_index,
                               std::size_t patch_px = 14);

/// Source over a generated city that renders grids lazily; decoy and
/// unknown ids resolve to nullopt.
class SynthGridSource final : public model::GridSource {
 public:
  explicit SynthGridSource(const City& city);
  std::optional<model::TokenGrid> load(const std::string& image_id) const override;

 private:
  const City& city_;
  std::map<std::string, std::pair<std::size_t, std::size_t>> where_;
};

/// Writes panoramas.csv, regions.json, water.json (when enabled),
/// ground_truth.json, indicator.csv, labels.csv and one grid per image under
/// images/ (<id>.tgrd, or <id>.png in raster mode).
void write_city(const City& city, const std::filesystem::path& dir);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& path);

/// Reference clusters implied by the ground truth (members in date order).
std::vector<geo::Cluster> truth_clusters(const City& city);

}  // namespace emplace::synth
