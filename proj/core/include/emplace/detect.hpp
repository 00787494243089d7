#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emplace/geo.hpp"
#include "emplace/grid_source.hpp"
#include "emplace/model.hpp"

namespace emplace::detect {

/// Per-patch Euclidean distance between two token grids.
struct Heatmap {
  std::size_t grid_w = 0;
  std::size_t grid_h = 0;
  std::vector<double> values;  ///< row-major (row, col)
  std::string img_a;
  std::string img_b;

  double at(std::size_t col, std::size_t row) const { return values[row * grid_w + col]; }
  double& at(std::size_t col, std::size_t row) { return values[row * grid_w + col]; }
};

struct WindowSize {
  std::size_t w = 8;
  std::size_t h = 8;
  friend bool operator==(const WindowSize&, const WindowSize&) = default;
};

struct DetectorConfig {
  WindowSize window{8, 8};
  double threshold = 1.0;
  WindowSize small_window{2, 2};
  double small_ratio = 1.2;
  bool wrap_horizontal = true;

  /// Throws ConfigError unless threshold > 0, small_ratio > 1 and both
  /// windows fit the grid.
  void validate(std::size_t grid_w, std::size_t grid_h) const;
};

enum class DetectionKind { large, small };
const char* kind_name(DetectionKind k);

struct Detection {
  std::string cluster_id;
  std::string img_a;
  std::string img_b;
  DetectionKind kind = DetectionKind::large;
  std::size_t col = 0;  ///< window origin (left column, may wrap)
  std::size_t row = 0;
  WindowSize window;
  double score = 0.0;  ///< window mean
};

/// Values are ||a.patches[c][r] - b.patches[c][r]||; cls is ignored.
Heatmap heatmap(const model::TokenGrid& a, const model::TokenGrid& b);

struct WindowMean {
  std::size_t col;
  std::size_t row;
  double mean;
};

/// Every window position in (row, col) order. Horizontal origins cover all
/// columns when wrapping, otherwise grid_w - w + 1; vertical origins are
/// always grid_h - h + 1.
std::vector<WindowMean> window_means(const Heatmap& h, WindowSize window, bool wrap);

/// Largest window mean (first in (row, col) order on ties).
std::optional<WindowMean> max_window(const Heatmap& h, WindowSize window, bool wrap);

/// Returns the argmax window when its mean exceeds the threshold.
std::optional<Detection> detect_large(const Heatmap& h, const DetectorConfig& cfg);

/// Cells adjacent to the small window's bounding box (columns wrap when
/// enabled, rows are truncated at the edges), as (col, row) pairs.
std::vector<std::pair<std::size_t, std::size_t>> ring_cells(const Heatmap& h, std::size_t col,
                                                            std::size_t row, WindowSize window,
                                                            bool wrap);

/// Small-change windows whose mean exceeds the threshold and is at least
/// small_ratio times every ring token; overlapping firings keep only local
/// maxima.
std::vector<Detection> detect_small(const Heatmap& h, const DetectorConfig& cfg);

/// Post-hoc re-check of the small-detection rule against the heatmap.
bool satisfies_ring_rule(const Heatmap& h, const Detection& d, const DetectorConfig& cfg);

struct LabeledHeatmap {
  Heatmap heatmap;
  bool change = false;
};

struct CalibrationResult {
  DetectorConfig config;
  double accuracy = 0.0;
};

/// Grid search over window sizes and thresholds (the distinct observed
/// scores, midpoints between consecutive ones and half the smallest) for the
/// best accuracy of "max window mean > threshold means change". Ties prefer
/// the larger threshold, then the earlier window in `windows`.
CalibrationResult calibrate_threshold(const std::vector<LabeledHeatmap>& val,
                                      const std::vector<WindowSize>& windows, const DetectorConfig& base);

/// Threshold search for one window over precomputed (score, label) pairs.
CalibrationResult calibrate_scores(const std::vector<double>& scores, const std::vector<bool>& labels,
                                   const DetectorConfig& base);

/// Keeps the first run's configuration with the largest threshold.
CalibrationResult max_threshold(const std::vector<CalibrationResult>& runs);

struct DetectionRun {
  std::vector<Detection> detections;
  std::size_t pairs_compared = 0;
  std::size_t skipped_images = 0;
};

/// All unordered pairs (earlier image first) inside each cluster; at most
/// one large detection per pair plus every small detection. Output is
/// sorted by (cluster_id, img_a, img_b, kind, row, col).
DetectionRun run_detection(const std::vector<geo::Cluster>& clusters, const model::GridSource& source,
                           const model::Encoder& encoder, const DetectorConfig& cfg, bool large = true,
                           bool small = true);

void write_detections_jsonl(const std::filesystem::path& path, const std::vector<Detection>& ds);
std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path);

void write_detector_config(const std::filesystem::path& path, const DetectorConfig& cfg);
DetectorConfig read_detector_config(const std::filesystem::path& path);

/// Grayscale PNG of the heatmap scaled so `max_value` (or the maximum when
/// <= 0) is white; each cell becomes a cell_px square.
void write_heatmap_png(const std::filesystem::path& path, const Heatmap& h, double max_value = 0.0,
                       std::size_t cell_px = 14);

}  // namespace emplace::detect
