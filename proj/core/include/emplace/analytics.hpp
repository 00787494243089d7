#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emplace/detect.hpp"
#include "emplace/geo.hpp"

namespace emplace::analytics {

struct RegionStats {
  std::string region_id;
  std::size_t n_clusters = 0;
  std::size_t n_large = 0;
  std::size_t n_small = 0;
  double rate_large = 0.0;  ///< detections per cluster
  double rate_small = 0.0;
};

/// Detections grouped by the region of their cluster, sorted by region id.
/// Clusters without detections still count in the denominators. Throws
/// DataError for a detection whose cluster is unknown.
std::vector<RegionStats> aggregate(const std::vector<detect::Detection>& detections,
                                   const std::vector<geo::Cluster>& clusters);

struct Regression {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double p_value = 1.0;  ///< two-sided, t-test on the slope with n-2 d.o.f.
  std::size_t n = 0;
};

/// Ordinary least squares y = slope*x + intercept. Throws DataError when
/// fewer than 3 points are given, lengths differ, values are non-finite or
/// x is constant. Constant y gives slope 0, R² 0 and p 1.
Regression ols_regression(const std::vector<double>& x, const std::vector<double>& y);

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);
/// Two-sided p-value P(|T| >= |t|) for Student's t with `dof` degrees.
double t_two_sided_p(double t, double dof);

/// Population standard deviation over the per-area accuracies. Throws
/// DataError with fewer than two areas.
double bias_dispersion(const std::map<std::string, double>& per_area_accuracy);

using IndicatorTable = std::map<std::string, double>;

/// CSV with header region_id,value. Non-finite values and duplicate
/// regions raise DataError.
IndicatorTable read_indicator_csv(const std::filesystem::path& path);
void write_indicator_csv(const std::filesystem::path& path, const IndicatorTable& table);

enum class Target { rate, count };

struct RegressionBlock {
  std::string kind;  ///< "large" or "small"
  Target target = Target::rate;
  Regression fit;
  std::vector<double> x;
  std::vector<double> y;
};

/// Pairs each region present in both `stats` and `indicator` and fits the
/// chosen target against the indicator value.
RegressionBlock regress(const std::vector<RegionStats>& stats, const IndicatorTable& indicator,
                        detect::DetectionKind kind, Target target = Target::rate);

struct Analysis {
  std::vector<RegionStats> regions;
  std::vector<RegressionBlock> blocks;  ///< large/small x rate/count
};

Analysis analyze(const std::vector<detect::Detection>& detections, const std::vector<geo::Cluster>& clusters,
                 const IndicatorTable& indicator);

void write_analysis_json(const std::filesystem::path& path, const Analysis& a);

/// Scatter plot with the fitted line as a standalone SVG document.
void write_scatter_svg(const std::filesystem::path& path, const RegressionBlock& block,
                       const std::string& x_label = "indicator");

}  // namespace emplace::analytics
