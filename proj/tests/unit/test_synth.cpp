#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "emplace/error.hpp"
#include "emplace/geo.hpp"
#include "emplace/mining.hpp"
#include "emplace/synth.hpp"
#include "emplace/train.hpp"
#include "tempdir.hpp"

using namespace emplace;
using namespace emplace::synth;

namespace {

SynthConfig base(std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.n_regions = 4;
  cfg.clusters_per_region = 30;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synth, DeterministicGivenSeed) {
  const auto a = generate(base()), b = generate(base()), c = generate(base(4));
  ASSERT_EQ(a.panoramas.size(), b.panoramas.size());
  for (std::size_t i = 0; i < a.panoramas.size(); ++i) {
    EXPECT_EQ(a.panoramas[i].id, b.panoramas[i].id);
    EXPECT_EQ(a.panoramas[i].position, b.panoramas[i].position);
    EXPECT_EQ(a.panoramas[i].timestamp, b.panoramas[i].timestamp);
  }
  EXPECT_EQ(render_features(a.config, a.truth.clusters[5], 1), render_features(b.config, b.truth.clusters[5], 1));
  bool differs = a.panoramas.size() != c.panoramas.size();
  for (std::size_t i = 0; !differs && i < a.panoramas.size(); ++i) differs = a.panoramas[i].timestamp != c.panoramas[i].timestamp;
  EXPECT_TRUE(differs);

  testing_support::TempDir d1, d2;
  write_city(a, d1.path());
  write_city(b, d2.path());
  for (const char* f : {"panoramas.csv", "regions.json", "water.json", "ground_truth.json", "indicator.csv", "labels.csv"}) {
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  const std::string img = a.truth.clusters[0].images[0].id + ".tgrd";
  EXPECT_EQ(slurp(d1.path() / "images" / img), slurp(d2.path() / "images" / img));
}

TEST(Synth, ImagesPerClusterMatchesModel) {
  auto cfg = base();
  cfg.n_regions = 10;
  cfg.clusters_per_region = 110;
  cfg.region_size_m = 300;
  cfg.cluster_spacing_m = 10;
  const auto city = generate(cfg);
  ASSERT_GE(city.truth.clusters.size(), 1000u);
  double total = 0;
  for (const auto& c : city.truth.clusters) {
    total += static_cast<double>(c.images.size());
    EXPECT_GE(c.images.size(), 3u);
    EXPECT_LE(c.images.size(), cfg.max_images);
  }
  const double mean = total / static_cast<double>(city.truth.clusters.size());
  EXPECT_NEAR(mean, 3 + cfg.extra_images_mean, 0.05 * (3 + cfg.extra_images_mean));
}

TEST(Synth, ChangeIntervalsLieStrictlyInsideCaptureDates) {
  const auto city = generate(base());
  std::size_t large = 0;
  for (const auto& c : city.truth.clusters) {
    for (std::size_t i = 1; i < c.images.size(); ++i) EXPECT_LT(c.images[i - 1].date, c.images[i].date);
    EXPECT_GE(c.images.front().date, city.config.start);
    EXPECT_LE(c.images.back().date, city.config.end);
    if (c.large_change) {
      ++large;
      EXPECT_LT(c.large_after + 1, c.images.size());
      EXPECT_TRUE(c.straddles_large(c.large_after, c.large_after + 1));
      EXPECT_FALSE(c.straddles_large(c.large_after + 1, c.images.size()));
    }
    if (c.small_change) {
      EXPECT_LT(c.small_after + 1, c.images.size());
    }
    EXPECT_LE(c.large_row + city.config.change_window.h, city.config.grid_h);
  }
  EXPECT_GT(large, 0u);
}

TEST(Synth, SmallChangeIsolatedFromLargeBlock) {
  auto cfg = base();
  cfg.large_prob_max = cfg.large_prob_min = 1.0;
  cfg.small_prob_max = cfg.small_prob_min = 1.0;
  const auto city = generate(cfg);
  for (const auto& c : city.truth.clusters) {
    ASSERT_TRUE(c.large_change && c.small_change);
    for (std::size_t dr = 0; dr < 2; ++dr) {
      for (std::size_t dc = 0; dc < 2; ++dc) {
        const std::size_t sc = (c.small_col + dc) % cfg.grid_w, sr = c.small_row + dr;
        const std::size_t col_off = (sc + cfg.grid_w - c.large_col) % cfg.grid_w;
        const bool near_cols = col_off < 9 || col_off == cfg.grid_w - 1;
        const bool near_rows = sr + 1 >= c.large_row && sr <= c.large_row + 8;
        EXPECT_FALSE(near_cols && near_rows) << c.cluster_id;
      }
    }
  }
}

TEST(Synth, ClusteringRecoversTruthAndDropsWaterDecoy) {
  const auto city = generate(base());
  ASSERT_FALSE(city.water.empty());
  const auto rep = geo::build_clusters(city.panoramas, city.regions, &city.water, {});
  std::set<std::string> got, want;
  for (const auto& c : rep.clusters) got.insert(c.cluster_id);
  for (const auto& c : city.truth.clusters) want.insert(c.cluster_id);
  EXPECT_EQ(got, want);
  EXPECT_GE(rep.dropped_water, 1u);
  const auto noisy = geo::build_clusters(city.panoramas, city.regions, nullptr, {});
  EXPECT_GT(noisy.clusters.size(), rep.clusters.size());
}

TEST(Synth, NoiselessDriftGivesPerfectPassthroughOrder) {
  auto cfg = base();
  cfg.noise_sigma = 0.0;
  cfg.weather_sigma = 0.0;
  const auto city = generate(cfg);
  const SynthGridSource src(city);
  const auto ts = mining::mine(truth_clusters(city), mining::find_si("SI-1"));
  ASSERT_FALSE(ts.empty());
  EXPECT_DOUBLE_EQ(train::order_prediction(model::PassthroughEncoder(), ts, src).accuracy, 1.0);
}

TEST(Synth, NoChangesMeansNoLargeDetections) {
  auto cfg = base();
  cfg.weather_sigma = 0.0;
  cfg.large_prob_max = cfg.large_prob_min = 0.0;
  cfg.small_prob_max = cfg.small_prob_min = 0.0;
  const auto quiet = generate(cfg);
  detect::DetectorConfig det;
  det.threshold = 1.5;
  const auto none = detect::run_detection(truth_clusters(quiet), SynthGridSource(quiet), model::PassthroughEncoder(), det, true, false);
  EXPECT_GT(none.pairs_compared, 0u);
  EXPECT_TRUE(none.detections.empty());

  cfg.large_prob_max = cfg.large_prob_min = 1.0;
  const auto busy = generate(cfg);
  const auto some = detect::run_detection(truth_clusters(busy), SynthGridSource(busy), model::PassthroughEncoder(), det, true, false);
  EXPECT_FALSE(some.detections.empty());
}

TEST(Synth, IndicatorBinsDriveProbabilities) {
  auto cfg = base();
  cfg.n_regions = 8;
  const auto city = generate(cfg);
  ASSERT_EQ(city.truth.regions.size(), 8u);
  for (const auto& a : city.truth.regions) {
    for (const auto& b : city.truth.regions) {
      if (a.indicator < b.indicator) {
        EXPECT_GT(a.large_prob, b.large_prob);
        EXPECT_LT(a.small_prob, b.small_prob);
      }
    }
    EXPECT_EQ(city.indicator.at(a.region_id), a.indicator);
  }
  EXPECT_EQ(city.truth.large_sign, -1);
  EXPECT_EQ(city.truth.small_sign, 1);
}

TEST(Synth, GroundTruthRoundTrip) {
  const auto city = generate(base());
  testing_support::TempDir dir;
  write_ground_truth(dir / "gt.json", city.truth);
  const auto back = read_ground_truth(dir / "gt.json");
  ASSERT_EQ(back.clusters.size(), city.truth.clusters.size());
  for (std::size_t i = 0; i < back.clusters.size(); ++i) {
    const auto& a = back.clusters[i];
    const auto& b = city.truth.clusters[i];
    EXPECT_EQ(a.cluster_id, b.cluster_id);
    EXPECT_EQ(a.large_change, b.large_change);
    if (b.large_change) {
      EXPECT_EQ(a.large_after, b.large_after);
      EXPECT_EQ(a.large_col, b.large_col);
    }
    EXPECT_EQ(a.images.size(), b.images.size());
  }
  EXPECT_EQ(back.large_window, city.truth.large_window);
}

TEST(Synth, RasterModeRendersAnalysisSizedImages) {
  auto cfg = base();
  cfg.n_regions = 1;
  cfg.n_areas = 1;
  cfg.clusters_per_region = 3;
  cfg.rasters = true;
  const auto city = generate(cfg);
  const auto img = render_raster(cfg, city.truth.clusters[0], 0);
  EXPECT_EQ(img.width(), 700u);
  EXPECT_EQ(img.height(), 210u);
  testing_support::TempDir dir;
  write_city(city, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "images" / (city.truth.clusters[0].images[0].id + ".png")));
}

TEST(Synth, ValidationRejectsInfeasibleLayouts) {
  auto cfg = base();
  cfg.clusters_per_region = 10000;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = base();
  cfg.n_areas = 9;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = base();
  cfg.force_small_col = 50;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
