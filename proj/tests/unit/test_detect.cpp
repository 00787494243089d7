#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "emplace/detect.hpp"
#include "emplace/error.hpp"
#include "emplace/rng.hpp"
#include "tempdir.hpp"

using namespace emplace;
using namespace emplace::detect;

namespace {

Heatmap random_heatmap(std::size_t w, std::size_t h, std::uint64_t seed, double scale = 1.0) {
  Heatmap hm{w, h, std::vector<double>(w * h), "a", "b"};
  Rng rng(seed);
  for (auto& v : hm.values) v = scale * rng.uniform();
  return hm;
}

Heatmap rotate_columns(const Heatmap& h, std::size_t k) {
  Heatmap out = h;
  for (std::size_t r = 0; r < h.grid_h; ++r) {
    for (std::size_t c = 0; c < h.grid_w; ++c) out.at(c, r) = h.at((c + k) % h.grid_w, r);
  }
  return out;
}

double brute_mean(const Heatmap& h, std::size_t col, std::size_t row, WindowSize w) {
  double s = 0;
  for (std::size_t r = row; r < row + w.h; ++r) {
    for (std::size_t c = col; c < col + w.w; ++c) s += h.at(c % h.grid_w, r);
  }
  return s / static_cast<double>(w.w * w.h);
}

model::TokenGrid tokens(std::size_t w, std::size_t h, std::size_t d, float fill) {
  model::TokenGrid g;
  g.patches = model::VectorGrid(w, h, d);
  for (auto& v : g.patches.data()) v = fill;
  g.cls.assign(d, fill);
  return g;
}

}  // namespace

TEST(Heatmap, EuclideanPerCell) {
  auto a = tokens(3, 2, 2, 0.f), b = tokens(3, 2, 2, 0.f);
  b.patches.at(2, 1)[0] = 3.f;
  b.patches.at(2, 1)[1] = 4.f;
  b.cls = {100.f, 100.f};
  const auto h = heatmap(a, b);
  EXPECT_DOUBLE_EQ(h.at(2, 1), 5.0);
  EXPECT_DOUBLE_EQ(std::accumulate(h.values.begin(), h.values.end(), 0.0), 5.0);
  EXPECT_THROW(heatmap(a, tokens(2, 2, 2, 0.f)), DataError);
}

TEST(Windows, CountsWithAndWithoutWrap) {
  const auto h = random_heatmap(50, 15, 1);
  EXPECT_EQ(window_means(h, {8, 8}, true).size(), 400u);
  EXPECT_EQ(window_means(h, {8, 8}, false).size(), 43u * 8u);
  EXPECT_EQ(window_means(h, {2, 2}, true).size(), 50u * 14u);
  EXPECT_EQ(window_means(h, {50, 15}, false).size(), 1u);
}

TEST(Windows, MeansMatchBruteForceAndOrder) {
  const auto h = random_heatmap(12, 5, 2);
  const auto ws = window_means(h, {4, 3}, true);
  std::size_t i = 0;
  for (std::size_t r = 0; r + 3 <= 5; ++r) {
    for (std::size_t c = 0; c < 12; ++c, ++i) {
      EXPECT_EQ(ws[i].row, r);
      EXPECT_EQ(ws[i].col, c);
      EXPECT_NEAR(ws[i].mean, brute_mean(h, c, r, {4, 3}), 1e-12);
    }
  }
}

TEST(Windows, MaxWindowIsArgmaxAndFirstOnTies) {
  Heatmap flat{10, 4, std::vector<double>(40, 1.0), "", ""};
  const auto m = max_window(flat, {3, 2}, true);
  EXPECT_EQ(m->col, 0u);
  EXPECT_EQ(m->row, 0u);
  const auto h = random_heatmap(20, 10, 3);
  const auto ws = window_means(h, {5, 5}, true);
  const auto best = std::max_element(ws.begin(), ws.end(), [](auto& a, auto& b) { return a.mean < b.mean; });
  EXPECT_EQ(max_window(h, {5, 5}, true)->mean, best->mean);
  EXPECT_FALSE(max_window(h, {21, 5}, false));
}

TEST(LargeDetector, FiresAcrossTheSeamOnlyWithWrap) {
  Heatmap h{50, 15, std::vector<double>(750, 0.1), "a", "b"};
  for (std::size_t r = 4; r < 12; ++r) {
    for (std::size_t c : {46u, 47u, 48u, 49u, 0u, 1u, 2u, 3u}) h.at(c, r) = 5.0;
  }
  DetectorConfig cfg;
  cfg.threshold = 3.0;
  const auto d = detect_large(h, cfg);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->col, 46u);
  EXPECT_EQ(d->row, 4u);
  EXPECT_DOUBLE_EQ(d->score, 5.0);
  cfg.wrap_horizontal = false;
  EXPECT_FALSE(detect_large(h, cfg));
  cfg.threshold = 5.0;  // strictly greater is required
  cfg.wrap_horizontal = true;
  EXPECT_FALSE(detect_large(h, cfg));
}

TEST(LargeDetector, ThresholdMonotone) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto h = random_heatmap(50, 15, seed);
    DetectorConfig lo, hi;
    lo.threshold = 0.5;
    hi.threshold = 0.55;
    if (detect_large(h, hi)) {
      EXPECT_TRUE(detect_large(h, lo));
    }
  }
}

TEST(RingCells, InteriorEdgeAndSeam) {
  const auto h = random_heatmap(10, 6, 4);
  EXPECT_EQ(ring_cells(h, 4, 2, {2, 2}, true).size(), 12u);
  EXPECT_EQ(ring_cells(h, 4, 0, {2, 2}, true).size(), 8u);
  const auto seam = ring_cells(h, 9, 2, {2, 2}, true);
  EXPECT_EQ(seam.size(), 12u);
  const std::set<std::pair<std::size_t, std::size_t>> s(seam.begin(), seam.end());
  EXPECT_TRUE(s.count({8, 2}));
  EXPECT_TRUE(s.count({1, 3}));
  EXPECT_FALSE(s.count({0, 2}));  // inside the window
  EXPECT_EQ(ring_cells(h, 0, 2, {2, 2}, false).size(), 8u);
}

TEST(SmallDetector, SeamWindowFiresAndHonoursRing) {
  Heatmap h{50, 15, std::vector<double>(750, 0.5), "a", "b"};
  for (std::size_t r : {6u, 7u}) {
    h.at(49, r) = 4.0;
    h.at(0, r) = 4.0;
  }
  DetectorConfig cfg;
  cfg.threshold = 2.5;  // above the half-covered windows either side of the seam
  const auto ds = detect_small(h, cfg);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].col, 49u);
  EXPECT_EQ(ds[0].row, 6u);
  EXPECT_TRUE(satisfies_ring_rule(h, ds[0], cfg));
  cfg.wrap_horizontal = false;
  EXPECT_TRUE(detect_small(h, cfg).empty());
}

TEST(SmallDetector, RingBlocksExtendedBlobs) {
  Heatmap h{20, 10, std::vector<double>(200, 0.1), "a", "b"};
  for (std::size_t c = 5; c < 12; ++c) {
    for (std::size_t r = 3; r < 5; ++r) h.at(c, r) = 4.0;  // a 7x2 bar is not a small change
  }
  DetectorConfig cfg;
  cfg.threshold = 1.0;
  cfg.window = {4, 4};
  EXPECT_TRUE(detect_small(h, cfg).empty());
}

TEST(SmallDetector, OutputMatchesBruteForceRule) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto h = random_heatmap(30, 10, seed, 0.3);
    Rng rng(seed + 100);
    for (int k = 0; k < 4; ++k) {
      const std::size_t c = rng.index(30), r = rng.index(9);
      const double v = 2 + rng.uniform();
      h.at(c, r) = v;
      h.at((c + 1) % 30, r) = v + 0.1;
      h.at(c, r + 1) = v + 0.2;
      h.at((c + 1) % 30, r + 1) = v + 0.3;
    }
    DetectorConfig cfg;
    cfg.threshold = 1.0;
    cfg.window = {4, 4};
    const auto ds = detect_small(h, cfg);
    for (const auto& d : ds) EXPECT_TRUE(satisfies_ring_rule(h, d, cfg));
    // Firing windows by direct evaluation; kept ones are those that no
    // better overlapping firing window beats.
    std::vector<std::tuple<double, std::size_t, std::size_t>> firing;
    for (std::size_t r = 0; r + 2 <= 10; ++r) {
      for (std::size_t c = 0; c < 30; ++c) {
        const double m = brute_mean(h, c, r, {2, 2});
        if (!(m > cfg.threshold)) continue;
        bool ok = true;
        for (long dr = -1; dr <= 2; ++dr) {
          for (long dc = -1; dc <= 2; ++dc) {
            const bool inside = dr >= 0 && dr < 2 && dc >= 0 && dc < 2;
            const long rr = static_cast<long>(r) + dr;
            if (inside || rr < 0 || rr >= 10) continue;
            const auto cc = static_cast<std::size_t>((static_cast<long>(c) + dc + 30) % 30);
            ok &= m >= 1.2 * h.at(cc, static_cast<std::size_t>(rr));
          }
        }
        if (ok) firing.emplace_back(m, r, c);
      }
    }
    const auto overlaps = [](std::size_t c1, std::size_t r1, std::size_t c2, std::size_t r2) {
      const std::size_t dc = (c1 + 30 - c2) % 30;
      const bool col = dc <= 1 || dc >= 29;
      return col && (r1 > r2 ? r1 - r2 : r2 - r1) <= 1;
    };
    std::set<std::pair<std::size_t, std::size_t>> expected;
    for (const auto& [m, r, c] : firing) {
      bool beaten = false;
      for (const auto& [m2, r2, c2] : firing) {
        const bool better = m2 > m || (m2 == m && std::tie(r2, c2) < std::tie(r, c));
        if (better && overlaps(c, r, c2, r2)) beaten = true;
      }
      if (!beaten) expected.insert({c, r});
    }
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (const auto& d : ds) got.insert({d.col, d.row});
    EXPECT_EQ(got, expected) << "seed " << seed;
  }
}

TEST(SmallDetector, EquivariantUnderColumnRotation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto h = random_heatmap(50, 15, seed, 0.2);
    Rng rng(seed);
    for (int k = 0; k < 3; ++k) {
      const std::size_t c = rng.index(50), r = rng.index(14);
      for (std::size_t dc = 0; dc < 2; ++dc) {
        for (std::size_t dr = 0; dr < 2; ++dr) h.at((c + dc) % 50, r + dr) = 3 + rng.uniform();
      }
    }
    DetectorConfig cfg;
    cfg.threshold = 1.0;
    const std::size_t k = 1 + rng.index(49);
    std::set<std::pair<std::size_t, std::size_t>> base, rot;
    for (const auto& d : detect_small(h, cfg)) base.insert({(d.col + 50 - k) % 50, d.row});
    for (const auto& d : detect_small(rotate_columns(h, k), cfg)) rot.insert({d.col, d.row});
    EXPECT_EQ(base, rot);
    EXPECT_FALSE(base.empty());
  }
}

TEST(DetectorConfig, Validation) {
  DetectorConfig cfg;
  EXPECT_NO_THROW(cfg.validate(50, 15));
  EXPECT_THROW(cfg.validate(7, 15), ConfigError);
  cfg.threshold = 0;
  EXPECT_THROW(cfg.validate(50, 15), ConfigError);
  cfg.threshold = 1;
  cfg.small_ratio = 1.0;
  EXPECT_THROW(cfg.validate(50, 15), ConfigError);
}

TEST(Calibration, BestAccuracyLargestThreshold) {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> scores;
    std::vector<bool> labels;
    const std::size_t n = 2 + rng.index(30);
    for (std::size_t i = 0; i < n; ++i) {
      const bool y = rng.uniform() < 0.4;
      labels.push_back(y);
      scores.push_back(std::abs(std::round(((y ? 2.0 : 1.0) + rng.normal(0, 0.6)) * 4) / 4));  // ties on purpose
    }
    const auto res = calibrate_scores(scores, labels, {});
    const auto acc = [&](double t) {
      std::size_t ok = 0;
      for (std::size_t i = 0; i < n; ++i) ok += ((scores[i] > t) == labels[i]) ? 1 : 0;
      return static_cast<double>(ok) / static_cast<double>(n);
    };
    // Accuracy is piecewise constant between observed scores, so probing
    // every score and every gap covers all positive thresholds.
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    double best = sorted.front() > 0 ? acc(sorted.front() / 2) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best = std::max(best, acc(sorted[i]));
      if (i + 1 < n) best = std::max(best, acc((sorted[i] + sorted[i + 1]) / 2));
    }
    EXPECT_DOUBLE_EQ(res.accuracy, best);
    if (res.config.threshold > std::numeric_limits<double>::min()) {
      EXPECT_DOUBLE_EQ(acc(res.config.threshold), res.accuracy);
    }
    for (double t : sorted) {
      if (t > res.config.threshold) {
        EXPECT_LT(acc(t), res.accuracy + 1e-15) << t;
      }
    }
    EXPECT_GT(res.config.threshold, 0.0);
  }
}

TEST(Calibration, SeparableGivesPerfectAccuracy) {
  const auto r = calibrate_scores({0.5, 0.7, 2.0, 3.0}, {false, false, true, true}, {});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.config.threshold, 1.35);
  EXPECT_THROW(calibrate_scores({}, {}, {}), DataError);
}

TEST(Calibration, AcrossWindowsAndRuns) {
  std::vector<LabeledHeatmap> val;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto h = random_heatmap(20, 8, s, 0.5);
    const bool change = s % 2 == 0;
    if (change) {
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) h.at(c + 5, r + 2) = 3.0;
      }
    }
    val.push_back({h, change});
  }
  const auto r = calibrate_threshold(val, {{8, 8}, {4, 4}}, {});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.config.window, (WindowSize{4, 4}));
  CalibrationResult a, b;
  a.config.threshold = 1.0;
  b.config.threshold = 2.0;
  EXPECT_DOUBLE_EQ(max_threshold({a, b, a}).config.threshold, 2.0);
}

TEST(RunDetection, FindsPlantedChangeOnStraddlingPairs) {
  model::MemoryGridSource src;
  geo::Cluster c;
  c.cluster_id = "c1";
  for (int i = 0; i < 3; ++i) {
    geo::PanoramaMeta m;
    m.id = "img" + std::to_string(i);
    m.timestamp = Date(17000 + 400 * i);
    c.members.push_back(m);
    auto g = tokens(50, 15, 4, 0.f);
    if (i == 2) {
      for (std::size_t r = 3; r < 11; ++r) {
        for (std::size_t col = 10; col < 18; ++col) g.patches.at(col, r)[1] = 2.f;
      }
      g.patches.at(30, 5)[0] = 3.f;
      g.patches.at(31, 5)[0] = 3.f;
      g.patches.at(30, 6)[0] = 3.f;
      g.patches.at(31, 6)[0] = 3.f;
    }
    src.put(m.id, g);
  }
  DetectorConfig cfg;
  const auto run = run_detection({c}, src, model::PassthroughEncoder(), cfg);
  EXPECT_EQ(run.pairs_compared, 3u);
  std::size_t large = 0, small = 0;
  for (const auto& d : run.detections) {
    EXPECT_EQ(d.img_b, "img2");
    if (d.kind == DetectionKind::large) {
      ++large;
      EXPECT_EQ(d.col, 10u);
      EXPECT_EQ(d.row, 3u);
    } else {
      ++small;
      EXPECT_EQ(d.col, 30u);
    }
  }
  EXPECT_EQ(large, 2u);
  EXPECT_EQ(small, 2u);
  EXPECT_TRUE(std::is_sorted(run.detections.begin(), run.detections.end(), [](auto& a, auto& b) {
    return std::tie(a.cluster_id, a.img_a, a.img_b) < std::tie(b.cluster_id, b.img_a, b.img_b);
  }));
}

TEST(DetectIo, JsonlAndConfigRoundTrip) {
  testing_support::TempDir dir;
  Detection d{"c", "a", "b", DetectionKind::small, 49, 6, {2, 2}, 3.25};
  write_detections_jsonl(dir / "d.jsonl", {d, d});
  const auto back = read_detections_jsonl(dir / "d.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].kind, DetectionKind::small);
  EXPECT_EQ(back[0].col, 49u);
  EXPECT_EQ(back[0].window, (WindowSize{2, 2}));
  EXPECT_DOUBLE_EQ(back[1].score, 3.25);
  DetectorConfig cfg;
  cfg.threshold = 0.1 + 0.2;
  cfg.window = {6, 4};
  cfg.wrap_horizontal = false;
  write_detector_config(dir / "c.json", cfg);
  const auto c2 = read_detector_config(dir / "c.json");
  EXPECT_EQ(c2.threshold, cfg.threshold);
  EXPECT_EQ(c2.window, cfg.window);
  EXPECT_FALSE(c2.wrap_horizontal);
  write_heatmap_png(dir / "h.png", random_heatmap(5, 3, 1), 0.0, 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "h.png"));
}
