#include "emplace/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "emplace/error.hpp"
#include "emplace/raster.hpp"
#include "json_util.hpp"

namespace emplace::detect {

using nlohmann::json;

void DetectorConfig::validate(std::size_t grid_w, std::size_t grid_h) const {
  if (!(threshold > 0.0)) throw ConfigError("detector threshold must be positive");
  if (!(small_ratio > 1.0)) throw ConfigError("small-change ratio must exceed 1");
  for (const auto& win : {window, small_window}) {
    if (win.w == 0 || win.h == 0 || win.w > grid_w || win.h > grid_h) {
      throw ConfigError("window " + std::to_string(win.w) + "x" + std::to_string(win.h) +
                        " does not fit the " + std::to_string(grid_w) + "x" + std::to_string(grid_h) +
                        " grid");
    }
  }
}

const char* kind_name(DetectionKind k) { return k == DetectionKind::large ? "large" : "small"; }

Heatmap heatmap(const model::TokenGrid& a, const model::TokenGrid& b) {
  const auto& pa = a.patches;
  const auto& pb = b.patches;
  if (pa.grid_w() != pb.grid_w() || pa.grid_h() != pb.grid_h() || pa.dim() != pb.dim()) {
    throw DataError("heatmap needs token grids of identical shape");
  }
  Heatmap h;
  h.grid_w = pa.grid_w();
  h.grid_h = pa.grid_h();
  h.values.resize(pa.cells());
  for (std::size_t i = 0; i < pa.cells(); ++i) {
    const auto x = pa.cell(i);
    const auto y = pb.cell(i);
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = static_cast<double>(x[k]) - static_cast<double>(y[k]);
      s += d * d;
    }
    h.values[i] = std::sqrt(s);
  }
  return h;
}

namespace {

double window_mean(const Heatmap& h, std::size_t col, std::size_t row, WindowSize win) {
  double s = 0.0;
  for (std::size_t r = row; r < row + win.h; ++r) {
    for (std::size_t c = 0; c < win.w; ++c) s += h.at((col + c) % h.grid_w, r);
  }
  return s / static_cast<double>(win.w * win.h);
}

std::size_t col_origins(const Heatmap& h, WindowSize win, bool wrap) {
  if (win.w > h.grid_w) return 0;
  return wrap ? h.grid_w : h.grid_w - win.w + 1;
}

std::size_t row_origins(const Heatmap& h, WindowSize win) {
  return win.h > h.grid_h ? 0 : h.grid_h - win.h + 1;
}

}  // namespace

std::vector<WindowMean> window_means(const Heatmap& h, WindowSize window, bool wrap) {
  std::vector<WindowMean> out;
  const std::size_t nc = col_origins(h, window, wrap);
  const std::size_t nr = row_origins(h, window);
  out.reserve(nc * nr);
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t c = 0; c < nc; ++c) out.push_back({c, r, window_mean(h, c, r, window)});
  }
  return out;
}

std::optional<WindowMean> max_window(const Heatmap& h, WindowSize window, bool wrap) {
  std::optional<WindowMean> best;
  for (const auto& wm : window_means(h, window, wrap)) {
    if (!best || wm.mean > best->mean) best = wm;
  }
  return best;
}

std::optional<Detection> detect_large(const Heatmap& h, const DetectorConfig& cfg) {
  const auto best = max_window(h, cfg.window, cfg.wrap_horizontal);
  if (!best || !(best->mean > cfg.threshold)) return std::nullopt;
  Detection d;
  d.img_a = h.img_a;
  d.img_b = h.img_b;
  d.kind = DetectionKind::large;
  d.col = best->col;
  d.row = best->row;
  d.window = cfg.window;
  d.score = best->mean;
  return d;
}

std::vector<std::pair<std::size_t, std::size_t>> ring_cells(const Heatmap& h, std::size_t col,
                                                            std::size_t row, WindowSize window,
                                                            bool wrap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto W = static_cast<long long>(h.grid_w);
  const auto H = static_cast<long long>(h.grid_h);
  const auto c0 = static_cast<long long>(col);
  const auto r0 = static_cast<long long>(row);
  const auto ww = static_cast<long long>(window.w);
  const auto wh = static_cast<long long>(window.h);
  std::set<std::pair<std::size_t, std::size_t>> inside;
  for (long long r = r0; r < r0 + wh; ++r) {
    for (long long c = c0; c < c0 + ww; ++c) {
      inside.insert({static_cast<std::size_t>(((c % W) + W) % W), static_cast<std::size_t>(r)});
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (long long r = r0 - 1; r <= r0 + wh; ++r) {
    if (r < 0 || r >= H) continue;
    for (long long c = c0 - 1; c <= c0 + ww; ++c) {
      long long cc = c;
      if (cc < 0 || cc >= W) {
        if (!wrap) continue;
        cc = ((cc % W) + W) % W;
      }
      const std::pair<std::size_t, std::size_t> cell{static_cast<std::size_t>(cc), static_cast<std::size_t>(r)};
      if (inside.count(cell) || !seen.insert(cell).second) continue;
      out.push_back(cell);
    }
  }
  return out;
}

bool satisfies_ring_rule(const Heatmap& h, const Detection& d, const DetectorConfig& cfg) {
  const double mean = window_mean(h, d.col, d.row, d.window);
  if (!(mean > cfg.threshold)) return false;
  for (const auto& [c, r] : ring_cells(h, d.col, d.row, d.window, cfg.wrap_horizontal)) {
    if (!(mean >= cfg.small_ratio * h.at(c, r))) return false;
  }
  return true;
}

std::vector<Detection> detect_small(const Heatmap& h, const DetectorConfig& cfg) {
  const WindowSize win = cfg.small_window;
  std::vector<WindowMean> firing;
  for (const auto& wm : window_means(h, win, cfg.wrap_horizontal)) {
    if (!(wm.mean > cfg.threshold)) continue;
    bool ok = true;
    for (const auto& [c, r] : ring_cells(h, wm.col, wm.row, win, cfg.wrap_horizontal)) {
      if (!(wm.mean >= cfg.small_ratio * h.at(c, r))) {
        ok = false;
        break;
      }
    }
    if (ok) firing.push_back(wm);
  }

  auto cells = [&](const WindowMean& wm) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (std::size_t r = wm.row; r < wm.row + win.h; ++r) {
      for (std::size_t c = 0; c < win.w; ++c) s.insert({(wm.col + c) % h.grid_w, r});
    }
    return s;
  };
  auto outranks = [](const WindowMean& a, const WindowMean& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  };

  std::vector<Detection> out;
  for (const auto& f : firing) {
    const auto mine = cells(f);
    bool suppressed = false;
    for (const auto& g : firing) {
      if (&g == &f || !outranks(g, f)) continue;
      const auto theirs = cells(g);
      if (std::any_of(mine.begin(), mine.end(), [&](const auto& cell) { return theirs.count(cell) > 0; })) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    Detection d;
    d.img_a = h.img_a;
    d.img_b = h.img_b;
    d.kind = DetectionKind::small;
    d.col = f.col;
    d.row = f.row;
    d.window = win;
    d.score = f.mean;
    out.push_back(std::move(d));
  }
  return out;
}

CalibrationResult calibrate_scores(const std::vector<double>& scores, const std::vector<bool>& labels,
                                   const DetectorConfig& base) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DataError("calibration needs a non-empty labelled validation set");
  }
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> candidates;
  if (distinct.front() > 0.0) candidates.push_back(distinct.front() / 2.0);
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    candidates.push_back(distinct[i]);
    if (i + 1 < distinct.size()) candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  }

  // Sweep thresholds in increasing order: everything above the threshold is
  // predicted as change.
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t positives = 0;
  for (bool l : labels) positives += l ? 1 : 0;

  CalibrationResult best;
  best.accuracy = -1.0;
  std::size_t k = 0;
  std::size_t pos_at_or_below = 0;
  std::size_t neg_at_or_below = 0;
  for (double thr : candidates) {
    while (k < idx.size() && scores[idx[k]] <= thr) {
      (labels[idx[k]] ? pos_at_or_below : neg_at_or_below)++;
      ++k;
    }
    const std::size_t correct = neg_at_or_below + (positives - pos_at_or_below);
    const double acc = static_cast<double>(correct) / static_cast<double>(scores.size());
    if (acc >= best.accuracy) {
      best.accuracy = acc;
      best.config = base;
      best.config.threshold = thr;
    }
  }
  if (!(best.config.threshold > 0.0)) best.config.threshold = std::numeric_limits<double>::min();
  return best;
}

CalibrationResult calibrate_threshold(const std::vector<LabeledHeatmap>& val,
                                      const std::vector<WindowSize>& windows, const DetectorConfig& base) {
  if (windows.empty()) throw ConfigError("calibration needs at least one window size");
  if (val.empty()) throw DataError("calibration needs a non-empty labelled validation set");
  std::optional<CalibrationResult> best;
  for (const auto& win : windows) {
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& lh : val) {
      const auto m = max_window(lh.heatmap, win, base.wrap_horizontal);
      if (!m) throw ConfigError("window does not fit the heatmap grid");
      scores.push_back(m->mean);
      labels.push_back(lh.change);
    }
    DetectorConfig cfg = base;
    cfg.window = win;
    auto r = calibrate_scores(scores, labels, cfg);
    if (!best || r.accuracy > best->accuracy ||
        (r.accuracy == best->accuracy && r.config.threshold > best->config.threshold)) {
      best = r;
    }
  }
  return *best;
}

CalibrationResult max_threshold(const std::vector<CalibrationResult>& runs) {
  if (runs.empty()) throw ConfigError("no calibration runs to combine");
  const CalibrationResult* best = &runs.front();
  for (const auto& r : runs) {
    if (r.config.threshold > best->config.threshold) best = &r;
  }
  return *best;
}

DetectionRun run_detection(const std::vector<geo::Cluster>& clusters, const model::GridSource& source,
                           const model::Encoder& encoder, const DetectorConfig& cfg, bool large, bool small) {
  DetectionRun run;
  for (const auto& c : clusters) {
    std::vector<std::optional<model::TokenGrid>> tokens;
    for (const auto& m : c.members) {
      auto g = source.load(m.id);
      if (!g) {
        ++run.skipped_images;
        tokens.emplace_back();
        continue;
      }
      tokens.emplace_back(encoder.encode(*g));
    }
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      for (std::size_t j = i + 1; j < c.members.size(); ++j) {
        if (!tokens[i] || !tokens[j]) continue;
        ++run.pairs_compared;
        Heatmap h = heatmap(*tokens[i], *tokens[j]);
        h.img_a = c.members[i].id;
        h.img_b = c.members[j].id;
        cfg.validate(h.grid_w, h.grid_h);
        if (large) {
          if (auto d = detect_large(h, cfg)) {
            d->cluster_id = c.cluster_id;
            run.detections.push_back(std::move(*d));
          }
        }
        if (small) {
          for (auto& d : detect_small(h, cfg)) {
            d.cluster_id = c.cluster_id;
            run.detections.push_back(std::move(d));
          }
        }
      }
    }
  }
  std::sort(run.detections.begin(), run.detections.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.cluster_id, a.img_a, a.img_b, a.kind, a.row, a.col) <
           std::tie(b.cluster_id, b.img_a, b.img_b, b.kind, b.row, b.col);
  });
  return run;
}

void write_detections_jsonl(const std::filesystem::path& path, const std::vector<Detection>& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : ds) {
    const json j{{"cluster_id", d.cluster_id}, {"img_a", d.img_a},
                 {"img_b", d.img_b},           {"kind", kind_name(d.kind)},
                 {"origin", {d.col, d.row}},   {"window", {d.window.w, d.window.h}},
                 {"score", d.score}};
    out << j.dump() << '\n';
  }
}

std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path) {
  std::vector<Detection> out;
  for (const auto& j : detail::read_jsonl(path)) {
    try {
      Detection d;
      d.cluster_id = j.at("cluster_id").get<std::string>();
      d.img_a = j.at("img_a").get<std::string>();
      d.img_b = j.at("img_b").get<std::string>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "large" && kind != "small") throw DataError("unknown detection kind '" + kind + "'");
      d.kind = kind == "large" ? DetectionKind::large : DetectionKind::small;
      d.col = j.at("origin").at(0).get<std::size_t>();
      d.row = j.at("origin").at(1).get<std::size_t>();
      d.window = {j.at("window").at(0).get<std::size_t>(), j.at("window").at(1).get<std::size_t>()};
      d.score = j.at("score").get<double>();
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_detector_config(const std::filesystem::path& path, const DetectorConfig& cfg) {
  detail::write_json(path, json{{"window", {cfg.window.w, cfg.window.h}},
                                {"threshold", cfg.threshold},
                                {"small_window", {cfg.small_window.w, cfg.small_window.h}},
                                {"small_ratio", cfg.small_ratio},
                                {"wrap_horizontal", cfg.wrap_horizontal}});
}

DetectorConfig read_detector_config(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  try {
    DetectorConfig cfg;
    cfg.window = {j.at("window").at(0).get<std::size_t>(), j.at("window").at(1).get<std::size_t>()};
    cfg.threshold = j.at("threshold").get<double>();
    cfg.small_window = {j.at("small_window").at(0).get<std::size_t>(),
                        j.at("small_window").at(1).get<std::size_t>()};
    cfg.small_ratio = j.at("small_ratio").get<double>();
    cfg.wrap_horizontal = j.at("wrap_horizontal").get<bool>();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_heatmap_png(const std::filesystem::path& path, const Heatmap& h, double max_value,
                       std::size_t cell_px) {
  if (max_value <= 0.0) {
    for (double v : h.values) max_value = std::max(max_value, v);
  }
  raster::Panorama img(h.grid_w * cell_px, h.grid_h * cell_px, 1);
  for (std::size_t r = 0; r < h.grid_h; ++r) {
    for (std::size_t c = 0; c < h.grid_w; ++c) {
      const double v = max_value > 0.0 ? std::clamp(h.at(c, r) / max_value, 0.0, 1.0) : 0.0;
      const auto g = static_cast<std::uint8_t>(std::lround(v * 255.0));
      for (std::size_t y = 0; y < cell_px; ++y) {
        for (std::size_t x = 0; x < cell_px; ++x) img.at(c * cell_px + x, r * cell_px + y, 0) = g;
      }
    }
  }
  raster::write_png(path, img);
}

}  // namespace emplace::detect
