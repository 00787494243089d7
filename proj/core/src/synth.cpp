#include "emplace/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <set>

#include "emplace/error.hpp"
#include "emplace/geo_io.hpp"
#include "emplace/rng.hpp"
#include "json_util.hpp"

namespace emplace::synth {

using nlohmann::json;

void SynthConfig::validate() const {
  if (n_regions == 0 || clusters_per_region == 0) throw ConfigError("synthetic city needs regions and clusters");
  if (n_areas == 0 || n_areas > n_regions) throw ConfigError("n_areas must be in [1, n_regions]");
  if (max_images < 3) throw ConfigError("clusters need at least 3 images");
  if (!(extra_images_mean >= 0.0)) throw ConfigError("extra_images_mean must be non-negative");
  for (double p : {revisit_prob, large_prob_max, large_prob_min, small_prob_max, small_prob_min}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must lie in [0, 1]");
  }
  if (revisit_min_days < 1 || revisit_max_days < revisit_min_days || gap_min_days < 1 ||
      gap_max_days < gap_min_days) {
    throw ConfigError("capture gap ranges must be positive and ordered");
  }
  if (end - start < 2 * std::max(gap_max_days, revisit_max_days)) {
    throw ConfigError("date range too short for three captures");
  }
  if (grid_w == 0 || grid_h == 0 || channels == 0) throw ConfigError("grid dimensions must be positive");
  for (const auto& w : {change_window, small_window}) {
    if (w.w == 0 || w.h == 0 || w.w > grid_w || w.h > grid_h) throw ConfigError("change window does not fit the grid");
  }
  if (force_small_col && *force_small_col >= grid_w) throw ConfigError("force_small_col outside the grid");
  for (double s : {base_sigma, weather_sigma, noise_sigma, drift_rate}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("content scales must be finite and non-negative");
  }
  if ((large_prob_max > 0.0 || large_prob_min > 0.0) && !(change_magnitude > noise_sigma)) {
    throw ConfigError("change_magnitude must exceed noise_sigma");
  }
  if ((small_prob_max > 0.0 || small_prob_min > 0.0) && !(small_magnitude > noise_sigma)) {
    throw ConfigError("small_magnitude must exceed noise_sigma");
  }
  if (!(cluster_spacing_m > 4.0 * jitter_m + 2.0)) throw ConfigError("cluster spacing too tight for the jitter");
  if (!(jitter_m >= 0.0 && jitter_m < 0.5)) throw ConfigError("jitter_m must be in [0, 0.5)");
  const double usable = region_size_m - 2.0 * cluster_spacing_m;
  const auto per_row = usable < 0.0 ? 0 : static_cast<std::size_t>(usable / cluster_spacing_m) + 1;
  if (per_row * per_row < clusters_per_region) {
    throw ConfigError("region_size_m too small for clusters_per_region at this spacing");
  }
}

namespace {

std::string fmt_id(const char* pattern, std::size_t a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

geo::RegionPolygon square(const geo::LatLon& origin, double x0, double y0, double size, std::string rid,
                          std::string aid) {
  geo::RegionPolygon p;
  p.region_id = std::move(rid);
  p.area_id = std::move(aid);
  for (auto [x, y] : {std::pair{x0, y0}, {x0 + size, y0}, {x0 + size, y0 + size}, {x0, y0 + size}}) {
    p.ring.push_back(geo::unproject_local(origin, {x, y}));
  }
  return p;
}

std::set<std::pair<std::size_t, std::size_t>> window_cells(const SynthConfig& cfg, std::size_t col,
                                                           std::size_t row, detect::WindowSize w) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t r = row; r < row + w.h; ++r) {
    for (std::size_t c = 0; c < w.w; ++c) out.insert({(col + c) % cfg.grid_w, r});
  }
  return out;
}

double interp(double at_lo, double at_hi, std::size_t bin, std::size_t n_bins) {
  if (n_bins <= 1) return at_lo;
  return at_lo + (at_hi - at_lo) * static_cast<double>(bin - 1) / static_cast<double>(n_bins - 1);
}

}  // namespace

City generate(const SynthConfig& cfg) {
  cfg.validate();
  City city;
  city.config = cfg;
  city.truth.large_window = cfg.change_window;
  city.truth.small_window = cfg.small_window;

  std::vector<std::size_t> bins(cfg.n_regions);
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i] = i + 1;
  Rng bin_rng(sub_seed(cfg.seed, "synth/indicator"));
  bin_rng.shuffle(bins);

  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n_regions))));
  const double usable = cfg.region_size_m - 2.0 * cfg.cluster_spacing_m;
  const auto per_row = static_cast<std::size_t>(usable / cfg.cluster_spacing_m) + 1;
  const std::int32_t span_days = cfg.end - cfg.start;

  for (std::size_t r = 0; r < cfg.n_regions; ++r) {
    const std::string rid = fmt_id("R%02zu", r + 1);
    const std::string aid = fmt_id("A%zu", r % cfg.n_areas + 1);
    const double x0 = static_cast<double>(r % cols) * cfg.region_size_m;
    const double y0 = static_cast<double>(r / cols) * cfg.region_size_m;
    city.regions.push_back(square(cfg.origin, x0, y0, cfg.region_size_m, rid, aid));

    RegionTruth rt;
    rt.region_id = rid;
    rt.area_id = aid;
    rt.indicator = static_cast<double>(bins[r]);
    rt.large_prob = interp(cfg.large_prob_max, cfg.large_prob_min, bins[r], cfg.n_regions);
    rt.small_prob = interp(cfg.small_prob_min, cfg.small_prob_max, bins[r], cfg.n_regions);
    city.truth.regions.push_back(rt);
    city.indicator[rid] = rt.indicator;

    Rng rng(sub_seed(cfg.seed, "synth/region/" + rid));
    std::vector<std::size_t> slots(per_row * per_row);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    rng.shuffle(slots);

    std::vector<ClusterTruth> region_clusters;
    for (std::size_t k = 0; k < cfg.clusters_per_region; ++k) {
      ClusterTruth c;
      c.region_id = rid;
      c.area_id = aid;
      const double cx = x0 + cfg.cluster_spacing_m + static_cast<double>(slots[k] % per_row) * cfg.cluster_spacing_m;
      const double cy = y0 + cfg.cluster_spacing_m + static_cast<double>(slots[k] / per_row) * cfg.cluster_spacing_m;
      c.center = geo::unproject_local(cfg.origin, {cx, cy});

      std::size_t n = 3 + static_cast<std::size_t>(rng.poisson(cfg.extra_images_mean));
      n = std::min(n, cfg.max_images);
      std::vector<std::int32_t> gaps(n - 1);
      for (auto& g : gaps) {
        g = rng.uniform() < cfg.revisit_prob
                ? static_cast<std::int32_t>(rng.integer(cfg.revisit_min_days, cfg.revisit_max_days))
                : static_cast<std::int32_t>(rng.integer(cfg.gap_min_days, cfg.gap_max_days));
      }
      std::int32_t total = 0;
      for (auto g : gaps) total += g;
      while (total > span_days && gaps.size() > 2) {
        total -= gaps.back();
        gaps.pop_back();
      }
      const Date first = cfg.start + static_cast<std::int32_t>(rng.integer(0, span_days - total));
      Date d = first;
      const std::string stem = rid + "-" + fmt_id("%04zu", k);
      std::vector<geo::PanoramaMeta> members;
      for (std::size_t i = 0; i <= gaps.size(); ++i) {
        if (i > 0) d = d + gaps[i - 1];
        ImageTruth img;
        img.id = stem + "-" + fmt_id("%02zu", i);
        img.date = d;
        img.heading = std::floor(rng.uniform(0.0, 360.0) * 10.0) / 10.0;
        c.images.push_back(img);

        geo::PanoramaMeta m;
        m.id = img.id;
        m.timestamp = d;
        m.heading = img.heading;
        m.position = geo::unproject_local(
            cfg.origin, {cx + rng.uniform(-cfg.jitter_m, cfg.jitter_m), cy + rng.uniform(-cfg.jitter_m, cfg.jitter_m)});
        m.height = std::round(rng.uniform(-0.2, 0.2) * 1000.0) / 1000.0;
        members.push_back(m);
      }
      c.cluster_id = geo::cluster_id_for(members);
      c.drift_angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);

      const std::size_t nimg = c.images.size();
      c.large_change = rng.uniform() < rt.large_prob;
      c.large_after = static_cast<std::size_t>(rng.index(nimg - 1));
      c.large_col = static_cast<std::size_t>(rng.index(cfg.grid_w));
      c.large_row = static_cast<std::size_t>(rng.index(cfg.grid_h - cfg.change_window.h + 1));
      c.small_change = rng.uniform() < rt.small_prob;
      c.small_after = static_cast<std::size_t>(rng.index(nimg - 1));
      const auto big = window_cells(cfg, c.large_col, c.large_row, cfg.change_window);
      for (int attempt = 0; attempt < 1000; ++attempt) {
        c.small_col = cfg.force_small_col ? *cfg.force_small_col : static_cast<std::size_t>(rng.index(cfg.grid_w));
        c.small_row = static_cast<std::size_t>(rng.index(cfg.grid_h - cfg.small_window.h + 1));
        if (!c.large_change) break;
        // Keep a one-cell gap so the small change is isolated from the large block.
        detect::WindowSize padded{cfg.small_window.w + 2, cfg.small_window.h + 2};
        const std::size_t pc = (c.small_col + cfg.grid_w - 1) % cfg.grid_w;
        const std::size_t pr = c.small_row == 0 ? 0 : c.small_row - 1;
        padded.h = std::min(padded.h, cfg.grid_h - pr);
        const auto mine = window_cells(cfg, pc, pr, padded);
        if (std::none_of(mine.begin(), mine.end(), [&](const auto& cell) { return big.count(cell) > 0; })) break;
      }

      for (auto& m : members) city.panoramas.push_back(std::move(m));
      region_clusters.push_back(std::move(c));
    }
    for (auto& c : region_clusters) city.truth.clusters.push_back(std::move(c));
  }

  if (cfg.water) {
    // A pond in the corner of the first region, away from the cluster lattice,
    // with one decoy capture site inside it.
    const double s = cfg.cluster_spacing_m * 0.6;
    city.water.push_back(square(cfg.origin, 1.0, 1.0, s, "water-1", geo::kUnassigned));
    Rng rng(sub_seed(cfg.seed, "synth/water"));
    for (std::size_t i = 0; i < 3; ++i) {
      geo::PanoramaMeta m;
      m.id = fmt_id("W-%02zu", i);
      m.timestamp = cfg.start + static_cast<std::int32_t>(400 * i);
      m.position = geo::unproject_local(cfg.origin, {1.0 + s / 2 + rng.uniform(-0.2, 0.2), 1.0 + s / 2 + rng.uniform(-0.2, 0.2)});
      city.panoramas.push_back(m);
    }
  }

  std::sort(city.truth.clusters.begin(), city.truth.clusters.end(), [](const auto& a, const auto& b) {
    return std::tie(a.region_id, a.cluster_id) < std::tie(b.region_id, b.cluster_id);
  });
  for (const auto& c : city.truth.clusters) {
    for (std::size_t i = 0; i < c.images.size(); ++i) {
      for (std::size_t j = i + 1; j < c.images.size(); ++j) {
        city.pairs.push_back({c.images[i].id, c.images[j].id, c.straddles_large(i, j), c.cluster_id});
      }
    }
  }
  return city;
}

model::VectorGrid render_features(const SynthConfig& cfg, const ClusterTruth& c, std::size_t image_index) {
  const std::size_t f = cfg.feature_dim();
  const std::size_t colour_dims = 2 * cfg.channels;
  const auto& img = c.images.at(image_index);
  model::VectorGrid g(cfg.grid_w, cfg.grid_h, f);

  Rng base(sub_seed(cfg.seed, "synth/base/" + c.cluster_id));
  for (float& v : g.data()) v = static_cast<float>(base.normal() * cfg.base_sigma);

  Rng weather(sub_seed(cfg.seed, "synth/weather/" + img.id));
  std::vector<double> w(colour_dims);
  for (auto& x : w) x = weather.normal() * cfg.weather_sigma;

  const double years = static_cast<double>(img.date - c.images.front().date) / 365.25;
  const double ux = std::cos(c.drift_angle);
  const double uy = std::sin(c.drift_angle);
  const double drift = cfg.drift_rate * years;

  Rng noise(sub_seed(cfg.seed, "synth/noise/" + img.id));
  for (std::size_t r = 0; r < cfg.grid_h; ++r) {
    for (std::size_t col = 0; col < cfg.grid_w; ++col) {
      auto cell = g.at(col, r);
      for (std::size_t k = 0; k < colour_dims; ++k) cell[k] += static_cast<float>(w[k]);
      cell[colour_dims] += static_cast<float>(drift * ux);
      cell[colour_dims + 1] += static_cast<float>(drift * uy);
      for (std::size_t k = 0; k < f; ++k) cell[k] += static_cast<float>(noise.normal() * cfg.noise_sigma);
    }
  }

  auto inject = [&](std::size_t col, std::size_t row, detect::WindowSize win, double mag) {
    for (const auto& [cc, rr] : window_cells(cfg, col, row, win)) {
      auto cell = g.at(cc, rr);
      cell[colour_dims] += static_cast<float>(mag * ux);
      cell[colour_dims + 1] += static_cast<float>(mag * uy);
    }
  };
  if (c.large_change && image_index > c.large_after) inject(c.large_col, c.large_row, cfg.change_window, cfg.change_magnitude);
  if (c.small_change && image_index > c.small_after) inject(c.small_col, c.small_row, cfg.small_window, cfg.small_magnitude);
  return g;
}

raster::Panorama render_raster(const SynthConfig& cfg, const ClusterTruth& c, std::size_t image_index,
                               std::size_t patch_px) {
  const auto feats = render_features(cfg, c, image_index);
  const std::size_t colour_dims = 2 * cfg.channels;
  raster::Panorama img(cfg.grid_w * patch_px, cfg.grid_h * patch_px, cfg.channels);
  auto clamp8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
  for (std::size_t r = 0; r < cfg.grid_h; ++r) {
    for (std::size_t col = 0; col < cfg.grid_w; ++col) {
      const auto cell = feats.at(col, r);
      const double ah = std::clamp(8.0 + 6.0 * cell[colour_dims], 0.0, 40.0);
      const double av = std::clamp(8.0 + 6.0 * cell[colour_dims + 1], 0.0, 40.0);
      for (std::size_t y = 0; y < patch_px; ++y) {
        for (std::size_t x = 0; x < patch_px; ++x) {
          const double tex = ((x % 2) ? ah : -ah) + ((y % 2) ? av : -av);
          for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
            const double mean = 128.0 + 30.0 * cell[ch];
            const double spread = 1.0 + 0.5 * std::fabs(cell[cfg.channels + ch]);
            img.at(col * patch_px + x, r * patch_px + y, ch) = clamp8(mean + spread * tex);
          }
        }
      }
    }
  }
  return img;
}

SynthGridSource::SynthGridSource(const City& city) : city_(city) {
  for (std::size_t c = 0; c < city.truth.clusters.size(); ++c) {
    const auto& imgs = city.truth.clusters[c].images;
    for (std::size_t i = 0; i < imgs.size(); ++i) where_[imgs[i].id] = {c, i};
  }
}

std::optional<model::TokenGrid> SynthGridSource::load(const std::string& image_id) const {
  const auto it = where_.find(image_id);
  if (it == where_.end()) return std::nullopt;
  return model::as_token_grid(render_features(city_.config, city_.truth.clusters[it->second.first], it->second.second));
}

namespace {

json window_json(bool present, std::size_t after, std::size_t col, std::size_t row, detect::WindowSize w) {
  if (!present) return nullptr;
  return json{{"after", after}, {"origin", {col, row}}, {"window", {w.w, w.h}}};
}

}  // namespace

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  json regions = json::array();
  for (const auto& r : truth.regions) {
    regions.push_back({{"region_id", r.region_id},
                       {"area_id", r.area_id},
                       {"indicator", r.indicator},
                       {"large_prob", r.large_prob},
                       {"small_prob", r.small_prob}});
  }
  json clusters = json::array();
  for (const auto& c : truth.clusters) {
    json images = json::array();
    for (const auto& i : c.images) images.push_back({{"id", i.id}, {"date", i.date.iso()}, {"heading", i.heading}});
    clusters.push_back({{"cluster_id", c.cluster_id},
                        {"region_id", c.region_id},
                        {"area_id", c.area_id},
                        {"center", {c.center.lat, c.center.lon}},
                        {"drift_angle", c.drift_angle},
                        {"images", images},
                        {"large", window_json(c.large_change, c.large_after, c.large_col, c.large_row, truth.large_window)},
                        {"small", window_json(c.small_change, c.small_after, c.small_col, c.small_row, truth.small_window)}});
  }
  detail::write_json(path, json{{"large_sign", truth.large_sign},
                                {"small_sign", truth.small_sign},
                                {"regions", regions},
                                {"clusters", clusters}});
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  GroundTruth t;
  try {
    t.large_sign = j.at("large_sign").get<int>();
    t.small_sign = j.at("small_sign").get<int>();
    auto window_of = [&](const char* key, detect::WindowSize fallback) {
      for (const auto& c : j.at("clusters")) {
        if (!c.at(key).is_null()) {
          return detect::WindowSize{c.at(key).at("window").at(0).get<std::size_t>(),
                                    c.at(key).at("window").at(1).get<std::size_t>()};
        }
      }
      return fallback;
    };
    t.large_window = window_of("large", t.large_window);
    t.small_window = window_of("small", t.small_window);
    for (const auto& r : j.at("regions")) {
      t.regions.push_back({r.at("region_id").get<std::string>(), r.at("area_id").get<std::string>(),
                           r.at("indicator").get<double>(), r.at("large_prob").get<double>(),
                           r.at("small_prob").get<double>()});
    }
    for (const auto& cj : j.at("clusters")) {
      ClusterTruth c;
      c.cluster_id = cj.at("cluster_id").get<std::string>();
      c.region_id = cj.at("region_id").get<std::string>();
      c.area_id = cj.at("area_id").get<std::string>();
      c.center = {cj.at("center").at(0).get<double>(), cj.at("center").at(1).get<double>()};
      c.drift_angle = cj.at("drift_angle").get<double>();
      for (const auto& ij : cj.at("images")) {
        c.images.push_back({ij.at("id").get<std::string>(), Date::parse(ij.at("date").get<std::string>()),
                            ij.at("heading").get<double>()});
      }
      if (const auto& l = cj.at("large"); !l.is_null()) {
        c.large_change = true;
        c.large_after = l.at("after").get<std::size_t>();
        c.large_col = l.at("origin").at(0).get<std::size_t>();
        c.large_row = l.at("origin").at(1).get<std::size_t>();
      }
      if (const auto& s = cj.at("small"); !s.is_null()) {
        c.small_change = true;
        c.small_after = s.at("after").get<std::size_t>();
        c.small_col = s.at("origin").at(0).get<std::size_t>();
        c.small_row = s.at("origin").at(1).get<std::size_t>();
      }
      t.clusters.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return t;
}

std::vector<geo::Cluster> truth_clusters(const City& city) {
  std::map<std::string, const geo::PanoramaMeta*> by_id;
  for (const auto& p : city.panoramas) by_id[p.id] = &p;
  std::vector<geo::Cluster> out;
  for (const auto& c : city.truth.clusters) {
    geo::Cluster g;
    g.cluster_id = c.cluster_id;
    g.center = c.center;
    g.region_id = c.region_id;
    g.area_id = c.area_id;
    for (const auto& img : c.images) {
      geo::PanoramaMeta m = *by_id.at(img.id);
      m.region_id = c.region_id;
      m.area_id = c.area_id;
      g.members.push_back(std::move(m));
    }
    out.push_back(std::move(g));
  }
  return out;
}

void write_city(const City& city, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  geo::write_panoramas_csv(dir / "panoramas.csv", city.panoramas);
  geo::write_regions(dir / "regions.json", city.regions);
  if (!city.water.empty()) geo::write_regions(dir / "water.json", city.water);
  write_ground_truth(dir / "ground_truth.json", city.truth);
  analytics::write_indicator_csv(dir / "indicator.csv", city.indicator);
  train::write_labels_csv(dir / "labels.csv", city.pairs);
  for (const auto& c : city.truth.clusters) {
    for (std::size_t i = 0; i < c.images.size(); ++i) {
      if (city.config.rasters) {
        raster::write_png(dir / "images" / (c.images[i].id + ".png"), render_raster(city.config, c, i));
      } else {
        model::save_token_grid(model::as_token_grid(render_features(city.config, c, i)),
                               dir / "images" / (c.images[i].id + ".tgrd"));
      }
    }
  }
}

}  // namespace emplace::synth
