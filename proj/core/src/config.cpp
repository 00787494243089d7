#include "emplace/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "emplace/error.hpp"
#include "emplace/rng.hpp"

namespace emplace::config {

namespace {

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key " + key + ": '" + value + "' is not " + expected);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out)) bad(key, v, "a finite number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad(key, v, "a non-negative integer");
  return out;
}

std::int32_t to_i32(const std::string& key, const std::string& v) {
  std::int32_t out = 0;
  const auto s = trim(v);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) bad(key, v, "an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(key, v, "a boolean");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

/// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string boolean(bool b) { return b ? "true" : "false"; }

std::vector<raster::MaskRect> to_masks(const std::string& key, const std::string& v) {
  std::vector<raster::MaskRect> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) bad(key, v, "a list of rel_col:width_px");
    out.push_back({to_double(key, parts[0]), static_cast<std::size_t>(to_u64(key, parts[1]))});
  }
  return out;
}

std::string masks_string(const std::vector<raster::MaskRect>& masks) {
  if (masks.empty()) return "none";
  std::string s;
  for (const auto& m : masks) s += (s.empty() ? "" : ",") + num(m.center_rel_col) + ":" + std::to_string(m.width_px);
  return s;
}

struct Binding {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define EMPLACE_NUM(KEY, FIELD)                                                                      \
  Binding {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); },               \
        [](const PipelineConfig& c) { return num(c.FIELD); }                                         \
  }
#define EMPLACE_SIZE(KEY, FIELD)                                                                     \
  Binding {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = static_cast<std::size_t>(to_u64(KEY, v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.FIELD); }                              \
  }
#define EMPLACE_I32(KEY, FIELD)                                                                      \
  Binding {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = to_i32(KEY, v); },                 \
        [](const PipelineConfig& c) { return std::to_string(c.FIELD); }                              \
  }
#define EMPLACE_BOOL(KEY, FIELD)                                                                     \
  Binding {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); },                 \
        [](const PipelineConfig& c) { return boolean(c.FIELD); }                                     \
  }
#define EMPLACE_WINDOW(KEY, FIELD)                                                                   \
  Binding {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_window(v); },                 \
        [](const PipelineConfig& c) { return window_string(c.FIELD); }                               \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      {"paths.data_dir", [](PipelineConfig& c, const std::string& v) { c.data_dir = trim(v); },
       [](const PipelineConfig& c) { return c.data_dir.string(); }},
      {"paths.output_dir", [](PipelineConfig& c, const std::string& v) { c.output_dir = trim(v); },
       [](const PipelineConfig& c) { return c.output_dir.string(); }},
      {"general.seed", [](PipelineConfig& c, const std::string& v) { c.seed = to_u64("general.seed", v); },
       [](const PipelineConfig& c) { return std::to_string(c.seed); }},

      EMPLACE_NUM("geo.lat_min", bbox.lat_min),
      EMPLACE_NUM("geo.lat_max", bbox.lat_max),
      EMPLACE_NUM("geo.lon_min", bbox.lon_min),
      EMPLACE_NUM("geo.lon_max", bbox.lon_max),
      EMPLACE_NUM("geo.eps_m", clustering.eps_m),
      EMPLACE_SIZE("geo.min_pts", clustering.min_pts),
      EMPLACE_NUM("geo.dilation_m", dilation_m),
      EMPLACE_NUM("geo.radius_m", clustering.curation.radius_m),
      EMPLACE_NUM("geo.height_tol_m", clustering.curation.height_tol_m),
      EMPLACE_SIZE("geo.min_members", clustering.curation.min_members),

      EMPLACE_SIZE("raster.crop_px", raster.preprocess.crop_bottom_px),
      EMPLACE_BOOL("raster.rotate_by_heading", raster.preprocess.rotate_by_heading),
      {"raster.masks", [](PipelineConfig& c, const std::string& v) { c.raster.preprocess.masks = to_masks("raster.masks", v); },
       [](const PipelineConfig& c) { return masks_string(c.raster.preprocess.masks); }},
      EMPLACE_SIZE("raster.out_w", raster.out_w),
      EMPLACE_SIZE("raster.out_h", raster.out_h),
      EMPLACE_SIZE("raster.patch_px", raster.patch_px),

      {"train.si", [](PipelineConfig& c, const std::string& v) { c.train.si = trim(v); },
       [](const PipelineConfig& c) { return c.train.si; }},
      EMPLACE_SIZE("train.batch_size", train.batch_size),
      EMPLACE_NUM("train.lr", train.lr),
      EMPLACE_NUM("train.clip", train.clip),
      EMPLACE_NUM("train.beta1", train.beta1),
      EMPLACE_NUM("train.beta2", train.beta2),
      EMPLACE_NUM("train.eps", train.eps),
      EMPLACE_SIZE("train.patience", train.patience_epochs),
      EMPLACE_SIZE("train.max_epochs", train.max_epochs),
      {"train.margin", [](PipelineConfig& c, const std::string& v) {
         const auto s = trim(v);
         if (s == "adaptive") c.train.margin.mode = optim::MarginMode::adaptive;
         else if (s == "fixed") c.train.margin.mode = optim::MarginMode::fixed;
         else bad("train.margin", v, "adaptive or fixed");
       },
       [](const PipelineConfig& c) { return std::string(c.train.margin.mode == optim::MarginMode::adaptive ? "adaptive" : "fixed"); }},
      EMPLACE_NUM("train.margin_scale", train.margin.scale),
      EMPLACE_NUM("train.margin_period_days", train.margin.period),
      EMPLACE_NUM("train.margin_fixed", train.margin.fixed_alpha),
      EMPLACE_BOOL("train.cut_and_flip", train.cut_and_flip),
      EMPLACE_SIZE("train.encoder_dim", encoder_dim),
      {"train.encoder", [](PipelineConfig& c, const std::string& v) { c.encoder = trim(v); },
       [](const PipelineConfig& c) { return c.encoder; }},

      EMPLACE_NUM("finetune.lr", finetune.lr),
      EMPLACE_SIZE("finetune.batch_size", finetune.batch_size),
      EMPLACE_NUM("finetune.clip", finetune.clip),
      EMPLACE_SIZE("finetune.patience", finetune.patience_epochs),
      EMPLACE_SIZE("finetune.max_epochs", finetune.max_epochs),
      {"finetune.mode", [](PipelineConfig& c, const std::string& v) {
         const auto s = trim(v);
         if (s == "head_only") c.finetune.mode = train::FinetuneMode::head_only;
         else if (s == "full") c.finetune.mode = train::FinetuneMode::full;
         else bad("finetune.mode", v, "head_only or full");
       },
       [](const PipelineConfig& c) { return std::string(c.finetune.mode == train::FinetuneMode::full ? "full" : "head_only"); }},

      EMPLACE_WINDOW("detect.window", detector.window),
      EMPLACE_NUM("detect.threshold", detector.threshold),
      EMPLACE_WINDOW("detect.small_window", detector.small_window),
      EMPLACE_NUM("detect.small_ratio", detector.small_ratio),
      EMPLACE_BOOL("detect.wrap", detector.wrap_horizontal),
      {"detect.calibration_windows", [](PipelineConfig& c, const std::string& v) {
         c.calibration_windows.clear();
         for (const auto& w : split(v, ',')) c.calibration_windows.push_back(parse_window(w));
       },
       [](const PipelineConfig& c) {
         std::string s;
         for (const auto& w : c.calibration_windows) s += (s.empty() ? "" : ",") + window_string(w);
         return s;
       }},
      EMPLACE_SIZE("detect.calibration_runs", calibration_runs),
      {"detect.kind", [](PipelineConfig& c, const std::string& v) { c.detect_kind = trim(v); },
       [](const PipelineConfig& c) { return c.detect_kind; }},

      EMPLACE_SIZE("synth.n_regions", synth.n_regions),
      EMPLACE_SIZE("synth.n_areas", synth.n_areas),
      EMPLACE_SIZE("synth.clusters_per_region", synth.clusters_per_region),
      EMPLACE_NUM("synth.extra_images_mean", synth.extra_images_mean),
      EMPLACE_SIZE("synth.max_images", synth.max_images),
      {"synth.start", [](PipelineConfig& c, const std::string& v) { c.synth.start = Date::parse(trim(v)); },
       [](const PipelineConfig& c) { return c.synth.start.iso(); }},
      {"synth.end", [](PipelineConfig& c, const std::string& v) { c.synth.end = Date::parse(trim(v)); },
       [](const PipelineConfig& c) { return c.synth.end.iso(); }},
      EMPLACE_NUM("synth.revisit_prob", synth.revisit_prob),
      EMPLACE_I32("synth.revisit_min_days", synth.revisit_min_days),
      EMPLACE_I32("synth.revisit_max_days", synth.revisit_max_days),
      EMPLACE_I32("synth.gap_min_days", synth.gap_min_days),
      EMPLACE_I32("synth.gap_max_days", synth.gap_max_days),
      EMPLACE_NUM("synth.base_sigma", synth.base_sigma),
      EMPLACE_NUM("synth.weather_sigma", synth.weather_sigma),
      EMPLACE_NUM("synth.noise_sigma", synth.noise_sigma),
      EMPLACE_NUM("synth.drift_rate", synth.drift_rate),
      EMPLACE_NUM("synth.large_prob_max", synth.large_prob_max),
      EMPLACE_NUM("synth.large_prob_min", synth.large_prob_min),
      EMPLACE_NUM("synth.small_prob_min", synth.small_prob_min),
      EMPLACE_NUM("synth.small_prob_max", synth.small_prob_max),
      EMPLACE_NUM("synth.change_magnitude", synth.change_magnitude),
      EMPLACE_NUM("synth.small_magnitude", synth.small_magnitude),
      EMPLACE_NUM("synth.region_size_m", synth.region_size_m),
      EMPLACE_NUM("synth.cluster_spacing_m", synth.cluster_spacing_m),
      EMPLACE_BOOL("synth.water", synth.water),
      EMPLACE_BOOL("synth.rasters", synth.rasters),
  };
  return table;
}

#undef EMPLACE_NUM
#undef EMPLACE_SIZE
#undef EMPLACE_I32
#undef EMPLACE_BOOL
#undef EMPLACE_WINDOW

void set_si(PipelineConfig& c, const std::string& key, const std::string& value) {
  const std::string name = key.substr(3);
  const auto parts = split(value, ',');
  if (name.empty() || parts.size() < 3 || parts.size() > 4) bad(key, value, "ap_min,ap_max,an_min[,an_max]");
  mining::SIConfig si{name, to_i32(key, parts[0]), to_i32(key, parts[1]), to_i32(key, parts[2]), std::nullopt};
  if (parts.size() == 4) si.an_max = to_i32(key, parts[3]);
  si.validate();
  for (auto& existing : c.si_table) {
    if (existing.name == name) {
      existing = si;
      return;
    }
  }
  c.si_table.push_back(si);
}

}  // namespace

detect::WindowSize parse_window(const std::string& s) {
  const auto t = trim(s);
  const auto x = t.find('x');
  if (x == std::string::npos) bad("window", s, "WxH");
  return {static_cast<std::size_t>(to_u64("window", t.substr(0, x))),
          static_cast<std::size_t>(to_u64("window", t.substr(x + 1)))};
}

std::string window_string(detect::WindowSize w) { return std::to_string(w.w) + "x" + std::to_string(w.h); }

void PipelineConfig::validate() const {
  if (bbox.lat_min > bbox.lat_max || bbox.lon_min > bbox.lon_max) throw ConfigError("bounding box is inverted");
  if (!(clustering.eps_m > 0.0) || clustering.min_pts == 0) throw ConfigError("DBSCAN needs eps_m > 0 and min_pts >= 1");
  if (!(clustering.curation.radius_m > 0.0) || !(clustering.curation.height_tol_m >= 0.0)) {
    throw ConfigError("curation radius must be positive and height tolerance non-negative");
  }
  if (!(dilation_m >= 0.0)) throw ConfigError("dilation_m must be non-negative");
  if (raster.patch_px == 0 || raster.out_w % raster.patch_px != 0 || raster.out_h % raster.patch_px != 0) {
    throw ConfigError("raster output size must be a multiple of patch_px");
  }
  for (const auto& si : si_table) si.validate();
  mining::find_si(train.si, si_table);
  train.validate();
  finetune.validate();
  if (encoder_dim == 0) throw ConfigError("encoder_dim must be positive");
  if (encoder != "toy" && encoder != "passthrough") throw ConfigError("train.encoder must be toy or passthrough");
  detector.validate(raster.out_w / raster.patch_px, raster.out_h / raster.patch_px);
  if (calibration_windows.empty()) throw ConfigError("detect.calibration_windows is empty");
  if (calibration_runs == 0) throw ConfigError("detect.calibration_runs must be >= 1");
  if (detect_kind != "large" && detect_kind != "small" && detect_kind != "both") {
    throw ConfigError("detect.kind must be large, small or both");
  }
  synth.validate();
}

KeyValues read_ini(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.message());
  }
  KeyValues kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' is outside a section");
    for (const auto& [key, value] : body) kv[section + "." + key] = value.get_value<std::string>();
  }
  return kv;
}

PipelineConfig from_key_values(const KeyValues& kv) {
  PipelineConfig c;
  std::map<std::string, const Binding*> index;
  for (const auto& b : bindings()) index[b.key] = &b;
  for (const auto& [key, value] : kv) {
    if (key.rfind("si.", 0) == 0) {
      set_si(c, key, value);
      continue;
    }
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("unknown config key " + key);
    it->second->set(c, value);
  }
  c.synth.seed = sub_seed(c.seed, "synth");
  c.train.seed = c.seed;
  c.finetune.seed = sub_seed(c.seed, "finetune");
  c.synth.grid_w = c.raster.out_w / std::max<std::size_t>(c.raster.patch_px, 1);
  c.synth.grid_h = c.raster.out_h / std::max<std::size_t>(c.raster.patch_px, 1);
  c.synth.change_window = c.detector.window;
  c.synth.small_window = c.detector.small_window;
  return c;
}

std::string default_ini() {
  const PipelineConfig c;
  std::ostringstream out;
  std::string section;
  for (const auto& b : bindings()) {
    const auto dot = b.key.find('.');
    const auto s = b.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << b.key.substr(dot + 1) << " = " << b.get(c) << "\n";
  }
  out << "\n[si]\n";
  for (const auto& si : c.si_table) {
    out << si.name << " = " << si.ap_min << "," << si.ap_max << "," << si.an_min;
    if (si.an_max) out << "," << *si.an_max;
    out << "\n";
  }
  return out.str();
}

}  // namespace emplace::config
