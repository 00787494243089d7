#include "emplace/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <set>

#include "emplace/analytics.hpp"
#include "emplace/error.hpp"
#include "emplace/geo_io.hpp"
#include "emplace/rng.hpp"
#include "json_util.hpp"

namespace emplace::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kDefaultTestSi = {"SI-1", "SI-2", "SI-3", "SI-4"};

fs::path out_path(const config::PipelineConfig& cfg, const std::string& name) { return cfg.output_dir / name; }

void require(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing input " + p.string());
}

std::vector<geo::Cluster> load_clusters(const config::PipelineConfig& cfg) {
  const auto p = out_path(cfg, "clusters.jsonl");
  require(p);
  return geo::read_clusters_jsonl(p);
}

mining::SplitAssignment load_split(const config::PipelineConfig& cfg) {
  const auto p = out_path(cfg, "split.json");
  require(p);
  return mining::read_split(p);
}

/// Grids under data_dir/images, with headings taken from cluster members.
struct Sources {
  std::unique_ptr<model::DirectoryGridSource> dir;
  std::unique_ptr<model::CachedGridSource> cached;
  const model::GridSource& get() const { return *cached; }
};

Sources open_sources(const config::PipelineConfig& cfg, const std::vector<geo::Cluster>& clusters) {
  Sources s;
  s.dir = std::make_unique<model::DirectoryGridSource>(cfg.data_dir / "images", cfg.raster);
  std::map<std::string, double> headings;
  for (const auto& c : clusters) {
    for (const auto& m : c.members) headings[m.id] = m.heading;
  }
  s.dir->set_headings(std::move(headings));
  s.cached = std::make_unique<model::CachedGridSource>(*s.dir, 4096);
  return s;
}

std::size_t feature_dim_of(const model::GridSource& src, const std::vector<geo::Cluster>& clusters) {
  for (const auto& c : clusters) {
    for (const auto& m : c.members) {
      if (auto g = src.load(m.id)) return g->dim();
    }
  }
  throw DataError("no image grid could be loaded from the data directory");
}

model::ToyEncoder initial_encoder(const config::PipelineConfig& cfg, std::size_t f) {
  return model::ToyEncoder::random(cfg.encoder_dim, f, sub_seed(cfg.seed, "init"));
}

/// Trained toy encoder for the configured tag, or the identity when grids
/// already hold final tokens.
std::unique_ptr<model::Encoder> trained_encoder(const config::PipelineConfig& cfg) {
  if (cfg.encoder == "passthrough") return std::make_unique<model::PassthroughEncoder>();
  const auto p = out_path(cfg, "model_" + artifact_tag(cfg) + ".empw");
  require(p);
  return std::make_unique<model::ToyEncoder>(model::load_encoder(p));
}

std::vector<train::DiscretePair> load_pairs(const config::PipelineConfig& cfg) {
  const auto p = cfg.data_dir / "labels.csv";
  require(p);
  return train::read_labels_csv(p);
}

json metrics_json(const train::Metrics& m) {
  return {{"acc", m.acc}, {"prec", m.prec}, {"rec", m.rec}, {"f1", m.f1},
          {"prec_undefined", m.prec_undefined}, {"rec_undefined", m.rec_undefined},
          {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
}

json detector_summary(const detect::DetectorConfig& d) {
  return {{"window", config::window_string(d.window)}, {"threshold", d.threshold},
          {"small_window", config::window_string(d.small_window)}, {"small_ratio", d.small_ratio},
          {"wrap", d.wrap_horizontal}};
}

// ---------------------------------------------------------------- commands

void cmd_synth(const config::PipelineConfig& cfg, std::ostream& log) {
  const auto city = synth::generate(cfg.synth);
  synth::write_city(city, cfg.data_dir);
  log << "synth: " << city.truth.clusters.size() << " clusters, " << city.panoramas.size()
      << " panoramas -> " << cfg.data_dir.string() << "\n";
}

void cmd_cluster(const config::PipelineConfig& cfg, std::ostream& log) {
  fs::path dump = cfg.data_dir / "panoramas.csv";
  if (!fs::exists(dump) && fs::exists(cfg.data_dir / "panoramas.jsonl")) dump = cfg.data_dir / "panoramas.jsonl";
  require(dump);
  const auto points = geo::open_panorama_dump(dump, cfg.bbox)->fetch();
  const auto regions_path = cfg.data_dir / "regions.json";
  require(regions_path);
  const auto regions = geo::read_regions(regions_path, cfg.dilation_m);
  std::optional<std::vector<geo::RegionPolygon>> water;
  const auto water_path = cfg.data_dir / "water.json";
  if (fs::exists(water_path)) water = geo::read_water_mask(water_path);

  const auto report = geo::build_clusters(points, regions, water ? &*water : nullptr, cfg.clustering);
  if (report.water_filter_skipped) {
    log << "warning kind=water_filter_skipped msg=\"no water.json in data dir\"\n";
  }
  fs::create_directories(cfg.output_dir);
  geo::write_clusters_jsonl(out_path(cfg, "clusters.jsonl"), report.clusters);
  std::size_t images = 0;
  for (const auto& c : report.clusters) images += c.members.size();
  detail::write_json(out_path(cfg, "cluster_report.json"),
                     {{"panoramas", points.size()},
                      {"clusters", report.clusters.size()},
                      {"clustered_images", images},
                      {"candidates", report.candidates},
                      {"dropped_water", report.dropped_water},
                      {"dropped_height", report.dropped_height},
                      {"dropped_small", report.dropped_small},
                      {"dropped_duplicate", report.dropped_duplicate},
                      {"water_filter_skipped", report.water_filter_skipped}});
  log << "cluster: " << report.clusters.size() << " clusters from " << points.size() << " panoramas\n";
}

void cmd_mine(const config::PipelineConfig& cfg, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto split = mining::split_by_cluster(clusters, sub_seed(cfg.seed, "split"));
  const auto& si = mining::find_si(cfg.train.si, cfg.si_table);
  const auto triplets = mining::mine(clusters, si);
  mining::write_split(out_path(cfg, "split.json"), split);
  mining::write_triplets_jsonl(out_path(cfg, "triplets.jsonl"), triplets, &split);
  json counts = json::object();
  for (auto s : {mining::Split::train, mining::Split::val, mining::Split::test}) {
    counts[mining::split_name(s)] = {{"clusters", split.count(s)},
                                     {"triplets", mining::select_split(triplets, split, s).size()}};
  }
  json per_si = json::object();
  for (const auto& other : cfg.si_table) per_si[other.name] = mining::mine(clusters, other).size();
  std::size_t total = 0;
  for (const auto& c : clusters) total += mining::enumerate_triplets(c).size();
  std::int32_t interval = 0;
  try {
    interval = mining::sampling_interval(clusters);
  } catch (const DataError&) {
  }
  detail::write_json(out_path(cfg, "mine_report.json"), {{"si", si.name},
                                                          {"triplets", triplets.size()},
                                                          {"unfiltered_triplets", total},
                                                          {"triplets_per_si", per_si},
                                                          {"sampling_interval_days", interval},
                                                          {"splits", counts}});
  log << "mine: " << triplets.size() << " " << si.name << " triplets (" << total << " before filtering)\n";
}

void cmd_train(const config::PipelineConfig& cfg, std::ostream& log) {
  if (cfg.encoder != "toy") throw ConfigError("train requires train.encoder = toy");
  const auto clusters = load_clusters(cfg);
  const auto split = load_split(cfg);
  const auto triplets = mining::mine(clusters, mining::find_si(cfg.train.si, cfg.si_table));
  const auto train_set = mining::select_split(triplets, split, mining::Split::train);
  const auto val_set = mining::select_split(triplets, split, mining::Split::val);
  if (train_set.empty()) throw DataError("no training triplets for " + cfg.train.si);
  if (val_set.empty()) throw DataError("no validation triplets for " + cfg.train.si);
  const auto src = open_sources(cfg, clusters);
  const auto init = initial_encoder(cfg, feature_dim_of(src.get(), clusters));

  const std::string tag = artifact_tag(cfg);
  const auto log_path = out_path(cfg, "epochs_" + tag + ".jsonl");
  fs::remove(log_path);
  const auto result = train::early_stop_train(init, cfg.train, train_set, val_set, src.get(), [&](const train::EpochStats& s) {
    train::append_epoch_log(log_path, s);
    log << "train[" << tag << "] epoch " << s.epoch << " loss " << s.mean_loss << " active " << s.active_frac
        << " val " << s.val_acc << "\n";
  });
  model::save_encoder(result.best, out_path(cfg, "model_" + tag + ".empw"));
  detail::write_json(out_path(cfg, "train_" + tag + ".json"),
                     {{"tag", tag},
                      {"si", cfg.train.si},
                      {"margin", cfg.train.margin.mode == optim::MarginMode::adaptive ? "adaptive" : "fixed"},
                      {"cut_and_flip", cfg.train.cut_and_flip},
                      {"train_triplets", train_set.size()},
                      {"val_triplets", val_set.size()},
                      {"epochs_run", result.history.size()},
                      {"best_epoch", result.best_epoch},
                      {"best_val_acc", result.best_val_acc}});
}

/// Accuracy of `enc` on each test setup's test-split triplets, the pooled
/// "All" column and the per-area breakdown.
json order_block(const model::Encoder& enc, const std::vector<geo::Cluster>& clusters,
                 const mining::SplitAssignment& split, const config::PipelineConfig& cfg,
                 const std::vector<std::string>& test_si, const model::GridSource& src) {
  std::map<std::string, std::string> area_of;
  for (const auto& c : clusters) area_of[c.cluster_id] = c.area_id;

  std::map<std::string, std::vector<mining::Triplet>> sets;
  std::vector<mining::Triplet> pooled;
  for (const auto& name : test_si) {
    sets[name] = mining::select_split(mining::mine(clusters, mining::find_si(name, cfg.si_table)), split,
                                      mining::Split::test);
    pooled.insert(pooled.end(), sets[name].begin(), sets[name].end());
  }
  const auto cls = train::encode_cls(enc, pooled, src);
  const train::ClsLookup lookup = [&](const std::string& id) -> const std::vector<double>* {
    const auto it = cls.find(id);
    return it == cls.end() ? nullptr : &it->second;
  };
  auto score = [&](const std::vector<mining::Triplet>& ts) -> json {
    if (ts.empty()) return {{"accuracy", nullptr}, {"n", 0}};
    try {
      const auto r = train::order_prediction(ts, lookup);
      return {{"accuracy", r.accuracy}, {"n", r.total}, {"skipped", r.skipped}};
    } catch (const DataError&) {
      return {{"accuracy", nullptr}, {"n", 0}, {"skipped", ts.size()}};
    }
  };
  auto areas = [&](const std::vector<mining::Triplet>& ts) -> json {
    std::map<std::string, std::vector<mining::Triplet>> by_area;
    for (const auto& t : ts) by_area[area_of[t.cluster_id]].push_back(t);
    json per = json::object();
    std::map<std::string, double> accs;
    for (const auto& [area, group] : by_area) {
      const auto s = score(group);
      per[area] = s;
      if (!s["accuracy"].is_null()) accs[area] = s["accuracy"].get<double>();
    }
    json out{{"per_area", per}, {"sigma", nullptr}};
    if (accs.size() >= 2) out["sigma"] = analytics::bias_dispersion(accs);
    return out;
  };

  json columns = json::object();
  json bias = json::object();
  for (const auto& name : test_si) {
    columns[name] = score(sets[name]);
    bias[name] = areas(sets[name]);
  }
  columns["All"] = score(pooled);
  bias["All"] = areas(pooled);
  return {{"columns", columns}, {"bias", bias}};
}

void cmd_eval_order(const config::PipelineConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto split = load_split(cfg);
  const auto src = open_sources(cfg, clusters);
  const auto& test_si = opts.test_si.empty() ? kDefaultTestSi : opts.test_si;
  for (const auto& name : test_si) mining::find_si(name, cfg.si_table);

  const auto enc = trained_encoder(cfg);
  json doc{{"train_si", cfg.train.si}, {"tag", artifact_tag(cfg)}};
  doc["trained"] = order_block(*enc, clusters, split, cfg, test_si, src.get());
  if (cfg.encoder == "toy") {
    const auto init = initial_encoder(cfg, feature_dim_of(src.get(), clusters));
    doc["untrained"] = order_block(init, clusters, split, cfg, test_si, src.get());
  }
  detail::write_json(out_path(cfg, "order_" + artifact_tag(cfg) + ".json"), doc);
  log << "eval-order[" << artifact_tag(cfg) << "] All " << doc["trained"]["columns"]["All"]["accuracy"].dump() << "\n";
}

train::PairSplits pair_splits(const config::PipelineConfig& cfg) {
  return train::split_pairs(load_pairs(cfg), sub_seed(cfg.seed, "pairs"));
}

void cmd_finetune(const config::PipelineConfig& cfg, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto src = open_sources(cfg, clusters);
  const auto enc = trained_encoder(cfg);
  const auto splits = pair_splits(cfg);
  std::size_t d = 0;
  for (const auto& p : splits.train) {
    if (auto g = src.get().load(p.img_a)) {
      d = enc->encode(*g).cls.size();
      break;
    }
  }
  if (d == 0) throw DataError("no fine-tuning pair resolves to an image grid");
  const auto result = train::finetune_discrete(*enc, train::DiscreteHead(d), splits.train, splits.val, src.get(), cfg.finetune);
  const std::string tag = artifact_tag(cfg);
  train::save_head(result.head, out_path(cfg, "head_" + tag + ".empw"));
  if (result.encoder) model::save_encoder(*result.encoder, out_path(cfg, "model_" + tag + "_finetuned.empw"));
  json hist = json::array();
  for (const auto& e : result.history) hist.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"val_acc", e.val_acc}});
  detail::write_json(out_path(cfg, "finetune_" + tag + ".json"),
                     {{"tag", tag},
                      {"mode", cfg.finetune.mode == train::FinetuneMode::full ? "full" : "head_only"},
                      {"pairs", {{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()}}},
                      {"best_epoch", result.best_epoch},
                      {"val", metrics_json(result.val)},
                      {"history", hist}});
  log << "finetune[" << tag << "] best epoch " << result.best_epoch << " val acc " << result.val.acc << "\n";
}

std::vector<double> max_scores(const model::Encoder& enc, const std::vector<train::DiscretePair>& pairs,
                               const model::GridSource& src, detect::WindowSize win, bool wrap,
                               std::vector<bool>& labels) {
  std::vector<double> scores;
  std::map<std::string, model::TokenGrid> cache;
  auto tokens = [&](const std::string& id) -> const model::TokenGrid* {
    if (auto it = cache.find(id); it != cache.end()) return &it->second;
    auto g = src.load(id);
    if (!g) return nullptr;
    return &cache.emplace(id, enc.encode(*g)).first->second;
  };
  for (const auto& p : pairs) {
    const auto* a = tokens(p.img_a);
    const auto* b = tokens(p.img_b);
    if (!a || !b) continue;
    const auto m = detect::max_window(detect::heatmap(*a, *b), win, wrap);
    if (!m) throw ConfigError("detector window does not fit the token grid");
    scores.push_back(m->mean);
    labels.push_back(p.change);
  }
  return scores;
}

void cmd_calibrate(const config::PipelineConfig& cfg, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto src = open_sources(cfg, clusters);
  const auto enc = trained_encoder(cfg);
  const auto val = pair_splits(cfg).val;

  std::vector<std::vector<double>> scores;
  std::vector<bool> labels;
  for (const auto& win : cfg.calibration_windows) {
    labels.clear();
    scores.push_back(max_scores(*enc, val, src.get(), win, cfg.detector.wrap_horizontal, labels));
  }
  if (labels.empty()) throw DataError("no validation pair resolves to image grids");

  std::vector<detect::CalibrationResult> runs;
  json runs_json = json::array();
  for (std::size_t r = 0; r < cfg.calibration_runs; ++r) {
    // Run 0 uses the validation set as is; later runs bootstrap-resample it.
    std::vector<std::size_t> pick(labels.size());
    Rng rng(sub_seed(cfg.seed, "calibrate/" + std::to_string(r)));
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = r == 0 ? i : static_cast<std::size_t>(rng.index(pick.size()));
    std::optional<detect::CalibrationResult> best;
    for (std::size_t w = 0; w < cfg.calibration_windows.size(); ++w) {
      std::vector<double> s;
      std::vector<bool> l;
      for (auto i : pick) {
        s.push_back(scores[w][i]);
        l.push_back(labels[i]);
      }
      auto base = cfg.detector;
      base.window = cfg.calibration_windows[w];
      auto res = detect::calibrate_scores(s, l, base);
      if (!best || res.accuracy > best->accuracy ||
          (res.accuracy == best->accuracy && res.config.threshold > best->config.threshold)) {
        best = res;
      }
    }
    runs.push_back(*best);
    runs_json.push_back({{"run", r}, {"window", config::window_string(best->config.window)},
                         {"threshold", best->config.threshold}, {"accuracy", best->accuracy}});
  }
  const auto chosen = detect::max_threshold(runs);
  const std::string tag = artifact_tag(cfg);
  detect::write_detector_config(out_path(cfg, "detector_" + tag + ".json"), chosen.config);
  detail::write_json(out_path(cfg, "calibration_" + tag + ".json"),
                     {{"tag", tag}, {"val_pairs", labels.size()}, {"runs", runs_json},
                      {"selected", detector_summary(chosen.config)}});
  log << "calibrate[" << tag << "] threshold " << chosen.config.threshold << " window "
      << config::window_string(chosen.config.window) << "\n";
}

detect::DetectorConfig active_detector(const config::PipelineConfig& cfg, const CommandOptions& opts) {
  const auto p = out_path(cfg, "detector_" + artifact_tag(cfg) + ".json");
  if (!opts.threshold_override && fs::exists(p)) {
    auto d = detect::read_detector_config(p);
    d.small_window = cfg.detector.small_window;
    d.small_ratio = cfg.detector.small_ratio;
    d.wrap_horizontal = cfg.detector.wrap_horizontal;
    return d;
  }
  return cfg.detector;
}

void cmd_eval_discrete(const config::PipelineConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto src = open_sources(cfg, clusters);
  const auto enc = trained_encoder(cfg);
  const auto test = pair_splits(cfg).test;
  const std::string tag = artifact_tag(cfg);
  json doc{{"tag", tag}, {"test_pairs", test.size()}};

  const auto head_path = out_path(cfg, "head_" + tag + ".empw");
  if (fs::exists(head_path)) {
    const auto head = train::load_head(head_path);
    const auto pp = train::predict_pairs(*enc, head, test, src.get());
    doc["finetuned"] = metrics_json(train::eval_metrics(pp.preds, pp.labels));
  }
  if (fs::exists(out_path(cfg, "detector_" + tag + ".json"))) {
    const auto det = active_detector(cfg, opts);
    std::vector<bool> labels;
    const auto scores = max_scores(*enc, test, src.get(), det.window, det.wrap_horizontal, labels);
    std::vector<bool> preds;
    for (double s : scores) preds.push_back(s > det.threshold);
    doc["zero_shot"] = metrics_json(train::eval_metrics(preds, labels));
    doc["zero_shot"]["detector"] = detector_summary(det);
  }
  if (!doc.contains("finetuned") && !doc.contains("zero_shot")) {
    throw DataError("eval-discrete needs a fine-tuned head or a calibrated detector; run finetune or calibrate first");
  }
  detail::write_json(out_path(cfg, "discrete_" + tag + ".json"), doc);
  log << "eval-discrete[" << tag << "] written\n";
}

void cmd_detect(const config::PipelineConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto src = open_sources(cfg, clusters);
  const auto enc = trained_encoder(cfg);
  const auto det = active_detector(cfg, opts);
  const bool large = cfg.detect_kind != "small";
  const bool small = cfg.detect_kind != "large";
  const auto run = detect::run_detection(clusters, src.get(), *enc, det, large, small);
  detect::write_detections_jsonl(out_path(cfg, "detections.jsonl"), run.detections);
  std::size_t n_large = 0;
  for (const auto& d : run.detections) n_large += d.kind == detect::DetectionKind::large ? 1 : 0;
  detail::write_json(out_path(cfg, "detect_report.json"),
                     {{"tag", artifact_tag(cfg)},
                      {"detector", detector_summary(det)},
                      {"kind", cfg.detect_kind},
                      {"pairs_compared", run.pairs_compared},
                      {"skipped_images", run.skipped_images},
                      {"large", n_large},
                      {"small", run.detections.size() - n_large}});
  if (opts.heatmaps > 0) {
    fs::create_directories(out_path(cfg, "heatmaps"));
    std::set<std::pair<std::string, std::string>> done;
    for (const auto& d : run.detections) {
      if (done.size() >= opts.heatmaps) break;
      if (!done.insert({d.img_a, d.img_b}).second) continue;
      const auto a = src.get().load(d.img_a);
      const auto b = src.get().load(d.img_b);
      if (!a || !b) continue;
      detect::write_heatmap_png(out_path(cfg, "heatmaps") / (d.img_a + "__" + d.img_b + ".png"),
                                detect::heatmap(enc->encode(*a), enc->encode(*b)));
    }
  }
  log << "detect: " << n_large << " large, " << run.detections.size() - n_large << " small over "
      << run.pairs_compared << " pairs\n";
}

/// Pair-level recall / false-positive rate of the large detector against a
/// synthetic ground truth.
json truth_block(const std::vector<detect::Detection>& detections, const synth::GroundTruth& truth) {
  std::set<std::pair<std::string, std::string>> fired;
  for (const auto& d : detections) {
    if (d.kind == detect::DetectionKind::large) fired.insert({d.img_a, d.img_b});
  }
  std::size_t tp = 0, pos = 0, fp = 0, neg = 0;
  for (const auto& c : truth.clusters) {
    for (std::size_t i = 0; i < c.images.size(); ++i) {
      for (std::size_t j = i + 1; j < c.images.size(); ++j) {
        const bool hit = fired.count({c.images[i].id, c.images[j].id}) > 0;
        if (c.straddles_large(i, j)) {
          ++pos;
          tp += hit ? 1 : 0;
        } else if (!c.large_change) {
          ++neg;
          fp += hit ? 1 : 0;
        }
      }
    }
  }
  return {{"positive_pairs", pos},
          {"negative_pairs", neg},
          {"large_recall", pos ? json(static_cast<double>(tp) / static_cast<double>(pos)) : json(nullptr)},
          {"large_fpr", neg ? json(static_cast<double>(fp) / static_cast<double>(neg)) : json(nullptr)},
          {"planted_large_sign", truth.large_sign},
          {"planted_small_sign", truth.small_sign}};
}

void cmd_analyze(const config::PipelineConfig& cfg, std::ostream& log) {
  const auto clusters = load_clusters(cfg);
  const auto det_path = out_path(cfg, "detections.jsonl");
  require(det_path);
  const auto detections = detect::read_detections_jsonl(det_path);
  const auto ind_path = cfg.data_dir / "indicator.csv";
  require(ind_path);
  const auto indicator = analytics::read_indicator_csv(ind_path);
  const auto a = analytics::analyze(detections, clusters, indicator);
  analytics::write_analysis_json(out_path(cfg, "analysis.json"), a);
  for (const auto& b : a.blocks) {
    if (b.target == analytics::Target::rate) {
      analytics::write_scatter_svg(out_path(cfg, "scatter_" + b.kind + ".svg"), b);
    }
  }
  const auto gt_path = cfg.data_dir / "ground_truth.json";
  if (fs::exists(gt_path)) {
    detail::write_json(out_path(cfg, "truth_check.json"), truth_block(detections, synth::read_ground_truth(gt_path)));
  }
  for (const auto& b : a.blocks) {
    log << "analyze: " << b.kind << " " << (b.target == analytics::Target::rate ? "rate" : "count") << " slope "
        << b.fit.slope << " r2 " << b.fit.r2 << " p " << b.fit.p_value << "\n";
  }
}

std::optional<json> read_optional(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return detail::read_json(p);
}

/// Files in the output directory matching prefix*.json, sorted by name.
std::vector<fs::path> matching(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_report(const config::PipelineConfig& cfg, std::ostream& log) {
  if (!fs::is_directory(cfg.output_dir)) throw DataError("output directory " + cfg.output_dir.string() + " does not exist");
  json report = json::object();
  if (auto j = read_optional(out_path(cfg, "cluster_report.json"))) report["clusters"] = *j;
  if (auto j = read_optional(out_path(cfg, "mine_report.json"))) report["mining"] = *j;

  json order = json::object();
  json untrained = json::object();
  json bias = json::object();
  for (const auto& p : matching(cfg.output_dir, "order_")) {
    const auto j = detail::read_json(p);
    const auto tag = j.at("tag").get<std::string>();
    json row = json::object();
    for (const auto& [col, v] : j.at("trained").at("columns").items()) row[col] = v.at("accuracy");
    order[tag] = row;
    json sig = json::object();
    for (const auto& [col, v] : j.at("trained").at("bias").items()) sig[col] = v.at("sigma");
    bias[tag] = sig;
    if (j.contains("untrained")) {
      for (const auto& [col, v] : j.at("untrained").at("columns").items()) untrained[col] = v.at("accuracy");
    }
  }
  if (!order.empty()) report["order_prediction"] = {{"trained", order}, {"untrained", untrained}};
  if (!bias.empty()) report["bias_sigma"] = bias;

  json ablation = json::array();
  for (const auto& p : matching(cfg.output_dir, "train_")) {
    const auto t = detail::read_json(p);
    json row{{"tag", t.at("tag")}, {"si", t.at("si")}, {"margin", t.at("margin")},
             {"cut_and_flip", t.at("cut_and_flip")}, {"best_epoch", t.at("best_epoch")},
             {"val_acc", t.at("best_val_acc")}};
    const auto tag = t.at("tag").get<std::string>();
    if (order.contains(tag) && order[tag].contains(t.at("si").get<std::string>())) {
      row["test_acc"] = order[tag][t.at("si").get<std::string>()];
    }
    ablation.push_back(row);
  }
  if (!ablation.empty()) report["ablation"] = ablation;

  json discrete = json::object();
  for (const auto& p : matching(cfg.output_dir, "discrete_")) {
    const auto j = detail::read_json(p);
    discrete[j.at("tag").get<std::string>()] = j;
  }
  if (!discrete.empty()) report["discrete"] = discrete;
  if (auto j = read_optional(out_path(cfg, "detect_report.json"))) report["detection"] = *j;
  if (auto j = read_optional(out_path(cfg, "analysis.json"))) report["regression"] = (*j)["regression"];
  if (auto j = read_optional(out_path(cfg, "truth_check.json"))) report["synthetic_truth"] = *j;
  if (report.empty()) throw DataError("nothing to report in " + cfg.output_dir.string());

  detail::write_json(out_path(cfg, "report.json"), report);
  log << "report: " << out_path(cfg, "report.json").string() << "\n";
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"synth",  "cluster",       "mine",      "train",
                                                  "eval-order", "finetune", "eval-discrete", "calibrate",
                                                  "detect", "analyze",       "report"};
  return names;
}

std::string artifact_tag(const config::PipelineConfig& cfg) {
  std::string tag = cfg.encoder == "passthrough" ? "passthrough" : cfg.train.si;
  if (cfg.encoder == "toy") {
    if (cfg.train.margin.mode == optim::MarginMode::fixed) tag += "_fixed";
    if (!cfg.train.cut_and_flip) tag += "_nocf";
  }
  return tag;
}

void run_command(const std::string& command, const config::PipelineConfig& cfg, const CommandOptions& opts,
                 std::ostream& log) {
  cfg.validate();
  if (command != "synth" && command != "report") fs::create_directories(cfg.output_dir);
  if (command == "synth") return cmd_synth(cfg, log);
  if (command == "cluster") return cmd_cluster(cfg, log);
  if (command == "mine") return cmd_mine(cfg, log);
  if (command == "train") return cmd_train(cfg, log);
  if (command == "eval-order") return cmd_eval_order(cfg, opts, log);
  if (command == "finetune") return cmd_finetune(cfg, log);
  if (command == "eval-discrete") return cmd_eval_discrete(cfg, opts, log);
  if (command == "calibrate") return cmd_calibrate(cfg, log);
  if (command == "detect") return cmd_detect(cfg, opts, log);
  if (command == "analyze") return cmd_analyze(cfg, log);
  if (command == "report") return cmd_report(cfg, log);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace emplace::pipeline
