#include "emplace/mining.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "emplace/error.hpp"
#include "emplace/rng.hpp"
#include "json_util.hpp"

namespace emplace::mining {

using nlohmann::json;

void SIConfig::validate() const {
  if (ap_min < 1) throw ConfigError(name + ": ap_min must be at least 1 day");
  if (ap_min >= ap_max) throw ConfigError(name + ": ap_min must be below ap_max");
  if (an_min < ap_max) throw ConfigError(name + ": an_min must be at least ap_max");
  if (an_max && *an_max <= an_min) throw ConfigError(name + ": an_max must exceed an_min");
}

bool SIConfig::accepts(const Triplet& t) const {
  return ap_min < t.d_ap && t.d_ap < ap_max && an_min < t.d_an && (!an_max || t.d_an < *an_max);
}

const std::vector<SIConfig>& builtin_si_configs() {
  static const std::vector<SIConfig> table{
      {"SI-1", 1, 31, 375, std::nullopt},
      {"SI-2", 275, 475, 750, std::nullopt},
      {"SI-3", 275, 475, 1125, std::nullopt},
      {"SI-4", 275, 475, 1500, std::nullopt},
      {"SI-Hard", 90, 365, 365, std::nullopt},
  };
  return table;
}

const SIConfig& find_si(const std::string& name, const std::vector<SIConfig>& table) {
  for (const auto& s : table) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown SI setup '" + name + "'");
}

std::vector<Triplet> enumerate_triplets(const geo::Cluster& c) {
  std::vector<const geo::PanoramaMeta*> m;
  for (const auto& p : c.members) m.push_back(&p);
  std::stable_sort(m.begin(), m.end(),
                   [](const auto* a, const auto* b) { return a->timestamp < b->timestamp; });
  std::vector<Triplet> out;
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(m[i]->timestamp < m[j]->timestamp)) continue;
      for (std::size_t k = j + 1; k < n; ++k) {
        if (!(m[j]->timestamp < m[k]->timestamp)) continue;
        Triplet t;
        t.cluster_id = c.cluster_id;
        t.anc = m[i]->id;
        t.pos = m[j]->id;
        t.neg = m[k]->id;
        t.d_ap = m[j]->timestamp - m[i]->timestamp;
        t.d_an = m[k]->timestamp - m[i]->timestamp;
        t.d_pn = m[k]->timestamp - m[j]->timestamp;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::vector<Triplet> filter_triplets(const std::vector<Triplet>& ts, const SIConfig& cfg) {
  cfg.validate();
  std::vector<Triplet> out;
  std::copy_if(ts.begin(), ts.end(), std::back_inserter(out),
               [&](const Triplet& t) { return cfg.accepts(t); });
  return out;
}

std::vector<Triplet> mine(const std::vector<geo::Cluster>& clusters, const SIConfig& cfg) {
  std::vector<Triplet> out;
  for (const auto& c : clusters) {
    auto kept = filter_triplets(enumerate_triplets(c), cfg);
    out.insert(out.end(), std::make_move_iterator(kept.begin()), std::make_move_iterator(kept.end()));
  }
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

Split SplitAssignment::at(const std::string& cluster_id) const {
  auto it = of.find(cluster_id);
  if (it == of.end()) throw DataError("cluster " + cluster_id + " has no split assignment");
  return it->second;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(of.begin(), of.end(), [s](const auto& kv) { return kv.second == s; }));
}

SplitAssignment split_ids(std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const std::size_t n_val = n * 20 / 100;
  const std::size_t n_test = n * 10 / 100;
  const std::size_t n_train = n - n_val - n_test;
  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    out.of[ids[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
  }
  return out;
}

SplitAssignment split_by_cluster(const std::vector<geo::Cluster>& clusters, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(clusters.size());
  for (const auto& c : clusters) ids.push_back(c.cluster_id);
  return split_ids(std::move(ids), seed);
}

std::vector<Triplet> select_split(const std::vector<Triplet>& ts, const SplitAssignment& split,
                                  Split which) {
  std::vector<Triplet> out;
  for (const auto& t : ts) {
    if (split.at(t.cluster_id) == which) out.push_back(t);
  }
  return out;
}

std::int32_t sampling_interval(const std::vector<geo::Cluster>& clusters) {
  if (clusters.empty()) throw DataError("sampling interval needs at least one cluster");
  std::vector<std::int32_t> gaps;
  for (const auto& c : clusters) {
    std::vector<Date> ts;
    for (const auto& m : c.members) ts.push_back(m.timestamp);
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
  }
  if (gaps.empty()) throw DataError("no cluster has two members; sampling interval undefined");
  const std::size_t mid = (gaps.size() - 1) / 2;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
  return gaps[mid];
}

void write_triplets_jsonl(const std::filesystem::path& path, const std::vector<Triplet>& ts,
                          const SplitAssignment* split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : ts) {
    json j{{"cluster_id", t.cluster_id}, {"anc", t.anc},   {"pos", t.pos},  {"neg", t.neg},
           {"d_ap", t.d_ap},             {"d_an", t.d_an}, {"d_pn", t.d_pn}};
    if (split) j["split"] = split_name(split->at(t.cluster_id));
    out << j.dump() << '\n';
  }
}

std::vector<Triplet> read_triplets_jsonl(const std::filesystem::path& path) {
  std::vector<Triplet> out;
  for (const auto& j : detail::read_jsonl(path)) {
    try {
      Triplet t{j.at("cluster_id").get<std::string>(), j.at("anc").get<std::string>(),
                j.at("pos").get<std::string>(),        j.at("neg").get<std::string>(),
                j.at("d_ap").get<std::int32_t>(),      j.at("d_an").get<std::int32_t>(),
                j.at("d_pn").get<std::int32_t>()};
      if (!(t.d_ap > 0 && t.d_ap < t.d_an && t.d_an == t.d_ap + t.d_pn)) {
        throw DataError("triplet in " + path.string() + " violates the gap identities");
      }
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_split(const std::filesystem::path& path, const SplitAssignment& split) {
  json of = json::object();
  for (const auto& [id, s] : split.of) of[id] = split_name(s);
  detail::write_json(path, json{{"seed", split.seed}, {"clusters", of}});
}

SplitAssignment read_split(const std::filesystem::path& path) {
  const json doc = detail::read_json(path);
  SplitAssignment out;
  try {
    out.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& [id, s] : doc.at("clusters").items()) out.of[id] = parse_split(s.get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace emplace::mining
