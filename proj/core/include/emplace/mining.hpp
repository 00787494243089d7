#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emplace/geo.hpp"

namespace emplace::mining {

/// Anchor, positive and negative images ordered strictly by capture date,
/// with the pairwise gaps in days.
struct Triplet {
  std::string cluster_id;
  std::string anc;
  std::string pos;
  std::string neg;
  std::int32_t d_ap = 0;
  std::int32_t d_an = 0;
  std::int32_t d_pn = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Triplet gap constraints. All bounds are exclusive.
struct SIConfig {
  std::string name;
  std::int32_t ap_min = 1;
  std::int32_t ap_max = 31;
  std::int32_t an_min = 375;
  std::optional<std::int32_t> an_max;

  /// Throws ConfigError when ap_min < 1, ap_min >= ap_max or an_min < ap_max.
  void validate() const;
  bool accepts(const Triplet& t) const;
};

/// SI-1..SI-4 and SI-Hard with their published bounds.
const std::vector<SIConfig>& builtin_si_configs();
/// Looks a name up in `table` (defaults to the built-in table).
const SIConfig& find_si(const std::string& name, const std::vector<SIConfig>& table = builtin_si_configs());

/// Every strictly time-increasing triple of members. Members with equal
/// timestamps never share a triplet.
std::vector<Triplet> enumerate_triplets(const geo::Cluster& c);

std::vector<Triplet> filter_triplets(const std::vector<Triplet>& ts, const SIConfig& cfg);

/// Enumerate + filter over many clusters, in cluster order.
std::vector<Triplet> mine(const std::vector<geo::Cluster>& clusters, const SIConfig& cfg);

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct SplitAssignment {
  std::map<std::string, Split> of;
  std::uint64_t seed = 0;

  Split at(const std::string& cluster_id) const;
  std::size_t count(Split s) const;
};

/// Seeded Fisher-Yates shuffle of the sorted cluster ids, then a 70/20/10
/// cut: val and test take the floor of their share, train the remainder.
SplitAssignment split_by_cluster(const std::vector<geo::Cluster>& clusters, std::uint64_t seed);
SplitAssignment split_ids(std::vector<std::string> cluster_ids, std::uint64_t seed);

std::vector<Triplet> select_split(const std::vector<Triplet>& ts, const SplitAssignment& split,
                                  Split which);

/// Lower median of every consecutive capture gap inside each cluster.
/// Throws DataError when no cluster has two members.
std::int32_t sampling_interval(const std::vector<geo::Cluster>& clusters);

void write_triplets_jsonl(const std::filesystem::path& path, const std::vector<Triplet>& ts,
                          const SplitAssignment* split = nullptr);
std::vector<Triplet> read_triplets_jsonl(const std::filesystem::path& path);

void write_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_split(const std::filesystem::path& path);

}  // namespace emplace::mining
