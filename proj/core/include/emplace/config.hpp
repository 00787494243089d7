#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emplace/detect.hpp"
#include "emplace/discrete.hpp"
#include "emplace/geo.hpp"
#include "emplace/grid_source.hpp"
#include "emplace/mining.hpp"
#include "emplace/synth.hpp"
#include "emplace/train.hpp"

namespace emplace::config {

/// Flat "section.key" -> value view of an INI file.
using KeyValues = std::map<std::string, std::string>;

struct PipelineConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  geo::BoundingBox bbox;
  geo::ClusteringParams clustering;
  double dilation_m = 5.0;

  model::RasterInputConfig raster;

  std::vector<mining::SIConfig> si_table = mining::builtin_si_configs();
  train::TrainConfig train;
  std::size_t encoder_dim = 16;
  std::string encoder = "toy";  ///< "toy" or "passthrough" (grids are final tokens)

  train::FinetuneConfig finetune;

  detect::DetectorConfig detector;
  std::vector<detect::WindowSize> calibration_windows{{8, 8}};
  std::size_t calibration_runs = 10;
  std::string detect_kind = "both";  ///< large, small or both

  synth::SynthConfig synth;

  /// Throws ConfigError when a value is out of range.
  void validate() const;
};

/// Reads an INI file into section.key pairs (keys outside a section are
/// rejected). Throws ConfigError on a missing or malformed file.
KeyValues read_ini(const std::filesystem::path& path);

/// Builds a configuration from defaults overlaid with `kv`. Unknown keys
/// and unparsable values raise ConfigError.
PipelineConfig from_key_values(const KeyValues& kv);

/// Every recognised key with its default, as an INI document.
std::string default_ini();

/// "8x8" -> {8, 8}.
detect::WindowSize parse_window(const std::string& s);
std::string window_string(detect::WindowSize w);

}  // namespace emplace::config
